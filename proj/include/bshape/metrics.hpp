#pragma once

// Evaluation metrics and the statistics used to compare models.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bshape/error.hpp"
#include "bshape/io.hpp"
#include "bshape/shape.hpp"

namespace bshape {

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::ShapeMismatch, "metric inputs differ in length");
  if (x.size() < 2) fail(ErrorCode::ZeroVariance, "metric needs at least two observations");
}

inline double mean(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace detail

/// Sample (Pearson) correlation coefficient.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const double mx = detail::mean(x), my = detail::mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) fail(ErrorCode::ZeroVariance, "correlation of a constant vector is undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Mean squared error divided by the population variance of the ground
/// truth. 0 is perfect, 1 matches predicting the mean, and worse predictors
/// exceed 1.
inline double nmse(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth);
  const double m = detail::mean(truth);
  double var = 0, mse = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    var += (truth[i] - m) * (truth[i] - m);
    mse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  }
  if (!(var > 0.0)) fail(ErrorCode::ZeroVariance, "ground truth is constant");
  return mse / var;
}

/// Fisher r-to-z.
inline double fisher_z(double r) {
  if (!(std::abs(r) < 1.0)) fail(ErrorCode::OutOfRange, "Fisher z needs |r| < 1");
  return std::atanh(r);
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-10;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail(ErrorCode::OutOfRange, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) fail(ErrorCode::OutOfRange, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::OutOfRange, "incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

struct TTest {
  double t = 0;
  double dof = 0;
  double p = 1;  // two-sided
};

/// Paired t-test on a - b.
inline TTest paired_t(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b);
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double md = detail::mean(d);
  double ss = 0;
  for (double v : d) ss += (v - md) * (v - md);
  const double sd = std::sqrt(ss / (n - 1.0));
  TTest out;
  out.dof = n - 1.0;
  if (!(sd > 0.0)) {
    if (md == 0.0) return out;  // identical samples: t = 0, p = 1
    fail(ErrorCode::ZeroVarianceDiffs, "differences are constant and nonzero");
  }
  out.t = md / (sd / std::sqrt(n));
  out.p = incomplete_beta(out.dof / 2.0, 0.5, out.dof / (out.dof + out.t * out.t));
  return out;
}

struct MeanSd {
  double mean = 0;
  double sd = 0;  // population
};

inline MeanSd mean_sd(std::span<const double> x) {
  MeanSd s;
  s.mean = detail::mean(x);
  double ss = 0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(x.size()));
  return s;
}

inline std::string format_mean_sd(const MeanSd& s, int precision = 3) {
  return format_fixed(s.mean, precision) + "±" + format_fixed(s.sd, precision);
}

/// Per-measure Pearson r and nMSE over a set of test bundles, pooled across
/// subjects.
struct EvalReport {
  std::string variant;
  std::size_t n = 0;
  std::array<double, kNumMeasures> r{};
  std::array<double, kNumMeasures> nmse{};

  MeanSd r_summary() const { return mean_sd(r); }
  MeanSd nmse_summary() const { return mean_sd(nmse); }
};

/// Rows are bundles, columns the ten measures.
inline EvalReport evaluate(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, std::string variant) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and ground-truth tables differ in shape");
  if (truth.cols() != static_cast<Eigen::Index>(kNumMeasures))
    fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(kNumMeasures) + " measure columns");
  EvalReport rep;
  rep.variant = std::move(variant);
  rep.n = static_cast<std::size_t>(truth.rows());
  for (std::size_t c = 0; c < kNumMeasures; ++c) {
    const Eigen::VectorXd p = pred.col(static_cast<Eigen::Index>(c));
    const Eigen::VectorXd t = truth.col(static_cast<Eigen::Index>(c));
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    const std::span<const double> ts(t.data(), static_cast<std::size_t>(t.size()));
    rep.r[c] = pearson_r(ps, ts);
    rep.nmse[c] = nmse(ps, ts);
  }
  return rep;
}

inline std::string report_to_csv(const EvalReport& rep, std::string_view provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += "# " + std::string(provenance) + "\n";
  out += "# variant=" + rep.variant + " n=" + std::to_string(rep.n) + "\n";
  out += "measure,pearson_r,nmse\n";
  for (std::size_t c = 0; c < kNumMeasures; ++c)
    out += std::string(kMeasureNames[c]) + "," + format_fixed(rep.r[c], 6) + "," + format_fixed(rep.nmse[c], 6) + "\n";
  out += "average," + format_mean_sd(rep.r_summary(), 6) + "," + format_mean_sd(rep.nmse_summary(), 6) + "\n";
  return out;
}

/// Ablation layout: one row per measure, one column per model, trailing
/// average row. `use_r` selects Pearson r, otherwise nMSE.
inline std::string ablation_table_csv(std::span<const EvalReport> reports, bool use_r,
                                      std::string_view provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += "# " + std::string(provenance) + "\n";
  out += use_r ? "# metric=pearson_r\n" : "# metric=nmse\n";
  out += "shape";
  for (const auto& r : reports) out += "," + r.variant;
  out += "\n";
  for (std::size_t c = 0; c < kNumMeasures; ++c) {
    out += kMeasureNames[c];
    for (const auto& r : reports) out += "," + format_fixed(use_r ? r.r[c] : r.nmse[c], 3);
    out += "\n";
  }
  out += "average";
  for (const auto& r : reports) out += "," + format_mean_sd(use_r ? r.r_summary() : r.nmse_summary(), 3);
  out += "\n";
  return out;
}

}  // namespace bshape
