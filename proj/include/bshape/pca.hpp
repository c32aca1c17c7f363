#pragma once

// PCA of the ten shape measures. Columns are z-scored on the training split
// (population sd) and the standardized matrix is decomposed by SVD; principal
// axes are the right singular vectors, each flipped so that its largest
// magnitude loading is positive. That sign rule makes a fit reproducible
// byte for byte.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "bshape/error.hpp"
#include "bshape/io.hpp"
#include "bshape/shape.hpp"

namespace bshape {

inline constexpr int kDefaultComponents = 5;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct PcaModel {
  RowVector feature_mean;   // 10
  RowVector feature_sd;     // 10
  Matrix components;        // k x 10, orthonormal rows
  Vector explained_variance;        // k, sigma_i^2 / n
  Vector explained_variance_ratio;  // k
  Vector spectrum_ratio;            // every singular value, sums to 1
  Vector score_sd;                  // k, sd of training scores
  bool rank_deficient = false;

  int num_components() const { return static_cast<int>(components.rows()); }
  int num_features() const { return static_cast<int>(components.cols()); }

  /// ((rows - mean) / sd) * components^T
  Matrix transform(const Matrix& rows) const {
    check_width(rows.cols(), num_features());
    return standardize_features(rows) * components.transpose();
  }

  /// (scores * components) * sd + mean
  Matrix inverse_transform(const Matrix& scores) const {
    check_width(scores.cols(), num_components());
    Matrix z = scores * components;
    return unstandardize_features(z);
  }

  Matrix standardize_scores(const Matrix& scores) const {
    check_width(scores.cols(), num_components());
    return scores.array().rowwise() / score_sd.transpose().array();
  }

  Matrix unstandardize_scores(const Matrix& scores) const {
    check_width(scores.cols(), num_components());
    return scores.array().rowwise() * score_sd.transpose().array();
  }

  Matrix standardize_features(const Matrix& rows) const {
    check_width(rows.cols(), num_features());
    return (rows.rowwise() - feature_mean).array().rowwise() / feature_sd.array();
  }

  Matrix unstandardize_features(const Matrix& z) const {
    check_width(z.cols(), num_features());
    return (z.array().rowwise() * feature_sd.array()).matrix().rowwise() + feature_mean;
  }

 private:
  static void check_width(Eigen::Index got, int want) {
    if (got != want)
      fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(want) + " columns, got " + std::to_string(got));
  }
};

/// Rank tolerance relative to the leading singular value.
inline constexpr double kRankTolerance = 1e-10;

inline PcaModel fit_pca(const Matrix& data, int k = kDefaultComponents) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (n < 2) fail(ErrorCode::ZeroVarianceColumn, "PCA needs at least two rows");
  if (k < 1 || k > d) fail(ErrorCode::OutOfRange, "number of components must lie in [1, " + std::to_string(d) + "]");
  if (!data.allFinite()) fail(ErrorCode::OutOfRange, "PCA input has non-finite entries");

  PcaModel m;
  m.feature_mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - m.feature_mean;
  m.feature_sd = (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt().matrix();
  for (Eigen::Index c = 0; c < d; ++c)
    if (!(m.feature_sd[c] > 0.0)) fail(ErrorCode::ZeroVarianceColumn, "column " + std::to_string(c) + " is constant");

  const Matrix z = centered.array().rowwise() / m.feature_sd.array();
  Eigen::JacobiSVD<Matrix> svd(z, Eigen::ComputeFullV);
  const Vector sigma = svd.singularValues();
  const Matrix& v = svd.matrixV();

  m.components.resize(k, d);
  for (int i = 0; i < k; ++i) {
    RowVector axis = v.col(i).transpose();
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    m.components.row(i) = axis;
  }

  const double total = sigma.squaredNorm();
  m.spectrum_ratio = sigma.array().square() / total;
  m.explained_variance = Vector::Zero(k);
  m.explained_variance_ratio = Vector::Zero(k);
  m.score_sd = Vector::Ones(k);
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma[i] > kRankTolerance * sigma[0]) ++rank;
  m.rank_deficient = rank < k;
  for (int i = 0; i < k; ++i) {
    const double s = i < sigma.size() ? sigma[i] : 0.0;
    m.explained_variance[i] = s * s / static_cast<double>(n);
    m.explained_variance_ratio[i] = s * s / total;
    // Null directions keep unit scale so standardization stays invertible.
    if (i < rank) m.score_sd[i] = std::sqrt(m.explained_variance[i]);
  }
  return m;
}

inline Matrix measures_matrix(const std::vector<ShapeMeasures>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumMeasures));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto a = rows[i].as_array();
    for (std::size_t c = 0; c < kNumMeasures; ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = a[c];
  }
  return out;
}

/// CSV export for inspection (and exact reload: numbers are written
/// shortest-round-trip). Rows: mean, sd, pc1..pck, then one "spectrum" row
/// per singular value carrying its share of the total variance.
inline std::string pca_to_csv(const PcaModel& m, std::string_view provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += "# " + std::string(provenance) + "\n";
  out += "row";
  for (const auto& name : kMeasureNames) out += "," + std::string(name);
  out += ",explained_variance,explained_variance_ratio,score_sd,spectrum_ratio\n";
  auto emit = [&](const std::string& label, const RowVector& values, const std::string& tail) {
    out += label;
    for (Eigen::Index c = 0; c < values.size(); ++c) out += "," + format_double(values[c]);
    out += tail + "\n";
  };
  emit("mean", m.feature_mean, ",,,,");
  emit("sd", m.feature_sd, ",,,,");
  for (int i = 0; i < m.num_components(); ++i)
    emit("pc" + std::to_string(i + 1), m.components.row(i),
         "," + format_double(m.explained_variance[i]) + "," + format_double(m.explained_variance_ratio[i]) + "," +
             format_double(m.score_sd[i]) + ",");
  for (Eigen::Index i = 0; i < m.spectrum_ratio.size(); ++i)
    out += "spectrum" + std::string(kNumMeasures, ',') + ",,,," + format_double(m.spectrum_ratio[i]) + "\n";
  return out;
}

inline PcaModel pca_from_csv(std::string_view text) {
  const auto table = parse_csv(text);
  auto num = [](const std::string& s) {
    double v = 0;
    if (!parse_double(s, v)) fail(ErrorCode::IoError, "bad number '" + s + "' in PCA file");
    return v;
  };
  const auto c_ev = table.column("explained_variance");
  const auto c_ratio = table.column("explained_variance_ratio");
  const auto c_sd = table.column("score_sd");
  const auto c_spec = table.column("spectrum_ratio");
  PcaModel m;
  m.feature_mean.resize(kNumMeasures);
  m.feature_sd.resize(kNumMeasures);
  std::vector<RowVector> comps;
  std::vector<double> ev, ratio, ssd, spectrum;
  for (const auto& r : table.rows) {
    RowVector values(static_cast<Eigen::Index>(kNumMeasures));
    if (r[0] != "spectrum")
      for (std::size_t c = 0; c < kNumMeasures; ++c) values[static_cast<Eigen::Index>(c)] = num(r[c + 1]);
    if (!r[c_spec].empty()) spectrum.push_back(num(r[c_spec]));
    if (r[0] == "mean") {
      m.feature_mean = values;
    } else if (r[0] == "sd") {
      m.feature_sd = values;
    } else if (r[0].starts_with("pc")) {
      comps.push_back(values);
      ev.push_back(num(r[c_ev]));
      ratio.push_back(num(r[c_ratio]));
      ssd.push_back(num(r[c_sd]));
    }
  }
  if (comps.empty()) fail(ErrorCode::IoError, "PCA file has no components");
  const auto k = static_cast<Eigen::Index>(comps.size());
  m.components.resize(k, static_cast<Eigen::Index>(kNumMeasures));
  m.explained_variance.resize(k);
  m.explained_variance_ratio.resize(k);
  m.score_sd.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    m.components.row(i) = comps[static_cast<std::size_t>(i)];
    m.explained_variance[i] = ev[static_cast<std::size_t>(i)];
    m.explained_variance_ratio[i] = ratio[static_cast<std::size_t>(i)];
    m.score_sd[i] = ssd[static_cast<std::size_t>(i)];
  }
  m.spectrum_ratio = Eigen::Map<const Vector>(spectrum.data(), static_cast<Eigen::Index>(spectrum.size()));
  m.rank_deficient = false;
  for (Eigen::Index i = 0; i < k; ++i)
    if (i >= m.spectrum_ratio.size() || m.spectrum_ratio[i] <= kRankTolerance * kRankTolerance * m.spectrum_ratio[0])
      m.rank_deficient = true;
  return m;
}

}  // namespace bshape
