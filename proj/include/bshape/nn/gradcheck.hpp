#pragma once

// Central finite-difference check of the analytic gradients on a reduced
// problem (a few points, one Siamese pair), in double precision.
//
// The loss is piecewise smooth (ReLU, max-pool). A probe whose +-step moves
// any sample across a kink (a ReLU sign flip or a different max-pool winner)
// measures a one-sided mixture, not the gradient, so it is re-drawn.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bshape/nn/loss.hpp"
#include "bshape/nn/network.hpp"
#include "bshape/rng.hpp"

namespace bshape::nn {

struct GradcheckConfig {
  Variant variant = Variant::full;
  int num_points = 8;
  int batch_size = 2;
  int probes = 128;
  double step = 1e-5;
  double pair_weight = 1.0;
  double point_scale = 32.0;
  std::uint64_t seed = 7;
};

struct GradcheckProbe {
  std::string array;
  Eigen::Index index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradcheckResult {
  std::vector<GradcheckProbe> probes;
  double max_rel_error = 0;
  int redrawn = 0;  // probes discarded because the step crossed a kink
};

/// |a - n| / max(|a|, |n|), with both near zero counting as agreement.
inline double relative_error(double a, double n) {
  const double scale = std::max(std::abs(a), std::abs(n));
  if (scale < 1e-10) return 0.0;
  return std::abs(a - n) / scale;
}

inline GradcheckResult run_gradcheck(const GradcheckConfig& cfg) {
  if (cfg.batch_size < 2 || cfg.batch_size % 2 != 0) fail(ErrorCode::ConfigError, "gradcheck batch must be even");
  auto params = init_params<double>(cfg.variant, derive_seed(cfg.seed, {1}));
  // Nonzero biases so that every bias path is exercised.
  {
    auto rng = keyed_engine(cfg.seed, {2});
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& a : params.arrays())
      if (a.cols == 1)
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data[i] = u(rng);
  }
  const Network<double> net(params, cfg.point_scale);
  const int d = output_dim(cfg.variant);
  const auto b = static_cast<std::size_t>(cfg.batch_size);

  auto rng = keyed_engine(cfg.seed, {3});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Cloud<double>> clouds(b);
  std::vector<std::array<double, 2>> tab(b);
  Mat<double> y(static_cast<Eigen::Index>(b), d);
  for (std::size_t s = 0; s < b; ++s) {
    clouds[s].resize(3, cfg.num_points);
    for (Eigen::Index j = 0; j < clouds[s].size(); ++j) clouds[s].data()[j] = 20.0 * gauss(rng);
    tab[s] = {gauss(rng), gauss(rng)};
    for (int c = 0; c < d; ++c) y(static_cast<Eigen::Index>(s), c) = gauss(rng);
  }
  const auto half = static_cast<Eigen::Index>(b / 2);
  const Mat<double> ya = y.topRows(half), yb = y.bottomRows(half);

  auto loss_of = [&](std::vector<SampleTrace<double>>& traces) {
    Mat<double> out(static_cast<Eigen::Index>(b), d);
    for (std::size_t s = 0; s < b; ++s)
      out.row(static_cast<Eigen::Index>(s)) = net.forward(clouds[s], tab[s], &traces[s]).transpose();
    return paired_loss<double>(out.topRows(half), out.bottomRows(half), ya, yb, cfg.pair_weight);
  };
  auto pattern = [](const std::vector<SampleTrace<double>>& traces) {
    std::vector<std::uint8_t> sig;
    auto signs = [&](const auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) sig.push_back(m.data()[i] > 0.0);
    };
    for (const auto& t : traces) {
      for (auto w : t.winners) sig.push_back(static_cast<std::uint8_t>(w));
      for (int s : t.slot) sig.push_back(static_cast<std::uint8_t>(s));
      signs(t.h1), signs(t.h2), signs(t.h3), signs(t.pooled), signs(t.t1), signs(t.t2), signs(t.hidden);
    }
    return sig;
  };

  std::vector<SampleTrace<double>> traces(b), probe_traces(b);
  const auto base = loss_of(traces);
  const auto base_pattern = pattern(traces);
  auto grads = NetworkParams<double>::zeros(cfg.variant);
  for (std::size_t s = 0; s < b; ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    const Vec<double> g = i < half ? Vec<double>(base.grad_a.row(i).transpose())
                                   : Vec<double>(base.grad_b.row(i - half).transpose());
    net.backward(traces[s], g, grads);
  }

  // Probes cycle over the arrays so every one is covered; the entry within
  // an array is random.
  auto pa = params.arrays();
  auto ga = grads.arrays();
  GradcheckResult res;
  auto pick = keyed_engine(cfg.seed, {4});
  const int max_draws = 50 * cfg.probes;
  for (int k = 0, draws = 0; k < cfg.probes;) {
    if (++draws > max_draws) fail(ErrorCode::OutOfRange, "gradcheck: too many probes land on kinks");
    const auto ai = static_cast<std::size_t>(k) % pa.size();
    std::uniform_int_distribution<Eigen::Index> which(0, pa[ai].size() - 1);
    const Eigen::Index idx = which(pick);
    double& theta = pa[ai].data[idx];
    const double saved = theta;
    theta = saved + cfg.step;
    const double up = loss_of(probe_traces).value;
    const bool smooth_up = pattern(probe_traces) == base_pattern;
    theta = saved - cfg.step;
    const double down = loss_of(probe_traces).value;
    const bool smooth_down = pattern(probe_traces) == base_pattern;
    theta = saved;
    if (!smooth_up || !smooth_down) {
      ++res.redrawn;
      continue;
    }
    ++k;
    GradcheckProbe p{pa[ai].name, idx, ga[ai].data[idx], (up - down) / (2.0 * cfg.step), 0.0};
    p.rel_error = relative_error(p.analytic, p.numeric);
    res.max_rel_error = std::max(res.max_rel_error, p.rel_error);
    res.probes.push_back(std::move(p));
  }
  return res;
}

}  // namespace bshape::nn
