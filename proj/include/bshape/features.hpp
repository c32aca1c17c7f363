#pragma once

// Network inputs derived from a bundle: a fixed-size point cloud and the two
// raw-file descriptors (streamline and point counts).
//
// Point clouds are centred on their own centroid but never rescaled: the
// targets (length, volume, ...) depend on absolute scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <random>
#include <ranges>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"
#include "bshape/rng.hpp"

namespace bshape {

inline constexpr std::size_t kDefaultNumPoints = 1024;
inline constexpr std::size_t kNumTabular = 2;

/// One column per sampled point.
using PointCloud = Eigen::Matrix3Xd;

/// Indices of `n` points drawn from `total`: without replacement when
/// total >= n, otherwise with replacement.
inline std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorCode::OutOfRange, "number of sampled points must be >= 1");
  if (total == 0) fail(ErrorCode::InvalidBundle, "cannot sample from an empty bundle");
  std::mt19937_64 rng(mix64(seed));
  std::vector<std::size_t> idx;
  idx.reserve(n);
  if (total >= n) {
    if (total > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::OutOfRange, "bundle has too many points");
    const auto all = std::views::iota(std::uint32_t{0}, static_cast<std::uint32_t>(total));
    idx.resize(n);
    std::ranges::sample(all, idx.begin(), static_cast<std::ptrdiff_t>(n), rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (std::size_t k = 0; k < n; ++k) idx.push_back(pick(rng));
  }
  return idx;
}

/// Gather `indices` from a flat 3xM point matrix and subtract their centroid.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, Eigen::Dynamic> gather_centered(const Eigen::MatrixBase<Derived>& points,
                                                                           std::span<const std::size_t> indices) {
  using T = typename Derived::Scalar;
  Eigen::Matrix<T, 3, Eigen::Dynamic> out(3, static_cast<Eigen::Index>(indices.size()));
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = points.col(static_cast<Eigen::Index>(indices[k]));
    centroid += out.col(static_cast<Eigen::Index>(k)).template cast<double>();
  }
  centroid /= static_cast<double>(indices.size());
  out.colwise() -= centroid.cast<T>();
  return out;
}

/// All bundle points as one 3xNoP matrix in file order.
template <typename T = double>
Eigen::Matrix<T, 3, Eigen::Dynamic> flatten_points(const Bundle& b) {
  Eigen::Matrix<T, 3, Eigen::Dynamic> out(3, static_cast<Eigen::Index>(b.num_points()));
  Eigen::Index k = 0;
  for (const auto& s : b.streamlines)
    for (const auto& p : s) out.col(k++) = p.cast<T>();
  return out;
}

inline PointCloud sample_points(const Bundle& bundle, std::size_t n, std::uint64_t seed) {
  const auto flat = flatten_points(bundle);
  const auto idx = sample_indices(static_cast<std::size_t>(flat.cols()), n, seed);
  return gather_centered(flat, idx);
}

struct Tabular {
  double nos = 0;
  double nop = 0;
  std::array<double, kNumTabular> as_array() const { return {nos, nop}; }
  friend bool operator==(const Tabular&, const Tabular&) = default;
};

/// NoS and NoP of the raw bundle (before any sampling).
inline Tabular extract_tabular(const Bundle& bundle) {
  return {static_cast<double>(bundle.num_streamlines()), static_cast<double>(bundle.num_points())};
}

/// Column-wise z-score with population standard deviation, fitted on the
/// training split.
struct TabStandardizer {
  std::array<double, kNumTabular> mean{};
  std::array<double, kNumTabular> sd{1.0, 1.0};

  static TabStandardizer fit(std::span<const Tabular> rows) {
    if (rows.size() < 2) fail(ErrorCode::ZeroVariance, "need at least two rows to fit a standardizer");
    TabStandardizer s;
    for (std::size_t c = 0; c < kNumTabular; ++c) {
      double sum = 0;
      for (const auto& r : rows) sum += r.as_array()[c];
      const double mean = sum / static_cast<double>(rows.size());
      double ss = 0;
      for (const auto& r : rows) ss += (r.as_array()[c] - mean) * (r.as_array()[c] - mean);
      const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
      if (!(sd > 0.0)) fail(ErrorCode::ZeroVariance, "tabular column " + std::to_string(c) + " is constant");
      s.mean[c] = mean;
      s.sd[c] = sd;
    }
    return s;
  }

  std::array<double, kNumTabular> apply(const Tabular& row) const {
    const auto a = row.as_array();
    std::array<double, kNumTabular> out{};
    for (std::size_t c = 0; c < kNumTabular; ++c) out[c] = (a[c] - mean[c]) / sd[c];
    return out;
  }
};

}  // namespace bshape
