#pragma once

// Dual-encoder regressor evaluated on each branch of the Siamese pair.
//
//   point encoder    shared per-point affine+ReLU  3 -> 64 -> 64 -> 128 -> 256, max-pool over points
//   tabular encoder  affine+ReLU                   2 -> 16 -> 32
//   head             affine+ReLU+affine            (256 [+32]) -> 128 -> out
//
// The tabular encoder is the width-1 convolution stack over the two scalar
// descriptors, written as the equivalent dense layers. Variants without the
// tabular modality drop that encoder and feed the head the pooled point
// embedding alone. Variants that regress PCA scores have 5 outputs, the
// others regress all 10 measures.
//
// Points enter the shared layers in lexicographic (x, y, z) order. Blocked
// matrix products round differently depending on a column's position, so
// this canonical order is what makes the output bit-identical under any
// permutation of the input points.
//
// Gradients are exact and hand-written. Max-pool routes each channel's
// gradient to its argmax point (lowest index on ties), so backward only
// touches the few points that won a channel.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bshape/error.hpp"
#include "bshape/rng.hpp"

namespace bshape::nn {

enum class Variant { vanilla, multimodal, pca, full };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::vanilla, Variant::multimodal, Variant::pca,
                                                        Variant::full};

constexpr std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::multimodal: return "multimodal";
    case Variant::pca: return "pca";
    case Variant::full: return "full";
  }
  return "?";
}

inline Variant variant_from_string(std::string_view s) {
  for (auto v : kAllVariants)
    if (to_string(v) == s) return v;
  fail(ErrorCode::ConfigError, "unknown variant '" + std::string(s) + "' (vanilla|multimodal|pca|full)");
}

constexpr bool uses_tabular(Variant v) { return v == Variant::multimodal || v == Variant::full; }
constexpr bool uses_pca(Variant v) { return v == Variant::pca || v == Variant::full; }
constexpr int output_dim(Variant v) { return uses_pca(v) ? 5 : 10; }

inline constexpr std::array<int, 5> kPointWidths = {3, 64, 64, 128, 256};
inline constexpr std::array<int, 3> kTabularWidths = {2, 16, 32};
inline constexpr int kHeadHidden = 128;
inline constexpr int kPointEmbedding = kPointWidths.back();
inline constexpr int kTabularEmbedding = kTabularWidths.back();

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Cloud = Eigen::Matrix<T, 3, Eigen::Dynamic>;

template <typename T>
struct Dense {
  Mat<T> weight;  // out x in
  Vec<T> bias;    // out

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }
};

/// Flat view of one named parameter array (column-major).
template <typename T>
struct ArrayView {
  std::string name;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  std::span<T> span() const { return {data, static_cast<std::size_t>(size())}; }
};

template <typename T>
struct NetworkParams {
  Variant variant = Variant::full;
  std::array<Dense<T>, 4> point;
  std::array<Dense<T>, 2> tabular;  // 0x0 when the variant has no tabular branch
  std::array<Dense<T>, 2> head;

  /// Correctly shaped, all zero.
  static NetworkParams zeros(Variant variant) {
    NetworkParams p;
    p.variant = variant;
    auto shape = [](Dense<T>& d, int in, int out) {
      d.weight.setZero(out, in);
      d.bias.setZero(out);
    };
    for (std::size_t l = 0; l < p.point.size(); ++l) shape(p.point[l], kPointWidths[l], kPointWidths[l + 1]);
    if (uses_tabular(variant))
      for (std::size_t l = 0; l < p.tabular.size(); ++l) shape(p.tabular[l], kTabularWidths[l], kTabularWidths[l + 1]);
    shape(p.head[0], head_input(variant), kHeadHidden);
    shape(p.head[1], kHeadHidden, output_dim(variant));
    return p;
  }

  static constexpr int head_input(Variant v) { return kPointEmbedding + (uses_tabular(v) ? kTabularEmbedding : 0); }

  /// Every parameter array in a fixed order with a stable name.
  std::vector<ArrayView<T>> arrays() {
    std::vector<ArrayView<T>> out;
    auto add = [&](const std::string& prefix, Dense<T>& d) {
      out.push_back({prefix + ".weight", d.weight.data(), d.weight.rows(), d.weight.cols()});
      out.push_back({prefix + ".bias", d.bias.data(), d.bias.rows(), 1});
    };
    for (std::size_t l = 0; l < point.size(); ++l) add("point." + std::to_string(l), point[l]);
    if (uses_tabular(variant))
      for (std::size_t l = 0; l < tabular.size(); ++l) add("tabular." + std::to_string(l), tabular[l]);
    for (std::size_t l = 0; l < head.size(); ++l) add("head." + std::to_string(l), head[l]);
    return out;
  }

  std::vector<ArrayView<const T>> arrays() const {
    std::vector<ArrayView<const T>> out;
    for (auto& a : const_cast<NetworkParams*>(this)->arrays()) out.push_back({a.name, a.data, a.rows, a.cols});
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& a : arrays()) n += static_cast<std::size_t>(a.size());
    return n;
  }

  template <typename U>
  NetworkParams<U> cast() const {
    NetworkParams<U> p;
    p.variant = variant;
    auto conv = [](const Dense<T>& src, Dense<U>& dst) {
      dst.weight = src.weight.template cast<U>();
      dst.bias = src.bias.template cast<U>();
    };
    for (std::size_t l = 0; l < point.size(); ++l) conv(point[l], p.point[l]);
    for (std::size_t l = 0; l < tabular.size(); ++l) conv(tabular[l], p.tabular[l]);
    for (std::size_t l = 0; l < head.size(); ++l) conv(head[l], p.head[l]);
    return p;
  }

  void set_zero() {
    for (auto& a : arrays()) std::fill(a.data, a.data + a.size(), T(0));
  }
};

/// He-uniform (fan-in) weights, zero biases.
template <typename T>
NetworkParams<T> init_params(Variant variant, std::uint64_t seed) {
  auto p = NetworkParams<T>::zeros(variant);
  std::uint64_t layer = 0;
  for (auto& a : p.arrays()) {
    ++layer;
    if (a.cols == 1) continue;  // bias
    const double bound = std::sqrt(6.0 / static_cast<double>(a.cols));
    auto rng = keyed_engine(seed, {0x1417ULL, layer});
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data[i] = static_cast<T>(dist(rng));
  }
  return p;
}

/// What backward needs from one forward pass: the point columns that won at
/// least one pooled channel (indices in canonical order), and the small dense
/// activations.
template <typename T>
struct SampleTrace {
  std::vector<Eigen::Index> winners;  // distinct argmax columns, ascending
  std::array<int, kPointEmbedding> slot{};  // channel -> index into winners
  Mat<T> x, h1, h2, h3;  // columns gathered at winners
  Vec<T> pooled;         // relu(max_n z4)
  Vec<T> tab_in, t1, t2;
  Vec<T> fused, hidden;
};

template <typename T>
class Network {
 public:
  /// Both branches of a Siamese pair run through the same Network, so the
  /// weights they use are one set of arrays, not copies.
  explicit Network(const NetworkParams<T>& params, T point_scale = T(1)) : params_(&params), point_scale_(point_scale) {}

  const NetworkParams<T>& params() const { return *params_; }
  Variant variant() const { return params_->variant; }
  T point_scale() const { return point_scale_; }

  /// One sample. `tabular` is ignored by variants without that modality and
  /// required by the others.
  Vec<T> forward(const Cloud<T>& points, std::span<const T> tabular, SampleTrace<T>* trace = nullptr) const {
    const auto& p = *params_;
    const Eigen::Index n = points.cols();
    if (n < 1) fail(ErrorCode::ShapeMismatch, "point cloud has no points");
    if (n > (Eigen::Index{1} << 24)) fail(ErrorCode::ShapeMismatch, "point cloud exceeds 2^24 points");
    if (uses_tabular(p.variant) && tabular.size() != static_cast<std::size_t>(kTabularWidths[0]))
      fail(ErrorCode::ShapeMismatch, "variant needs " + std::to_string(kTabularWidths[0]) + " tabular values, got " +
                                         std::to_string(tabular.size()));

    auto& ws = workspace();
    ws.order.resize(static_cast<std::size_t>(n));
    std::iota(ws.order.begin(), ws.order.end(), Eigen::Index{0});
    std::sort(ws.order.begin(), ws.order.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (int i = 0; i < 3; ++i)
        if (points(i, a) != points(i, b)) return points(i, a) < points(i, b);
      return false;
    });
    ws.x.resize(3, n);
    for (Eigen::Index j = 0; j < n; ++j)  // + 0 maps -0 to +0
      ws.x.col(j) = points.col(ws.order[static_cast<std::size_t>(j)]).array() / point_scale_ + T(0);
    relu_affine(p.point[0], ws.x, ws.h1);
    relu_affine(p.point[1], ws.h1, ws.h2);
    relu_affine(p.point[2], ws.h2, ws.h3);
    ws.z4.noalias() = p.point[3].weight * ws.h3;

    // Running max over points; strict '>' keeps the lowest column on ties.
    // The last bias is constant per channel, so it is added after the max.
    auto& best = ws.best;
    auto& arg = ws.arg;
    best = ws.z4.col(0);
    std::fill(arg.begin(), arg.end(), T(0));
    for (Eigen::Index j = 1; j < n; ++j) {
      const T* col = ws.z4.col(j).data();
      const T jj = static_cast<T>(j);
      for (int c = 0; c < kPointEmbedding; ++c) {
        const bool up = col[c] > best[c];
        best[c] = up ? col[c] : best[c];
        arg[static_cast<std::size_t>(c)] = up ? jj : arg[static_cast<std::size_t>(c)];
      }
    }
    Vec<T> pooled = (best + p.point[3].bias).cwiseMax(T(0));

    Vec<T> fused(NetworkParams<T>::head_input(p.variant));
    fused.head(kPointEmbedding) = pooled;
    Vec<T> tab_in, t1, t2;
    if (uses_tabular(p.variant)) {
      tab_in = Eigen::Map<const Vec<T>>(tabular.data(), kTabularWidths[0]);
      t1 = (p.tabular[0].weight * tab_in + p.tabular[0].bias).cwiseMax(T(0));
      t2 = (p.tabular[1].weight * t1 + p.tabular[1].bias).cwiseMax(T(0));
      fused.tail(kTabularEmbedding) = t2;
    }
    Vec<T> hidden = (p.head[0].weight * fused + p.head[0].bias).cwiseMax(T(0));
    Vec<T> out = p.head[1].weight * hidden + p.head[1].bias;

    if (trace) {
      auto& tr = *trace;
      tr.winners.resize(kPointEmbedding);
      for (int c = 0; c < kPointEmbedding; ++c)
        tr.winners[static_cast<std::size_t>(c)] = static_cast<Eigen::Index>(arg[static_cast<std::size_t>(c)]);
      std::sort(tr.winners.begin(), tr.winners.end());
      tr.winners.erase(std::unique(tr.winners.begin(), tr.winners.end()), tr.winners.end());
      for (int c = 0; c < kPointEmbedding; ++c)
        tr.slot[static_cast<std::size_t>(c)] = static_cast<int>(
            std::lower_bound(tr.winners.begin(), tr.winners.end(),
                             static_cast<Eigen::Index>(arg[static_cast<std::size_t>(c)])) -
            tr.winners.begin());
      tr.x = ws.x(Eigen::all, tr.winners);
      tr.h1 = ws.h1(Eigen::all, tr.winners);
      tr.h2 = ws.h2(Eigen::all, tr.winners);
      tr.h3 = ws.h3(Eigen::all, tr.winners);
      tr.pooled = std::move(pooled);
      tr.tab_in = std::move(tab_in);
      tr.t1 = std::move(t1);
      tr.t2 = std::move(t2);
      tr.fused = std::move(fused);
      tr.hidden = std::move(hidden);
    }
    return out;
  }

  /// Accumulate d(loss)/d(params) into `grads` given d(loss)/d(output) for a
  /// traced sample.
  void backward(const SampleTrace<T>& tr, const Vec<T>& d_out, NetworkParams<T>& grads) const {
    const auto& p = *params_;
    if (d_out.size() != p.head[1].out()) fail(ErrorCode::ShapeMismatch, "output gradient has the wrong size");

    grads.head[1].weight.noalias() += d_out * tr.hidden.transpose();
    grads.head[1].bias += d_out;
    const Vec<T> d_hidden = (p.head[1].weight.transpose() * d_out).cwiseProduct(positive(tr.hidden));
    grads.head[0].weight.noalias() += d_hidden * tr.fused.transpose();
    grads.head[0].bias += d_hidden;
    const Vec<T> d_fused = p.head[0].weight.transpose() * d_hidden;

    if (uses_tabular(p.variant)) {
      const Vec<T> d_t2 = d_fused.tail(kTabularEmbedding).cwiseProduct(positive(tr.t2));
      grads.tabular[1].weight.noalias() += d_t2 * tr.t1.transpose();
      grads.tabular[1].bias += d_t2;
      const Vec<T> d_t1 = (p.tabular[1].weight.transpose() * d_t2).cwiseProduct(positive(tr.t1));
      grads.tabular[0].weight.noalias() += d_t1 * tr.tab_in.transpose();
      grads.tabular[0].bias += d_t1;
    }

    const Vec<T> d_pooled = d_fused.head(kPointEmbedding).cwiseProduct(positive(tr.pooled));
    const auto w = static_cast<Eigen::Index>(tr.winners.size());
    Mat<T> d4 = Mat<T>::Zero(kPointEmbedding, w);
    for (int c = 0; c < kPointEmbedding; ++c) d4(c, tr.slot[static_cast<std::size_t>(c)]) = d_pooled[c];

    grads.point[3].weight.noalias() += d4 * tr.h3.transpose();
    grads.point[3].bias += d4.rowwise().sum();
    Mat<T> d3 = (p.point[3].weight.transpose() * d4).cwiseProduct(positive(tr.h3));
    grads.point[2].weight.noalias() += d3 * tr.h2.transpose();
    grads.point[2].bias += d3.rowwise().sum();
    Mat<T> d2 = (p.point[2].weight.transpose() * d3).cwiseProduct(positive(tr.h2));
    grads.point[1].weight.noalias() += d2 * tr.h1.transpose();
    grads.point[1].bias += d2.rowwise().sum();
    Mat<T> d1 = (p.point[1].weight.transpose() * d2).cwiseProduct(positive(tr.h1));
    grads.point[0].weight.noalias() += d1 * tr.x.transpose();
    grads.point[0].bias += d1.rowwise().sum();
  }

 private:
  struct Workspace {
    std::vector<Eigen::Index> order;
    Mat<T> x, h1, h2, h3, z4;
    Vec<T> best;
    std::array<T, kPointEmbedding> arg{};  // column index stored in T, exact below 2^24
  };

  static Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
  }

  static void relu_affine(const Dense<T>& layer, const Mat<T>& in, Mat<T>& out) {
    out.noalias() = layer.weight * in;
    out = (out.colwise() + layer.bias).cwiseMax(T(0));
  }

  template <typename Derived>
  static auto positive(const Eigen::MatrixBase<Derived>& h) {
    using S = typename Derived::Scalar;
    return (h.array() > S(0)).template cast<S>().matrix();
  }

  const NetworkParams<T>* params_;
  T point_scale_;
};

}  // namespace bshape::nn
