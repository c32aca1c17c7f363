#pragma once

// Siamese training loop and the prediction path.
//
// Each epoch shuffles the training set with a seeded permutation and cuts it
// into batches. A batch of size B is split into halves A and B; sample i of
// half A is paired with sample i of half B. Both halves run through the same
// Network, the paired loss is evaluated, gradients are accumulated sample by
// sample in batch order, and one Adam step is taken. Point clouds are redrawn
// every epoch from keyed seeds, so a run is a pure function of its config.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"
#include "bshape/features.hpp"
#include "bshape/io.hpp"
#include "bshape/nn/loss.hpp"
#include "bshape/nn/network.hpp"
#include "bshape/nn/optim.hpp"
#include "bshape/pca.hpp"
#include "bshape/rng.hpp"
#include "bshape/shape.hpp"

namespace bshape::nn {

enum class StepUnit { step, epoch };

inline std::string_view to_string(StepUnit u) { return u == StepUnit::step ? "step" : "epoch"; }

struct TrainConfig {
  Variant variant = Variant::full;
  int batch_size = 32;
  int epochs = 300;
  double lr = 1e-3;
  int lr_period = 200;
  double lr_gamma = 0.1;
  StepUnit lr_step_unit = StepUnit::step;
  double weight_decay = 0.005;
  double pair_weight = 1.0;
  int num_points = 512;
  double point_scale = 32.0;
  int pca_components = kDefaultComponents;
  bool standardize_scores = true;
  std::uint64_t seed = 7;

  void check() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::ConfigError, m); };
    if (batch_size < 2 || batch_size % 2 != 0) bad("batch_size must be even and >= 2");
    if (epochs < 1) bad("epochs must be >= 1");
    if (!(lr > 0.0)) bad("lr must be > 0");
    if (lr_period < 1) bad("lr_period must be >= 1");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) bad("lr_gamma must lie in (0, 1]");
    if (!(weight_decay >= 0.0)) bad("weight_decay must be >= 0");
    if (!(pair_weight >= 0.0)) bad("pair_weight must be >= 0");
    if (num_points < 1) bad("num_points must be >= 1");
    if (!(point_scale > 0.0)) bad("point_scale must be > 0");
    if (pca_components < 1 || pca_components > static_cast<int>(kNumMeasures)) bad("pca_components must lie in [1, 10]");
    if (uses_pca(variant) && pca_components != output_dim(variant))
      bad("pca/full variants regress " + std::to_string(output_dim(variant)) + " scores; pca_components must match");
  }

  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> items() const {
    return {
        {"variant", std::string(to_string(variant))},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"lr", format_double(lr)},
        {"lr_period", std::to_string(lr_period)},
        {"lr_gamma", format_double(lr_gamma)},
        {"lr_step_unit", std::string(to_string(lr_step_unit))},
        {"weight_decay", format_double(weight_decay)},
        {"pair_weight", format_double(pair_weight)},
        {"num_points", std::to_string(num_points)},
        {"point_scale", format_double(point_scale)},
        {"pca_components", std::to_string(pca_components)},
        {"standardize_scores", standardize_scores ? "true" : "false"},
        {"seed", std::to_string(seed)},
    };
  }

  /// Returns false for an unknown key; throws ConfigError on a bad value.
  bool set(std::string_view key, std::string_view value) {
    auto bad = [&]() -> void {
      fail(ErrorCode::ConfigError, "bad value '" + std::string(value) + "' for " + std::string(key));
    };
    auto as_int = [&](int& out) {
      const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size()) bad();
    };
    auto as_real = [&](double& out) {
      if (!parse_double(value, out)) bad();
    };
    if (key == "variant") {
      variant = variant_from_string(value);
    } else if (key == "batch_size") {
      as_int(batch_size);
    } else if (key == "epochs") {
      as_int(epochs);
    } else if (key == "lr") {
      as_real(lr);
    } else if (key == "lr_period") {
      as_int(lr_period);
    } else if (key == "lr_gamma") {
      as_real(lr_gamma);
    } else if (key == "lr_step_unit") {
      if (value == "step") lr_step_unit = StepUnit::step;
      else if (value == "epoch") lr_step_unit = StepUnit::epoch;
      else bad();
    } else if (key == "weight_decay") {
      as_real(weight_decay);
    } else if (key == "pair_weight") {
      as_real(pair_weight);
    } else if (key == "num_points") {
      as_int(num_points);
    } else if (key == "point_scale") {
      as_real(point_scale);
    } else if (key == "pca_components") {
      as_int(pca_components);
    } else if (key == "standardize_scores") {
      if (value == "true") standardize_scores = true;
      else if (value == "false") standardize_scores = false;
      else bad();
    } else if (key == "seed") {
      const auto r = std::from_chars(value.data(), value.data() + value.size(), seed);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size()) bad();
    } else {
      return false;
    }
    return true;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : items()) out += k + "=" + v + "\n";
    return out;
  }

  static TrainConfig from_text(std::string_view text) {
    TrainConfig cfg;
    for (const auto& raw : split(text, '\n')) {
      const auto line = trim(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(ErrorCode::ConfigError, "expected key=value, got '" + std::string(line) + "'");
      const auto key = trim(line.substr(0, eq));
      if (!cfg.set(key, trim(line.substr(eq + 1)))) fail(ErrorCode::ConfigError, "unknown key '" + std::string(key) + "'");
    }
    return cfg;
  }

  StepDecay schedule() const { return {lr, lr_period, lr_gamma}; }
  AdamConfig adam() const { return {0.9, 0.999, 1e-8, weight_decay}; }
};

/// Maps measure vectors to network targets and back.
struct TargetCodec {
  Variant variant = Variant::full;
  PcaModel pca;
  bool standardize_scores = true;

  Eigen::MatrixXd encode(const Eigen::MatrixXd& measures) const {
    if (!uses_pca(variant)) return pca.standardize_features(measures);
    Eigen::MatrixXd scores = pca.transform(measures);
    return standardize_scores ? pca.standardize_scores(scores) : scores;
  }

  Eigen::MatrixXd decode(const Eigen::MatrixXd& outputs) const {
    if (!uses_pca(variant)) return pca.unstandardize_features(outputs);
    return pca.inverse_transform(standardize_scores ? pca.unstandardize_scores(outputs) : outputs);
  }
};

/// One training or evaluation sample: every raw point of the bundle (the
/// cloud is drawn from these), the standardized descriptors and the target.
struct Example {
  Eigen::Matrix3Xf points;
  std::array<float, kNumTabular> tabular{};
  Vec<float> target;
};

inline Example make_example(const Bundle& bundle, const TabStandardizer& tab, const Eigen::VectorXd& target) {
  Example ex;
  ex.points = flatten_points<float>(bundle);
  const auto t = tab.apply(extract_tabular(bundle));
  for (std::size_t c = 0; c < kNumTabular; ++c) ex.tabular[c] = static_cast<float>(t[c]);
  ex.target = target.cast<float>();
  return ex;
}

inline Cloud<float> draw_cloud(const Example& ex, int n, std::uint64_t seed) {
  const auto idx = sample_indices(static_cast<std::size_t>(ex.points.cols()), static_cast<std::size_t>(n), seed);
  return gather_centered(ex.points, idx);
}

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
};

inline std::string training_log_csv(const std::vector<EpochLog>& log, std::string_view provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += "# " + std::string(provenance) + "\n";
  out += "epoch,step,lr,train_loss,val_loss\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + format_double(e.lr) + "," +
           format_double(e.train_loss) + "," + format_double(e.val_loss) + "\n";
  return out;
}

namespace detail {

inline constexpr std::uint64_t kShuffleKey = 0x5F1E;
inline constexpr std::uint64_t kTrainCloudKey = 0xC10D;
inline constexpr std::uint64_t kValCloudKey = 0xBA1;
inline constexpr std::uint64_t kInitKey = 0x1217;

/// Paired loss over `ids` (halves A/B); accumulates gradients when `grads`
/// is given.
inline double pair_step(const Network<float>& net, const std::vector<const Example*>& batch,
                        const std::vector<Cloud<float>>& clouds, float lambda, NetworkParams<float>* grads) {
  const auto half = static_cast<Eigen::Index>(batch.size() / 2);
  const int d = output_dim(net.variant());
  Mat<float> pa(half, d), pb(half, d), ya(half, d), yb(half, d);
  std::vector<SampleTrace<float>> traces(grads ? batch.size() : 0);
  for (Eigen::Index i = 0; i < 2 * half; ++i) {
    const auto& ex = *batch[static_cast<std::size_t>(i)];
    auto* tr = grads ? &traces[static_cast<std::size_t>(i)] : nullptr;
    const Vec<float> out = net.forward(clouds[static_cast<std::size_t>(i)], ex.tabular, tr);
    if (i < half) {
      pa.row(i) = out.transpose();
      ya.row(i) = ex.target.transpose();
    } else {
      pb.row(i - half) = out.transpose();
      yb.row(i - half) = ex.target.transpose();
    }
  }
  const auto loss = paired_loss<float>(pa, pb, ya, yb, lambda);
  if (grads)
    for (Eigen::Index i = 0; i < 2 * half; ++i) {
      const Vec<float> g = i < half ? Vec<float>(loss.grad_a.row(i).transpose())
                                    : Vec<float>(loss.grad_b.row(i - half).transpose());
      net.backward(traces[static_cast<std::size_t>(i)], g, *grads);
    }
  return static_cast<double>(loss.value);
}

}  // namespace detail

/// Mean paired loss over a fixed pairing of `set` (first half against second
/// half, clouds drawn from fixed seeds).
inline double evaluate_loss(const Network<float>& net, const std::vector<Example>& set, const TrainConfig& cfg) {
  if (set.size() < 2) return 0.0;
  const std::size_t pairs = set.size() / 2;
  std::vector<const Example*> batch;
  std::vector<Cloud<float>> clouds;
  for (std::size_t i = 0; i < 2 * pairs; ++i) {
    batch.push_back(&set[i]);
    clouds.push_back(draw_cloud(set[i], cfg.num_points, derive_seed(cfg.seed, {detail::kValCloudKey, i})));
  }
  return detail::pair_step(net, batch, clouds, static_cast<float>(cfg.pair_weight), nullptr);
}

struct TrainResult {
  NetworkParams<float> params;
  std::vector<EpochLog> log;
};

/// `on_epoch` (optional) sees every log row as it is produced.
inline TrainResult train_network(const std::vector<Example>& train, const std::vector<Example>& val,
                                 const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.check();
  if (train.size() < 2) fail(ErrorCode::ConfigError, "training split needs at least two samples");
  const int d = output_dim(cfg.variant);
  for (const auto* set : {&train, &val})
    for (const auto& ex : *set)
      if (ex.target.size() != d) fail(ErrorCode::ShapeMismatch, "target width does not match the variant");

  TrainResult res{init_params<float>(cfg.variant, derive_seed(cfg.seed, {detail::kInitKey})), {}};
  const Network<float> net(res.params, static_cast<float>(cfg.point_scale));
  Adam<float> adam(cfg.variant, cfg.adam());
  auto grads = NetworkParams<float>::zeros(cfg.variant);
  const auto schedule = cfg.schedule();
  const auto lambda = static_cast<float>(cfg.pair_weight);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  std::vector<std::size_t> order(train.size());
  std::vector<const Example*> batch;
  std::vector<Cloud<float>> clouds;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = keyed_engine(cfg.seed, {detail::kShuffleKey, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    int batches = 0;
    double lr = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start) / 2 * 2;
      batch.clear();
      clouds.clear();
      for (std::size_t k = 0; k < len; ++k) {
        const auto id = order[start + k];
        batch.push_back(&train[id]);
        clouds.push_back(draw_cloud(train[id], cfg.num_points,
                                    derive_seed(cfg.seed, {detail::kTrainCloudKey, static_cast<std::uint64_t>(epoch), id})));
      }
      grads.set_zero();
      loss_sum += detail::pair_step(net, batch, clouds, lambda, &grads);
      ++batches;
      const std::int64_t t = cfg.lr_step_unit == StepUnit::step ? adam.steps() : epoch;
      lr = schedule.at(t);
      adam.step(res.params, grads, lr);
    }
    EpochLog row{epoch + 1, adam.steps(), lr, loss_sum / batches, evaluate_loss(net, val, cfg)};
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return res;
}

/// Inference wrapper: draws the point cloud, standardizes the descriptors,
/// runs the network and maps its output back to the ten measures.
class Predictor {
 public:
  Predictor(const NetworkParams<double>& params, TargetCodec codec, TabStandardizer tab, int num_points,
            double point_scale)
      : params_(params.cast<float>()),
        net_(params_, static_cast<float>(point_scale)),
        codec_(std::move(codec)),
        tab_(tab),
        num_points_(num_points) {}

  Predictor(const Predictor&) = delete;
  Predictor& operator=(const Predictor&) = delete;

  /// Raw network output for one bundle.
  Vec<float> output(const Bundle& bundle, std::uint64_t seed) const {
    const auto flat = flatten_points<float>(bundle);
    const auto idx = sample_indices(static_cast<std::size_t>(flat.cols()), static_cast<std::size_t>(num_points_), seed);
    const Cloud<float> cloud = gather_centered(flat, idx);
    const auto t = tab_.apply(extract_tabular(bundle));
    const std::array<float, kNumTabular> tf{static_cast<float>(t[0]), static_cast<float>(t[1])};
    return net_.forward(cloud, tf);
  }

  /// Rows are bundles, columns the ten measures.
  Eigen::MatrixXd predict(const std::vector<const Bundle*>& bundles, const std::vector<std::uint64_t>& seeds) const {
    if (bundles.size() != seeds.size()) fail(ErrorCode::ShapeMismatch, "one sampling seed per bundle is required");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(bundles.size()), output_dim(params_.variant));
    for (std::size_t i = 0; i < bundles.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = output(*bundles[i], seeds[i]).cast<double>().transpose();
    return codec_.decode(out);
  }

  ShapeMeasures predict(const Bundle& bundle, std::uint64_t seed) const {
    const Eigen::MatrixXd row = predict({&bundle}, {seed});
    std::array<double, kNumMeasures> a{};
    for (std::size_t c = 0; c < kNumMeasures; ++c) a[c] = row(0, static_cast<Eigen::Index>(c));
    return ShapeMeasures::from_array(a);
  }

  const TargetCodec& codec() const { return codec_; }

 private:
  NetworkParams<float> params_;
  Network<float> net_;
  TargetCodec codec_;
  TabStandardizer tab_;
  int num_points_;
};

}  // namespace bshape::nn
