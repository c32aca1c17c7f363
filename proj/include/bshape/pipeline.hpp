#pragma once

// Glue between the modules: dataset loading, batch shape computation, model
// fitting and batch prediction.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "bshape/bundle.hpp"
#include "bshape/features.hpp"
#include "bshape/nn/checkpoint.hpp"
#include "bshape/nn/train.hpp"
#include "bshape/pca.hpp"
#include "bshape/shape.hpp"
#include "bshape/synth.hpp"
#include "bshape/tractio.hpp"

namespace bshape {

/// Runs f(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Results must be written to per-index slots; the first
/// exception is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, F&& f, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<Bundle> bundles;  // parallel to manifest.rows

  std::vector<std::size_t> indices(std::optional<Split> split, std::optional<std::string_view> tag = {}) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
      const auto& r = manifest.rows[i];
      if ((!split || r.split == *split) && (!tag || r.tag == *tag)) out.push_back(i);
    }
    return out;
  }
};

/// Reads `manifest.csv` and every bundle it lists from `dir`.
inline Dataset load_dataset(const std::filesystem::path& dir, unsigned threads = 0) {
  Dataset ds;
  ds.manifest = manifest_from_csv(read_file(dir / "manifest.csv"));
  ds.bundles.resize(ds.manifest.rows.size());
  parallel_for(
      ds.bundles.size(), [&](std::size_t i) { ds.bundles[i] = load_bundle(dir / ds.manifest.rows[i].path); }, threads);
  return ds;
}

/// Regenerates the bundles of a dataset config in memory (same geometry as
/// the files `generate_dataset` writes).
inline Dataset synthesize_dataset(const DatasetConfig& cfg, unsigned threads = 0) {
  Dataset ds;
  const auto splits = assign_splits(cfg);
  ds.manifest.rows.resize(cfg.total());
  ds.bundles.resize(cfg.total());
  const std::size_t per = std::max<std::size_t>(1, cfg.bundles_per_subject);
  parallel_for(
      cfg.total(),
      [&](std::size_t i) {
        auto& row = ds.manifest.rows[i];
        row.spec = draw_spec(cfg, i);
        row.split = splits[i];
        row.tag = std::string(family_tag(row.spec.family));
        row.subject_id = "sub" + std::to_string(i / per);
        row.cluster_id = "cluster" + std::to_string(i % per);
        ds.bundles[i] = generate_bundle(row.spec);
        ds.bundles[i].subject_id = row.subject_id;
        ds.bundles[i].cluster_id = row.cluster_id;
      },
      threads);
  return ds;
}

inline std::vector<ShapeMeasures> compute_all_measures(const std::vector<const Bundle*>& bundles, double voxel_size,
                                                       unsigned threads = 0) {
  std::vector<ShapeMeasures> out(bundles.size());
  parallel_for(
      bundles.size(), [&](std::size_t i) { out[i] = compute_measures(*bundles[i], voxel_size); }, threads);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

inline std::vector<const Bundle*> pointers(const std::vector<Bundle>& all, const std::vector<std::size_t>& idx) {
  std::vector<const Bundle*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&all[i]);
  return out;
}

/// Training inputs for one run: bundles with their oracle measures.
struct LabeledSet {
  std::vector<const Bundle*> bundles;
  std::vector<ShapeMeasures> measures;
};

struct FitResult {
  nn::Checkpoint checkpoint;
  std::vector<nn::EpochLog> log;
};

/// Fits the PCA model and descriptor standardizer on the training split,
/// encodes targets for the configured variant and trains the network.
inline FitResult fit_model(const LabeledSet& train, const LabeledSet& val, const nn::TrainConfig& cfg,
                           const std::function<void(const nn::EpochLog&)>& on_epoch = {}) {
  cfg.check();
  FitResult res;
  auto& ck = res.checkpoint;
  ck.config = cfg;
  ck.pca = fit_pca(measures_matrix(train.measures), cfg.pca_components);
  std::vector<Tabular> tab_rows;
  for (const auto* b : train.bundles) tab_rows.push_back(extract_tabular(*b));
  ck.tab = TabStandardizer::fit(tab_rows);
  const auto codec = ck.codec();

  auto examples = [&](const LabeledSet& set) {
    const Eigen::MatrixXd targets = codec.encode(measures_matrix(set.measures));
    std::vector<nn::Example> out;
    out.reserve(set.bundles.size());
    for (std::size_t i = 0; i < set.bundles.size(); ++i)
      out.push_back(nn::make_example(*set.bundles[i], ck.tab, targets.row(static_cast<Eigen::Index>(i)).transpose()));
    return out;
  };
  const auto train_ex = examples(train);
  const auto val_ex = examples(val);
  auto trained = nn::train_network(train_ex, val_ex, cfg, on_epoch);
  ck.params = trained.params.cast<double>();
  res.log = std::move(trained.log);
  return res;
}

inline constexpr std::uint64_t kPredictKey = 0x9ED1;

/// Sampling seed used when predicting the bundle at `index` of a dataset.
inline std::uint64_t prediction_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, {kPredictKey, index});
}

/// Predicts the ten measures for each bundle; rows follow `bundles`.
inline Eigen::MatrixXd predict_all(const nn::Checkpoint& ck, const std::vector<const Bundle*>& bundles,
                                   const std::vector<std::size_t>& ids, unsigned threads = 0) {
  const nn::Predictor predictor(ck.params, ck.codec(), ck.tab, ck.config.num_points, ck.config.point_scale);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(bundles.size()), static_cast<Eigen::Index>(kNumMeasures));
  parallel_for(
      bundles.size(),
      [&](std::size_t i) {
        out.row(static_cast<Eigen::Index>(i)) =
            predictor.predict({bundles[i]}, {prediction_seed(ck.config.seed, ids[i])}).row(0);
      },
      threads);
  return out;
}

}  // namespace bshape
