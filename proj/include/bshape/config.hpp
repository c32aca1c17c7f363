#pragma once

// Run configuration: one sectioned key=value file for every subcommand.
//
//   [run]       seed, threads, data_dir, work_dir
//   [dataset]   generator parameters
//   [shape]     voxel_size
//   [train]     network variant and optimizer settings
//   [eval]      which bundles to train on and test on
//   [gradcheck] reduced-problem settings
//   [bench]     timing settings
//
// Unknown sections or keys are rejected. The master seed drives both the
// generator and the network; each consumer derives keyed sub-seeds.

#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "bshape/error.hpp"
#include "bshape/io.hpp"
#include "bshape/nn/gradcheck.hpp"
#include "bshape/nn/train.hpp"
#include "bshape/synth.hpp"

namespace bshape {

struct EvalSelection {
  std::string train_tag;          // empty: every tag
  std::string test_tag;           // empty: every tag
  std::string test_split = "test";  // train|val|test|all
};

struct BenchConfig {
  std::size_t bundles = 73;  // one subject-equivalent
  int repeats = 3;
};

struct RunConfig {
  std::uint64_t seed = 7;
  unsigned threads = 0;  // 0: all cores
  std::string data_dir = "data";
  std::string work_dir = "work";
  DatasetConfig dataset;
  double voxel_size = kDefaultVoxelSize;
  nn::TrainConfig train;
  EvalSelection eval;
  nn::GradcheckConfig gradcheck;
  double gradcheck_tolerance = 1e-4;
  BenchConfig bench;

  /// Seeds of the consumers follow the master seed.
  void sync_seeds() {
    dataset.seed = seed;
    train.seed = seed;
    gradcheck.seed = seed;
  }

  void check() const;
  std::string to_text() const;
  /// Fingerprint of every key that can change a result (paths and thread
  /// count are excluded).
  std::uint64_t hash() const;
  /// The line embedded at the top of every output file.
  std::string provenance() const { return "config_hash=" + hex64(hash()) + " seed=" + std::to_string(seed); }
};

struct ConfigField {
  std::string section;
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;

  bool hashed() const { return section != "run" || key == "seed"; }
  std::string name() const { return section + "." + key; }
};

namespace detail {

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value) {
  fail(ErrorCode::ConfigError, "bad value '" + std::string(value) + "' for " + std::string(key));
}

template <typename Int>
Int parse_count(std::string_view key, std::string_view v) {
  Int out{};
  if (!parse_int(v, out)) bad_value(key, v);
  return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  if (!parse_double(v, out)) bad_value(key, v);
  return out;
}

inline Range parse_range(std::string_view key, std::string_view v) {
  const auto parts = split(v, ',');
  if (parts.size() != 2) bad_value(key, v);
  return {parse_real(key, trim(parts[0])), parse_real(key, trim(parts[1]))};
}

inline std::string show_range(const Range& r) { return format_double(r.lo) + "," + format_double(r.hi); }

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
  using detail::parse_count, detail::parse_real, detail::parse_range, detail::show_range;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto add = [&](std::string s, std::string k, std::string help, auto get, auto set) {
      f.push_back({std::move(s), std::move(k), std::move(help), get, set});
    };
    auto range = [&](std::string k, std::string help, Range DatasetConfig::*m) {
      add("dataset", k, std::move(help), [m](const RunConfig& c) { return show_range(c.dataset.*m); },
          [m, k](RunConfig& c, std::string_view v) { c.dataset.*m = parse_range(k, v); });
    };
    auto count = [&](std::string k, std::string help, std::size_t DatasetConfig::*m) {
      add("dataset", k, std::move(help), [m](const RunConfig& c) { return std::to_string(c.dataset.*m); },
          [m, k](RunConfig& c, std::string_view v) { c.dataset.*m = parse_count<std::size_t>(k, v); });
    };
    auto real = [&](std::string k, std::string help, double DatasetConfig::*m) {
      add("dataset", k, std::move(help), [m](const RunConfig& c) { return format_double(c.dataset.*m); },
          [m, k](RunConfig& c, std::string_view v) { c.dataset.*m = parse_real(k, v); });
    };

    add("run", "seed", "master seed for generation, sampling and training",
        [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, std::string_view v) { c.seed = parse_count<std::uint64_t>("seed", v); });
    add("run", "threads", "worker threads for shape/predict/bench (0 = all cores)",
        [](const RunConfig& c) { return std::to_string(c.threads); },
        [](RunConfig& c, std::string_view v) { c.threads = parse_count<unsigned>("threads", v); });
    add("run", "data_dir", "dataset directory (manifest.csv + bundles/)",
        [](const RunConfig& c) { return c.data_dir; }, [](RunConfig& c, std::string_view v) { c.data_dir = v; });
    add("run", "work_dir", "directory for measures, models and reports",
        [](const RunConfig& c) { return c.work_dir; }, [](RunConfig& c, std::string_view v) { c.work_dir = v; });

    count("n_cylinder", "cylinder bundles (tag A)", &DatasetConfig::n_cylinder);
    count("n_arc", "arc bundles (tag A)", &DatasetConfig::n_arc);
    count("n_helix", "helix bundles (tag B)", &DatasetConfig::n_helix);
    real("train_fraction", "share of bundles in the train split", &DatasetConfig::train_fraction);
    real("val_fraction", "share of bundles in the val split", &DatasetConfig::val_fraction);
    range("length", "centreline length range, mm", &DatasetConfig::length);
    range("arc_angle", "arc angle range, rad", &DatasetConfig::arc_angle);
    range("helix_radius", "helix radius range, mm", &DatasetConfig::helix_radius);
    range("helix_pitch", "helix pitch range, mm per turn", &DatasetConfig::helix_pitch);
    range("tube_radius", "bundle radius range, mm", &DatasetConfig::tube_radius);
    range("streamlines", "streamline count range", &DatasetConfig::streamlines);
    range("point_spacing", "point spacing range along streamlines, mm", &DatasetConfig::point_spacing);
    range("jitter_sd", "per-point jitter sd range, mm", &DatasetConfig::jitter_sd);
    real("max_rotation_deg", "largest random rotation, degrees", &DatasetConfig::max_rotation_deg);
    real("max_translation", "largest random translation per axis, mm", &DatasetConfig::max_translation);
    count("bundles_per_subject", "bundles grouped under one subject id", &DatasetConfig::bundles_per_subject);

    add("shape", "voxel_size", "voxel edge for the shape measures, mm",
        [](const RunConfig& c) { return format_double(c.voxel_size); },
        [](RunConfig& c, std::string_view v) { c.voxel_size = parse_real("voxel_size", v); });

    const std::vector<std::pair<std::string, std::string>> train_help = {
        {"variant", "vanilla|multimodal|pca|full"},
        {"batch_size", "samples per step (even; pairs are formed inside a batch)"},
        {"epochs", "passes over the training split"},
        {"lr", "initial learning rate"},
        {"lr_period", "learning rate decays every lr_period units"},
        {"lr_gamma", "decay factor"},
        {"lr_step_unit", "unit of lr_period: step|epoch"},
        {"weight_decay", "L2 weight decay"},
        {"pair_weight", "weight of the pairwise difference term"},
        {"num_points", "points sampled per bundle"},
        {"point_scale", "coordinates are divided by this (mm) before the network"},
        {"pca_components", "principal components (pca/full need 5)"},
        {"standardize_scores", "regress PCA scores divided by their training sd"},
    };
    for (const auto& [key, help] : train_help) {
      add("train", key, help,
          [key](const RunConfig& c) {
            for (const auto& [k, v] : c.train.items())
              if (k == key) return v;
            return std::string();
          },
          [key](RunConfig& c, std::string_view v) { c.train.set(key, v); });
    }

    add("eval", "train_tag", "fit on bundles with this tag only (empty = all)",
        [](const RunConfig& c) { return c.eval.train_tag; },
        [](RunConfig& c, std::string_view v) { c.eval.train_tag = v; });
    add("eval", "test_tag", "evaluate on bundles with this tag only (empty = all)",
        [](const RunConfig& c) { return c.eval.test_tag; },
        [](RunConfig& c, std::string_view v) { c.eval.test_tag = v; });
    add("eval", "test_split", "split evaluated: train|val|test|all",
        [](const RunConfig& c) { return c.eval.test_split; },
        [](RunConfig& c, std::string_view v) {
          if (v != "all") split_from_string(v);
          c.eval.test_split = v;
        });

    add("gradcheck", "num_points", "points per cloud",
        [](const RunConfig& c) { return std::to_string(c.gradcheck.num_points); },
        [](RunConfig& c, std::string_view v) { c.gradcheck.num_points = parse_count<int>("num_points", v); });
    add("gradcheck", "batch_size", "samples (one pair per two)",
        [](const RunConfig& c) { return std::to_string(c.gradcheck.batch_size); },
        [](RunConfig& c, std::string_view v) { c.gradcheck.batch_size = parse_count<int>("batch_size", v); });
    add("gradcheck", "probes", "random parameters checked",
        [](const RunConfig& c) { return std::to_string(c.gradcheck.probes); },
        [](RunConfig& c, std::string_view v) { c.gradcheck.probes = parse_count<int>("probes", v); });
    add("gradcheck", "step", "central-difference step",
        [](const RunConfig& c) { return format_double(c.gradcheck.step); },
        [](RunConfig& c, std::string_view v) { c.gradcheck.step = parse_real("step", v); });
    add("gradcheck", "tolerance", "largest accepted relative error",
        [](const RunConfig& c) { return format_double(c.gradcheck_tolerance); },
        [](RunConfig& c, std::string_view v) { c.gradcheck_tolerance = parse_real("tolerance", v); });

    add("bench", "bundles", "bundles per timed subject-equivalent",
        [](const RunConfig& c) { return std::to_string(c.bench.bundles); },
        [](RunConfig& c, std::string_view v) { c.bench.bundles = parse_count<std::size_t>("bundles", v); });
    add("bench", "repeats", "timed repetitions (the fastest is reported)",
        [](const RunConfig& c) { return std::to_string(c.bench.repeats); },
        [](RunConfig& c, std::string_view v) { c.bench.repeats = parse_count<int>("repeats", v); });
    return f;
  }();
  return fields;
}

/// Sets `section.key` (or fails with ConfigError).
inline void set_config_value(RunConfig& cfg, std::string_view name, std::string_view value) {
  for (const auto& f : config_fields())
    if (f.name() == name) {
      f.set(cfg, trim(value));
      cfg.sync_seeds();
      return;
    }
  fail(ErrorCode::ConfigError, "unknown config key '" + std::string(name) + "'");
}

inline std::string RunConfig::to_text() const {
  std::string out, section;
  for (const auto& f : config_fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

inline std::uint64_t RunConfig::hash() const {
  std::string text;
  for (const auto& f : config_fields())
    if (f.hashed()) text += f.name() + "=" + f.get(*this) + "\n";
  return fnv1a(text);
}

inline void RunConfig::check() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::ConfigError, m); };
  train.check();
  if (!(voxel_size > 0.0)) bad("shape.voxel_size must be > 0");
  if (dataset.total() == 0) bad("dataset has no bundles");
  if (!(dataset.train_fraction > 0.0 && dataset.val_fraction >= 0.0 &&
        dataset.train_fraction + dataset.val_fraction <= 1.0))
    bad("dataset split fractions must be positive and sum to at most 1");
  for (const auto* r : {&dataset.length, &dataset.arc_angle, &dataset.helix_radius, &dataset.helix_pitch,
                        &dataset.tube_radius, &dataset.streamlines, &dataset.point_spacing, &dataset.jitter_sd})
    if (!(r->lo <= r->hi)) bad("dataset ranges need lo <= hi");
  if (gradcheck.probes < 1 || gradcheck.num_points < 1 || !(gradcheck.step > 0.0))
    bad("gradcheck needs probes >= 1, num_points >= 1 and step > 0");
  if (bench.bundles < 1 || bench.repeats < 1) bad("bench needs bundles >= 1 and repeats >= 1");
}

/// Parses an INI text; every key must be known. Missing keys keep defaults.
inline RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      fail(ErrorCode::ConfigError, "config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  cfg.sync_seeds();
  cfg.check();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) fail(ErrorCode::ConfigError, e.what());
    throw;
  }
}

}  // namespace bshape
