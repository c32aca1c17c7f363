#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bshape/config.hpp"
#include "bshape/metrics.hpp"
#include "bshape/pipeline.hpp"

namespace bshape::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, "--set expects section.key=value, got '" + o + "'");
    set_config_value(cfg, trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
  cfg.check();
  return cfg;
}

fs::path work_file(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.work_dir) / name; }

std::string measures_header() {
  std::string h = "index,path,split,tag";
  for (auto n : kMeasureNames) h += "," + std::string(n);
  return h;
}

std::string measure_fields(const ShapeMeasures& m) {
  std::string out;
  for (double v : m.as_array()) out += "," + format_double(v);
  return out;
}

/// Rows of a measures/predictions CSV keyed by dataset index.
std::map<std::size_t, ShapeMeasures> read_measures(const fs::path& path) {
  const auto table = parse_csv(read_file(path));
  const auto ci = table.column("index");
  std::array<std::size_t, kNumMeasures> cols{};
  for (std::size_t c = 0; c < kNumMeasures; ++c) cols[c] = table.column(kMeasureNames[c]);
  std::map<std::size_t, ShapeMeasures> out;
  for (const auto& r : table.rows) {
    std::size_t idx = 0;
    if (!parse_int(r[ci], idx)) fail(ErrorCode::IoError, "bad index '" + r[ci] + "' in " + path.string());
    std::array<double, kNumMeasures> a{};
    for (std::size_t c = 0; c < kNumMeasures; ++c)
      if (!parse_double(r[cols[c]], a[c])) fail(ErrorCode::IoError, "bad number '" + r[cols[c]] + "' in " + path.string());
    if (!out.emplace(idx, ShapeMeasures::from_array(a)).second)
      fail(ErrorCode::IoError, "duplicate index " + r[ci] + " in " + path.string());
  }
  return out;
}

std::vector<ShapeMeasures> lookup(const std::map<std::size_t, ShapeMeasures>& table,
                                  const std::vector<std::size_t>& idx, const fs::path& source) {
  std::vector<ShapeMeasures> out;
  out.reserve(idx.size());
  for (auto i : idx) {
    const auto it = table.find(i);
    if (it == table.end()) fail(ErrorCode::IoError, "bundle " + std::to_string(i) + " missing from " + source.string());
    out.push_back(it->second);
  }
  return out;
}

std::optional<std::string_view> tag_filter(const std::string& tag) {
  if (tag.empty()) return std::nullopt;
  return tag;
}

std::vector<std::size_t> test_indices(const Dataset& ds, const RunConfig& cfg) {
  const auto split = cfg.eval.test_split == "all" ? std::nullopt : std::optional(split_from_string(cfg.eval.test_split));
  return ds.indices(split, tag_filter(cfg.eval.test_tag));
}

void require_nonempty(const std::vector<std::size_t>& idx, const std::string& what) {
  if (idx.empty()) fail(ErrorCode::InvalidBundle, "no bundles selected for " + what);
}

void write_output(std::ostream& out, const fs::path& path, std::string_view text) {
  write_file(path, text);
  out << "wrote " << path.string() << "\n";
}

// -- commands ---------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const auto m = generate_dataset(cfg.dataset, cfg.data_dir, cfg.provenance());
  std::map<std::string, int> counts;
  for (const auto& r : m.rows) ++counts[std::string(to_string(r.split)) + "/" + r.tag];
  out << "generated " << m.rows.size() << " bundles in " << cfg.data_dir << "\n";
  for (const auto& [k, n] : counts) out << "  " << k << ": " << n << "\n";
  return kOk;
}

int cmd_shape(const RunConfig& cfg, const std::vector<std::string>& inputs, std::ostream& out) {
  if (!inputs.empty()) {
    std::string csv = "path";
    for (auto n : kMeasureNames) csv += "," + std::string(n);
    csv += "\n";
    for (const auto& p : inputs) csv += p + measure_fields(compute_measures(load_bundle(p), cfg.voxel_size)) + "\n";
    out << csv;
    return kOk;
  }
  const auto ds = load_dataset(cfg.data_dir, cfg.threads);
  std::vector<std::size_t> all(ds.bundles.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto t0 = Clock::now();
  const auto measures = compute_all_measures(pointers(ds.bundles, all), cfg.voxel_size, cfg.threads);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::string csv = "# " + cfg.provenance() + "\n" + measures_header() + "\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& r = ds.manifest.rows[i];
    csv += std::to_string(i) + "," + r.path + "," + std::string(to_string(r.split)) + "," + r.tag +
           measure_fields(measures[i]) + "\n";
  }
  fs::create_directories(cfg.work_dir);
  write_output(out, work_file(cfg, "measures.csv"), csv);
  out << "measured " << all.size() << " bundles in " << format_fixed(secs, 2) << " s\n";
  return kOk;
}

LabeledSet labeled(const Dataset& ds, const std::map<std::size_t, ShapeMeasures>& table,
                   const std::vector<std::size_t>& idx, const fs::path& source) {
  return {pointers(ds.bundles, idx), lookup(table, idx, source)};
}

int cmd_pca(const RunConfig& cfg, std::ostream& out) {
  const auto mpath = work_file(cfg, "measures.csv");
  const auto table = read_measures(mpath);
  const auto manifest = manifest_from_csv(read_file(fs::path(cfg.data_dir) / "manifest.csv"));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i)
    if (manifest.rows[i].split == Split::train && (cfg.eval.train_tag.empty() || manifest.rows[i].tag == cfg.eval.train_tag))
      idx.push_back(i);
  require_nonempty(idx, "PCA fitting");
  const auto model = fit_pca(measures_matrix(lookup(table, idx, mpath)), cfg.train.pca_components);
  if (model.rank_deficient) out << "warning: measure matrix is rank deficient for k=" << cfg.train.pca_components << "\n";
  write_output(out, work_file(cfg, "pca.csv"), pca_to_csv(model, cfg.provenance()));
  double kept = 0;
  for (int i = 0; i < model.num_components(); ++i) kept += model.explained_variance_ratio[i];
  out << "k=" << model.num_components() << " keeps " << format_fixed(100.0 * kept, 2) << "% of the variance\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, const std::string& model_path, std::ostream& out) {
  const auto ds = load_dataset(cfg.data_dir, cfg.threads);
  const auto mpath = work_file(cfg, "measures.csv");
  const auto table = read_measures(mpath);
  const auto tag = tag_filter(cfg.eval.train_tag);
  const auto tr = ds.indices(Split::train, tag), va = ds.indices(Split::val, tag);
  require_nonempty(tr, "training");
  require_nonempty(va, "validation");
  out << "training " << nn::to_string(cfg.train.variant) << " on " << tr.size() << " bundles (val " << va.size()
      << ")\n";
  const auto t0 = Clock::now();
  const auto fit = fit_model(labeled(ds, table, tr, mpath), labeled(ds, table, va, mpath), cfg.train,
                             [&](const nn::EpochLog& e) {
                               if (e.epoch == 1 || e.epoch % 25 == 0 || e.epoch == cfg.train.epochs)
                                 out << "  epoch " << e.epoch << " lr " << format_double(e.lr) << " train "
                                     << format_fixed(e.train_loss, 5) << " val " << format_fixed(e.val_loss, 5)
                                     << "\n" << std::flush;
                             });
  out << "trained in " << format_fixed(std::chrono::duration<double>(Clock::now() - t0).count(), 1) << " s\n";
  const fs::path path = model_path.empty() ? work_file(cfg, "model.t2s") : fs::path(model_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::save_checkpoint(fit.checkpoint, path);
  out << "wrote " << path.string() << "\n";
  write_output(out, work_file(cfg, "train_log.csv"), nn::training_log_csv(fit.log, cfg.provenance()));
  return kOk;
}

int cmd_predict(const RunConfig& cfg, const std::string& model_path, const std::string& out_path, std::ostream& out) {
  const auto ck = nn::load_checkpoint(model_path.empty() ? work_file(cfg, "model.t2s") : fs::path(model_path));
  const auto ds = load_dataset(cfg.data_dir, cfg.threads);
  const auto idx = test_indices(ds, cfg);
  require_nonempty(idx, "prediction");
  const auto pred = predict_all(ck, pointers(ds.bundles, idx), idx, cfg.threads);
  std::string csv = "# " + cfg.provenance() + " variant=" + std::string(nn::to_string(ck.config.variant)) + "\n" +
                    measures_header() + "\n";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& r = ds.manifest.rows[idx[i]];
    std::string row = std::to_string(idx[i]) + "," + r.path + "," + std::string(to_string(r.split)) + "," + r.tag;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) row += "," + format_double(pred(static_cast<Eigen::Index>(i), c));
    csv += row + "\n";
  }
  write_output(out, out_path.empty() ? work_file(cfg, "predictions.csv") : fs::path(out_path), csv);
  return kOk;
}

std::string variant_of(const fs::path& predictions) {
  const auto text = read_file(predictions);
  const auto line = text.substr(0, text.find('\n'));
  const auto at = line.find("variant=");
  if (at == std::string::npos) return predictions.stem().string();
  const auto rest = line.substr(at + 8);
  return rest.substr(0, rest.find(' '));
}

int cmd_eval(const RunConfig& cfg, std::vector<std::string> predictions, const std::string& out_path,
             std::ostream& out) {
  if (predictions.empty()) predictions.push_back(work_file(cfg, "predictions.csv").string());
  const auto mpath = work_file(cfg, "measures.csv");
  const auto truth_table = read_measures(mpath);
  std::vector<EvalReport> reports;
  for (const auto& p : predictions) {
    const auto pred_table = read_measures(p);
    std::vector<std::size_t> idx;
    for (const auto& [i, m] : pred_table) idx.push_back(i);
    reports.push_back(evaluate(measures_matrix(lookup(pred_table, idx, p)), measures_matrix(lookup(truth_table, idx, mpath)),
                               variant_of(p)));
  }
  const auto prov = cfg.provenance();
  if (reports.size() == 1) {
    write_output(out, out_path.empty() ? work_file(cfg, "eval.csv") : fs::path(out_path), report_to_csv(reports[0], prov));
  } else {
    const fs::path base = out_path.empty() ? work_file(cfg, "ablation") : fs::path(out_path);
    write_output(out, base.string() + "_r.csv", ablation_table_csv(reports, true, prov));
    write_output(out, base.string() + "_nmse.csv", ablation_table_csv(reports, false, prov));
    // Paired t-tests of the first model against each other one, over the
    // Fisher-transformed per-measure correlations.
    std::string csv = "# " + prov + "\nreference,other,t,dof,p\n";
    for (std::size_t k = 1; k < reports.size(); ++k) {
      std::vector<double> za, zb;
      for (std::size_t c = 0; c < kNumMeasures; ++c) {
        za.push_back(fisher_z(std::clamp(reports[0].r[c], -0.999999, 0.999999)));
        zb.push_back(fisher_z(std::clamp(reports[k].r[c], -0.999999, 0.999999)));
      }
      try {
        const auto t = paired_t(za, zb);
        csv += reports[0].variant + "," + reports[k].variant + "," + format_fixed(t.t, 6) + "," +
               format_fixed(t.dof, 0) + "," + format_fixed(t.p, 6) + "\n";
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroVarianceDiffs) throw;
        csv += reports[0].variant + "," + reports[k].variant + ",nan,nan,nan\n";
      }
    }
    write_output(out, base.string() + "_ttest.csv", csv);
  }
  for (const auto& r : reports)
    out << r.variant << ": r " << format_mean_sd(r.r_summary()) << "  nMSE " << format_mean_sd(r.nmse_summary()) << "\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  bool ok = true;
  for (auto v : nn::kAllVariants) {
    auto g = cfg.gradcheck;
    g.variant = v;
    g.pair_weight = cfg.train.pair_weight;
    g.point_scale = cfg.train.point_scale;
    const auto res = nn::run_gradcheck(g);
    const bool pass = res.max_rel_error < cfg.gradcheck_tolerance;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << nn::to_string(v) << " probes=" << res.probes.size()
        << " max_rel_error=" << format_double(res.max_rel_error) << "\n";
  }
  return ok ? kOk : kNumericFailure;
}

int cmd_bench(const RunConfig& cfg, const std::string& model_path, bool untrained, std::ostream& out) {
  // The benchmark set is regenerated in memory when no dataset is on disk.
  const auto ds = fs::exists(fs::path(cfg.data_dir) / "manifest.csv") ? load_dataset(cfg.data_dir, cfg.threads)
                                                                        : synthesize_dataset(cfg.dataset, cfg.threads);
  auto idx = test_indices(ds, cfg);
  if (idx.size() < cfg.bench.bundles) {
    idx.resize(ds.bundles.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  idx.resize(std::min(idx.size(), cfg.bench.bundles));
  const auto bundles = pointers(ds.bundles, idx);

  nn::Checkpoint ck;
  if (untrained) {
    ck.config = cfg.train;
    std::vector<ShapeMeasures> fake = compute_all_measures(bundles, cfg.voxel_size, cfg.threads);
    ck.pca = fit_pca(measures_matrix(fake), cfg.train.pca_components);
    std::vector<Tabular> rows;
    for (const auto* b : bundles) rows.push_back(extract_tabular(*b));
    ck.tab = TabStandardizer::fit(rows);
    ck.params = nn::init_params<double>(cfg.train.variant, cfg.seed);
  } else {
    ck = nn::load_checkpoint(model_path.empty() ? work_file(cfg, "model.t2s") : fs::path(model_path));
  }

  double best_oracle = 1e300, best_model = 1e300;
  for (int rep = 0; rep < cfg.bench.repeats; ++rep) {
    auto t0 = Clock::now();
    const auto m = compute_all_measures(bundles, cfg.voxel_size, cfg.threads);
    best_oracle = std::min(best_oracle, std::chrono::duration<double>(Clock::now() - t0).count());
    t0 = Clock::now();
    const auto p = predict_all(ck, bundles, idx, cfg.threads);
    best_model = std::min(best_model, std::chrono::duration<double>(Clock::now() - t0).count());
    if (m.size() != static_cast<std::size_t>(p.rows())) fail(ErrorCode::ShapeMismatch, "bench size mismatch");
  }
  std::size_t points = 0;
  for (const auto* b : bundles) points += b->num_points();
  const double scale = static_cast<double>(cfg.bench.bundles) / static_cast<double>(bundles.size());
  out << "bundles=" << bundles.size() << " mean_points=" << points / bundles.size() << " threads="
      << (cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads) << "\n";
  out << "oracle_seconds_per_subject=" << format_fixed(best_oracle * scale, 4) << "\n";
  out << "model_seconds_per_subject=" << format_fixed(best_model * scale, 4) << "\n";
  std::string csv = "# " + cfg.provenance() + "\n# wall times vary between runs\nmethod,seconds_per_subject\n";
  csv += "oracle," + format_fixed(best_oracle * scale, 6) + "\nmodel," + format_fixed(best_model * scale, 6) + "\n";
  fs::create_directories(cfg.work_dir);
  write_output(out, work_file(cfg, "bench.csv"), csv);
  return kOk;
}

std::string keys_footer() {
  const RunConfig defaults;
  std::string s = "Config keys (section.key = default):\n";
  for (const auto& f : config_fields()) {
    std::string line = "  " + f.name() + " = " + f.get(defaults);
    if (line.size() < 44) line.resize(44, ' ');
    s += line + " " + f.help + "\n";
  }
  s += "\nExit codes: 0 success, 2 config error, 3 data error, 4 gradient check failed.";
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bundle shape measures: oracle computation, dataset synthesis and a point-cloud regressor."};
  app.require_subcommand(1);
  app.footer(keys_footer());
  Common common;
  app.add_option("-c,--config", common.config_path, "INI config file (missing keys keep defaults)");
  app.add_option("--set", common.overrides, "override one key: section.key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset into run.data_dir");
  std::vector<std::string> shape_inputs;
  auto* shape = app.add_subcommand("shape", "compute the ten measures for every dataset bundle (or --input files)");
  shape->add_option("--input", shape_inputs, "bundle files to measure; prints CSV to stdout");
  auto* pca = app.add_subcommand("pca", "fit PCA on the training measures and export it");
  std::string model_path, out_path;
  std::vector<std::string> predictions;
  bool untrained = false;
  auto* train = app.add_subcommand("train", "train the network and write a checkpoint and log");
  train->add_option("--model", model_path, "checkpoint path (default work_dir/model.t2s)");
  auto* predict = app.add_subcommand("predict", "predict the measures of the selected test bundles");
  predict->add_option("--model", model_path, "checkpoint path (default work_dir/model.t2s)");
  predict->add_option("--out", out_path, "output CSV (default work_dir/predictions.csv)");
  auto* eval = app.add_subcommand("eval", "score predictions against the oracle measures");
  eval->add_option("--predictions", predictions, "prediction CSVs; several give the ablation tables");
  eval->add_option("--out", out_path, "output path (prefix when several predictions are given)");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  auto* bench = app.add_subcommand("bench", "time oracle and model on one subject-equivalent");
  bench->add_option("--model", model_path, "checkpoint path (default work_dir/model.t2s)");
  bench->add_flag("--untrained", untrained, "time freshly initialized weights instead of a checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const RunConfig cfg = resolve(common);
    if (*synth) return cmd_synth(cfg, out);
    if (*shape) return cmd_shape(cfg, shape_inputs, out);
    if (*pca) return cmd_pca(cfg, out);
    if (*train) return cmd_train(cfg, model_path, out);
    if (*predict) return cmd_predict(cfg, model_path, out_path, out);
    if (*eval) return cmd_eval(cfg, predictions, out_path, out);
    if (*gradcheck) return cmd_gradcheck(cfg, out);
    if (*bench) return cmd_bench(cfg, model_path, untrained, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kConfigError : kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace bshape::cli
