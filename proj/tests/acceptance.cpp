// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
// exits nonzero if any selected criterion fails.
//
//   acceptance [--out DIR] [criterion ...]     (default: all ten)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "bshape/metrics.hpp"
#include "bshape/nn/gradcheck.hpp"
#include "bshape/pipeline.hpp"
#include "dense_oracle.hpp"
#include "support.hpp"

using namespace bshape;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) { return format_fixed(v, precision); }

bool within_rel(double got, double want, double tol) { return std::abs(got - want) <= tol * std::abs(want); }

// ---------------------------------------------------------------------------
// Shared state for the desk-scale experiments.

struct Experiment {
  fs::path out_dir;
  std::optional<Dataset> ds;
  std::vector<ShapeMeasures> measures;
  double build_seconds = 0;
  std::map<std::string, EvalReport> reports;
  double full_seconds = 0;

  void ensure_dataset() {
    if (ds) return;
    const auto t0 = Clock::now();
    ds = synthesize_dataset(DatasetConfig{});
    std::vector<std::size_t> all(ds->bundles.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    measures = compute_all_measures(pointers(ds->bundles, all), kDefaultVoxelSize);
    build_seconds = since(t0);
  }

  LabeledSet set(const std::vector<std::size_t>& idx) const {
    return {pointers(ds->bundles, idx), gather(measures, idx)};
  }

  /// Trains one model with the default config (only the variant switched)
  /// and evaluates it on `test`.
  EvalReport run(nn::Variant v, const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                 const std::vector<std::size_t>& test, const std::string& label) {
    ensure_dataset();
    nn::TrainConfig cfg;
    cfg.variant = v;
    std::printf("  training %s (%zu train / %zu val / %zu test)\n", label.c_str(), train.size(), val.size(),
                test.size());
    std::fflush(stdout);
    const auto t0 = Clock::now();
    const auto fit = fit_model(set(train), set(val), cfg);
    const auto pred = predict_all(fit.checkpoint, pointers(ds->bundles, test), test);
    auto rep = evaluate(pred, measures_matrix(gather(measures, test)), std::string(nn::to_string(v)));
    std::printf("  %s: r %s  nMSE %s  (%.0f s)\n", label.c_str(), format_mean_sd(rep.r_summary()).c_str(),
                format_mean_sd(rep.nmse_summary()).c_str(), since(t0));
    std::fflush(stdout);
    write_file(out_dir / ("eval_" + label + ".csv"), report_to_csv(rep, "acceptance seed=7"));
    write_file(out_dir / ("train_log_" + label + ".csv"), nn::training_log_csv(fit.log, "acceptance seed=7"));
    return rep;
  }

  const EvalReport& standard(nn::Variant v) {
    const std::string key(nn::to_string(v));
    if (!reports.contains(key)) {
      ensure_dataset();
      const auto t0 = Clock::now();
      reports.emplace(key, run(v, ds->indices(Split::train), ds->indices(Split::val), ds->indices(Split::test), key));
      if (v == nn::Variant::full) full_seconds = since(t0);
    }
    return reports.at(key);
  }
};

// ---------------------------------------------------------------------------

Outcome criterion1(Experiment&) {
  const auto t0 = Clock::now();
  std::vector<std::string> bad;
  std::string detail;

  Bundle straight;
  straight.streamlines.push_back(testing_support::line({0, 0, 0}, {0, 0, 10}, 11));
  const double curl = compute_measures(straight).curl;
  if (!(std::abs(curl - 1.0) < 1e-9)) bad.push_back("straight curl");

  const double R = 50;
  Bundle semi;
  for (double dz : {0.0, 0.5}) {
    Streamline s;
    for (int i = 0; i <= 180; ++i) {
      const double t = std::numbers::pi * i / 180.0;
      s.emplace_back(R * std::cos(t), R * std::sin(t), dz);
    }
    semi.streamlines.push_back(std::move(s));
  }
  const auto sm = compute_measures(semi);
  if (!within_rel(sm.length, std::numbers::pi * R, 0.005)) bad.push_back("semicircle length");
  if (!within_rel(sm.span, 2 * R, 0.005)) bad.push_back("semicircle span");
  if (!within_rel(sm.curl, std::numbers::pi / 2, 0.005)) bad.push_back("semicircle curl");

  // Canonical straight cylinder: axis along the generator's frame, no pose,
  // no jitter.
  BundleSpec cyl;
  cyl.family = Family::cylinder;
  cyl.length = 80;
  cyl.tube_radius = 4;
  cyl.n_streamlines = 500;
  cyl.points_per_streamline = 81;
  cyl.jitter_sd = 0;
  cyl.seed = 11;
  const auto cm = compute_measures(generate_bundle(cyl), 0.5);
  if (!within_rel(cm.volume, 4021, 0.05)) bad.push_back("cylinder volume");
  if (!within_rel(cm.diameter, 8, 0.05)) bad.push_back("cylinder diameter");
  if (!within_rel(cm.elongation, 10, 0.05)) bad.push_back("cylinder elongation");
  if (!within_rel(cm.irregularity, 1.05, 0.10)) bad.push_back("cylinder irregularity");
  const double secs = since(t0);
  if (!(secs < 10.0)) bad.push_back("runtime");

  detail = "curl_err=" + format_double(std::abs(curl - 1)) + " semi L/S/C=" + num(sm.length, 3) + "/" +
           num(sm.span, 3) + "/" + num(sm.curl) + " cyl V=" + num(cm.volume, 1) + " D=" + num(cm.diameter, 3) +
           " E=" + num(cm.elongation, 3) + " irr=" + num(cm.irregularity, 3) + " t=" + num(secs, 2) + "s";
  for (const auto& b : bad) detail += " [" + b + "]";
  return {bad.empty(), detail};
}

Outcome criterion2(Experiment&) {
  const int mismatches = testing_support::dense_oracle_mismatches(20);
  return {mismatches == 0, "20 random bundles at v=1 and v=0.75, mismatches=" + std::to_string(mismatches)};
}

Outcome criterion3(Experiment& ex) {
  ex.ensure_dataset();
  const auto x = measures_matrix(ex.measures);
  const auto m = fit_pca(x, 10);
  const double round_trip = (m.inverse_transform(m.transform(x)) - x).cwiseAbs().maxCoeff();
  const double ortho =
      (m.components * m.components.transpose() - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff();
  bool monotone = true;
  for (int i = 1; i < 10; ++i) monotone = monotone && m.explained_variance_ratio[i] <= m.explained_variance_ratio[i - 1];
  const double sum_err = std::abs(m.explained_variance_ratio.sum() - 1.0);
  bool signs = true;
  for (int i = 0; i < 10; ++i) {
    Eigen::Index arg = 0;
    m.components.row(i).cwiseAbs().maxCoeff(&arg);
    signs = signs && m.components(i, arg) > 0;
  }
  const bool deterministic = pca_to_csv(fit_pca(x, 10)) == pca_to_csv(m) && pca_to_csv(fit_pca(x, 5)) == pca_to_csv(fit_pca(x, 5));
  const auto k5 = fit_pca(x, 5);
  const bool pass = round_trip < 1e-9 && ortho < 1e-9 && monotone && sum_err < 1e-9 && signs && deterministic;
  return {pass, "600x10 measures: round_trip=" + format_double(round_trip) + " ortho=" + format_double(ortho) +
                    " monotone=" + (monotone ? "yes" : "no") + " |sum-1|=" + format_double(sum_err) +
                    " sign_rule=" + (signs ? "yes" : "no") + " rerun_identical=" + (deterministic ? "yes" : "no") +
                    " k5_variance=" + num(100 * k5.explained_variance_ratio.sum(), 2) + "%"};
}

Outcome criterion4(Experiment&) {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t probes = 0;
  int redrawn = 0;
  for (auto v : nn::kAllVariants) {
    nn::GradcheckConfig cfg;
    cfg.variant = v;
    cfg.num_points = 8;
    cfg.batch_size = 2;
    cfg.probes = 128;
    const auto r = nn::run_gradcheck(cfg);
    worst = std::max(worst, r.max_rel_error);
    probes += r.probes.size();
    redrawn += r.redrawn;
  }
  const double secs = since(t0);
  return {worst < 1e-4 && probes >= 100 && secs < 60.0,
          "N=8 B=2 float64, " + std::to_string(probes) + " probes over 4 variants (" + std::to_string(redrawn) +
              " redrawn at kinks), max_rel_error=" + format_double(worst) + " t=" + num(secs, 2) + "s"};
}

Outcome criterion5(Experiment& ex) {
  std::vector<std::string> bad;
  // Permutation invariance, every variant.
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g(0.0f, 20.0f);
  nn::Cloud<float> cloud(3, 700);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) cloud.data()[i] = g(rng);
  std::vector<int> perm(700);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  nn::Cloud<float> shuffled(3, 700);
  for (int j = 0; j < 700; ++j) shuffled.col(j) = cloud.col(perm[static_cast<std::size_t>(j)]);
  const std::array<float, 2> tab{0.2f, -0.7f};
  for (auto v : nn::kAllVariants) {
    const auto p = nn::init_params<float>(v, 3);
    const nn::Network<float> net(p, 32.0f);
    if (!(net.forward(cloud, tab) == net.forward(shuffled, tab))) bad.push_back("permutation " + std::string(nn::to_string(v)));
  }

  // Weight sharing after training steps: one parameter set serves both
  // branches, so swapping the branches of a pair changes nothing.
  ex.ensure_dataset();
  std::vector<std::size_t> idx(24);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  nn::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.num_points = 128;
  const auto fit = fit_model(ex.set(idx), ex.set(idx), cfg);
  const auto params = fit.checkpoint.params.cast<float>();
  if (params.num_parameters() != nn::NetworkParams<float>::zeros(cfg.variant).num_parameters())
    bad.push_back("parameter count");
  const nn::Network<float> net(params, static_cast<float>(cfg.point_scale));
  const auto codec = fit.checkpoint.codec();
  const auto targets = codec.encode(measures_matrix(gather(ex.measures, idx)));
  std::vector<nn::Example> exs;
  for (int i = 0; i < 2; ++i) exs.push_back(nn::make_example(ex.ds->bundles[static_cast<std::size_t>(i)], fit.checkpoint.tab, targets.row(i).transpose()));
  nn::Mat<float> o(2, 5), y(2, 5);
  for (int i = 0; i < 2; ++i) {
    o.row(i) = net.forward(nn::draw_cloud(exs[static_cast<std::size_t>(i)], 128, 9), exs[static_cast<std::size_t>(i)].tabular).transpose();
    y.row(i) = exs[static_cast<std::size_t>(i)].target.transpose();
  }
  const auto ab = nn::paired_loss<float>(o.topRows(1), o.bottomRows(1), y.topRows(1), y.bottomRows(1), 1.0f);
  const auto ba = nn::paired_loss<float>(o.bottomRows(1), o.topRows(1), y.bottomRows(1), y.topRows(1), 1.0f);
  if (ab.value != ba.value) bad.push_back("branch swap");

  // Loss identities.
  std::normal_distribution<double> gd;
  nn::Mat<double> a(4, 5), b(4, 5), ya(4, 5), yb(4, 5);
  for (auto* m : {&a, &b, &ya, &yb})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = gd(rng);
  if (nn::paired_loss(a, b, a, b, 1.0).value != 0.0) bad.push_back("zero loss");
  const double red = 0.5 * ((a - ya).squaredNorm() / 20.0 + (b - yb).squaredNorm() / 20.0);
  if (std::abs(nn::paired_loss(a, b, ya, yb, 0.0).value - red) > 1e-14) bad.push_back("lambda=0");

  std::string detail = "permutation bit-exact (4 variants, 700 pts); shared weights after " +
                       std::to_string(fit.log.back().step) + " Adam steps; L(pred=gt)=0; lambda=0 reduction";
  for (const auto& s : bad) detail += " [" + s + "]";
  return {bad.empty(), detail};
}

Outcome criterion6(Experiment& ex) {
  const bool fresh = !ex.ds.has_value();
  ex.ensure_dataset();
  const auto& rep = ex.standard(nn::Variant::full);
  const double secs = (fresh ? ex.build_seconds : 0.0) + ex.full_seconds;
  const auto r = rep.r_summary(), e = rep.nmse_summary();
  const auto& split = *ex.ds;
  const bool sizes = split.indices(Split::train).size() == 420 && split.indices(Split::val).size() == 90 &&
                     split.indices(Split::test).size() == 90;
  return {sizes && r.mean >= 0.8 && e.mean <= 0.15 && secs <= 600.0,
          "600 bundles 420/90/90, full variant: mean r=" + format_mean_sd(r) + " (>=0.8), mean nMSE=" +
              format_mean_sd(e) + " (<=0.15), wall=" + num(secs, 0) + "s (<=600)"};
}

Outcome criterion7(Experiment& ex) {
  std::vector<EvalReport> reps;
  for (auto v : nn::kAllVariants) reps.push_back(ex.standard(v));
  const auto table_r = ablation_table_csv(reps, true, "acceptance seed=7");
  const auto table_n = ablation_table_csv(reps, false, "acceptance seed=7");
  write_file(ex.out_dir / "ablation_r.csv", table_r);
  write_file(ex.out_dir / "ablation_nmse.csv", table_n);
  const auto parsed = parse_csv(table_r);
  const bool layout = parsed.header.size() == 5 && parsed.rows.size() == kNumMeasures + 1 &&
                      parsed.rows.back()[0] == "average";
  std::printf("%s", table_r.c_str());
  const double full = reps[3].r_summary().mean, vanilla = reps[0].r_summary().mean;
  std::string detail = "mean r";
  for (const auto& r : reps) detail += " " + r.variant + "=" + num(r.r_summary().mean, 3);
  detail += "; full >= vanilla: " + std::string(full >= vanilla ? "yes" : "no") + "; tables in " + ex.out_dir.string();
  return {layout && full >= vanilla, detail};
}

Outcome criterion8(Experiment& ex) {
  ex.ensure_dataset();
  const auto& d = *ex.ds;
  const auto rep = ex.run(nn::Variant::full, d.indices(Split::train, "A"), d.indices(Split::val, "A"),
                          d.indices(std::nullopt, "B"), "crossdomain");
  const auto r = rep.r_summary();
  return {r.mean >= 0.6, "train on A (cylinders+arcs), test on all " + std::to_string(rep.n) +
                             " B bundles (helices): mean r=" + format_mean_sd(r) + " (>=0.6), nMSE=" +
                             format_mean_sd(rep.nmse_summary())};
}

Outcome criterion9(Experiment& ex) {
  ex.ensure_dataset();
  auto idx = ex.ds->indices(Split::test);
  for (std::size_t i = 0; idx.size() < 73; ++i)
    if (ex.ds->manifest.rows[i].split != Split::test) idx.push_back(i);
  idx.resize(73);
  const auto bundles = pointers(ex.ds->bundles, idx);
  std::size_t points = 0;
  for (const auto* b : bundles) points += b->num_points();

  // Prediction cost does not depend on the weight values; a freshly
  // initialized full-variant checkpoint stands in for a trained one.
  nn::Checkpoint ck;
  ck.pca = fit_pca(measures_matrix(gather(ex.measures, idx)), 5);
  std::vector<Tabular> rows;
  for (const auto* b : bundles) rows.push_back(extract_tabular(*b));
  ck.tab = TabStandardizer::fit(rows);
  ck.params = nn::init_params<double>(ck.config.variant, 1);

  double oracle = 1e300, model = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    auto t0 = Clock::now();
    const auto m = compute_all_measures(bundles, 1.0, 1);
    oracle = std::min(oracle, since(t0));
    t0 = Clock::now();
    const auto p = predict_all(ck, bundles, idx, 1);
    model = std::min(model, since(t0));
  }
  return {model < 0.1 && oracle <= 1.0, "73 bundles (mean " + std::to_string(points / 73) +
                                            " points), 1 thread, best of 3: model=" + num(model, 4) +
                                            "s (<0.1) oracle=" + num(oracle, 4) + "s (<=1.0) at v=1mm"};
}

Outcome criterion10(Experiment& ex) {
  std::vector<std::string> bad;
  auto v = [](std::initializer_list<double> x) { return std::vector<double>(x); };
  const double r = pearson_r(v({1, 2, 3, 4}), v({1, 3, 2, 4}));
  if (!(std::abs(r - 0.8) < 1e-12)) bad.push_back("pearson");
  const double e = nmse(v({1, 2, 3}), v({0, 1, 2}));
  if (!(std::abs(e - 1.5) < 1e-12)) bad.push_back("nmse");
  const double z = fisher_z(0.5);
  if (!(std::abs(z - 0.5 * std::log(3.0)) < 1e-6 && std::abs(z - 0.549306) < 1e-6)) bad.push_back("fisher");
  if (!(std::abs(fisher_z(0.930) - 1.6584) < 1e-3)) bad.push_back("fisher 0.93");
  const auto t = paired_t(v({1, 2, 3}), v({0, 0, 0}));
  // dof = 2: the t distribution has the closed-form tail 1 - t / sqrt(t^2 + 2).
  const double p_closed = 1.0 - t.t / std::sqrt(t.t * t.t + 2.0);
  if (!(std::abs(t.t - 2.0 * std::sqrt(3.0)) < 1e-12 && t.dof == 2 && std::abs(t.p - p_closed) < 1e-9))
    bad.push_back("paired t");

  // Determinism: identical seeds give byte-identical checkpoints and reports.
  ex.ensure_dataset();
  std::vector<std::size_t> idx(24);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  nn::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.num_points = 128;
  std::vector<std::string> ck, rep;
  for (int k = 0; k < 2; ++k) {
    const auto fit = fit_model(ex.set(idx), ex.set(idx), cfg);
    ck.push_back(nn::serialize_checkpoint(fit.checkpoint));
    const auto pred = predict_all(fit.checkpoint, pointers(ex.ds->bundles, idx), idx);
    rep.push_back(report_to_csv(evaluate(pred, measures_matrix(gather(ex.measures, idx)), "full")));
  }
  if (ck[0] != ck[1]) bad.push_back("checkpoint bytes");
  if (rep[0] != rep[1]) bad.push_back("report bytes");
  std::string detail = "r=" + format_double(r) + " nMSE=" + format_double(e) + " z(0.5)=" + num(z, 6) +
                       " z(0.93)=" + num(fisher_z(0.93), 4) + " t=" + num(t.t, 4) + " dof=2 p=" + num(t.p, 6) +
                       "; checkpoints and reports byte-identical on rerun";
  for (const auto& b : bad) detail += " [" + b + "]";
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome(Experiment&)>>> criteria = {
      {"analytic shape oracle", criterion1},    {"brute-force equivalence", criterion2},
      {"PCA suite", criterion3},                {"gradient check", criterion4},
      {"architecture invariants", criterion5},  {"end-to-end desk-scale experiment", criterion6},
      {"ablation ordering", criterion7},        {"cross-domain robustness", criterion8},
      {"timing", criterion9},                   {"metrics unit suite and determinism", criterion10},
  };
  Experiment ex;
  ex.out_dir = "acceptance_out";
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      ex.out_dir = argv[++i];
      continue;
    }
    int c = 0;
    if (!parse_int(a, c) || c < 1 || c > 10) {
      std::fprintf(stderr, "usage: acceptance [--out DIR] [criterion 1-10 ...]\n");
      return 2;
    }
    selected.insert(c);
  }
  if (selected.empty())
    for (int c = 1; c <= 10; ++c) selected.insert(c);
  fs::create_directories(ex.out_dir);

  int failed = 0;
  for (int c : selected) {
    const auto& [title, fn] = criteria[static_cast<std::size_t>(c - 1)];
    Outcome o;
    try {
      o = fn(ex);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d: %s  %s: %s\n", c, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
