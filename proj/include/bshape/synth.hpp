#pragma once

// Deterministic synthetic fiber bundles with analytically known centrelines.
//
// A bundle is a tube around a centreline (straight segment, circular arc or
// helix). Streamline i keeps a fixed offset inside the tube's disc, so the
// bundle stays coherent, and every point gets independent Gaussian jitter.
// All randomness is keyed on (seed, streamline index), so bundles can be
// generated in any order or in parallel with identical results.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"
#include "bshape/io.hpp"
#include "bshape/rng.hpp"
#include "bshape/tractio.hpp"

namespace bshape {

enum class Family { cylinder, arc, helix };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::cylinder: return "cylinder";
    case Family::arc: return "arc";
    case Family::helix: return "helix";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  if (s == "cylinder") return Family::cylinder;
  if (s == "arc") return Family::arc;
  if (s == "helix") return Family::helix;
  fail(ErrorCode::ConfigError, "unknown bundle family '" + std::string(s) + "'");
}

/// Cross-domain grouping: straight and planar bundles form family A, helices B.
inline std::string_view family_tag(Family f) { return f == Family::helix ? "B" : "A"; }

struct BundleSpec {
  Family family = Family::cylinder;
  double length = 80.0;        // cylinder and helix arc length, mm
  double arc_radius = 50.0;    // mm
  double arc_angle = std::numbers::pi;  // rad, in (0, 2*pi)
  double helix_radius = 10.0;  // mm
  double helix_pitch = 30.0;   // mm per turn
  double tube_radius = 2.0;    // mm, >= 0
  std::size_t n_streamlines = 50;
  std::size_t points_per_streamline = 80;
  double jitter_sd = 0.0;      // mm
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::uint64_t seed = 0;

  /// Centreline arc length.
  double centerline_length() const { return family == Family::arc ? arc_radius * arc_angle : length; }

  void check() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::ConfigError, "invalid bundle spec: " + what); };
    if (!(tube_radius >= 0.0)) bad("tube_radius must be >= 0");
    if (n_streamlines < 1) bad("n_streamlines must be >= 1");
    if (points_per_streamline < 2) bad("points_per_streamline must be >= 2");
    if (!(jitter_sd >= 0.0)) bad("jitter_sd must be >= 0");
    switch (family) {
      case Family::cylinder:
        if (!(length > 0.0)) bad("length must be > 0");
        break;
      case Family::arc:
        if (!(arc_radius > 0.0)) bad("arc_radius must be > 0");
        if (!(arc_angle > 0.0 && arc_angle < 2.0 * std::numbers::pi)) bad("arc_angle must lie in (0, 2*pi)");
        break;
      case Family::helix:
        if (!(length > 0.0 && helix_radius > 0.0 && helix_pitch > 0.0)) bad("helix parameters must be > 0");
        break;
    }
  }
};

namespace detail {

/// Centreline point and an orthonormal frame (normal, binormal) spanning the
/// cross-section, at arc fraction u in [0, 1].
struct Frame {
  Eigen::Vector3d point, normal, binormal;
};

inline Frame centerline_frame(const BundleSpec& spec, double u) {
  Frame f;
  switch (spec.family) {
    case Family::cylinder:
      f.point = {0.0, 0.0, u * spec.length};
      f.normal = Eigen::Vector3d::UnitX();
      f.binormal = Eigen::Vector3d::UnitY();
      break;
    case Family::arc: {
      const double phi = u * spec.arc_angle;
      f.point = {spec.arc_radius * (std::cos(phi) - 1.0), spec.arc_radius * std::sin(phi), 0.0};
      f.normal = {std::cos(phi), std::sin(phi), 0.0};
      f.binormal = Eigen::Vector3d::UnitZ();
      break;
    }
    case Family::helix: {
      const double rise = spec.helix_pitch / (2.0 * std::numbers::pi);
      const double per_radian = std::hypot(spec.helix_radius, rise);
      const double phi = u * spec.length / per_radian;
      f.point = {spec.helix_radius * std::cos(phi), spec.helix_radius * std::sin(phi), rise * phi};
      const Eigen::Vector3d tangent =
          Eigen::Vector3d(-spec.helix_radius * std::sin(phi), spec.helix_radius * std::cos(phi), rise) / per_radian;
      f.normal = {std::cos(phi), std::sin(phi), 0.0};
      f.binormal = tangent.cross(f.normal);
      break;
    }
  }
  return f;
}

}  // namespace detail

inline Bundle generate_bundle(const BundleSpec& spec) {
  spec.check();
  const Eigen::Matrix3d rot = spec.rotation.normalized().toRotationMatrix();

  // Streamline offsets follow a randomly shifted 2-D Halton sequence mapped
  // to the disc (area-uniform), which covers the cross-section evenly.
  auto shift_rng = keyed_engine(spec.seed, {0xD15CULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shift_r = unit(shift_rng);
  const double shift_a = unit(shift_rng);

  const std::size_t n_pts = spec.points_per_streamline;
  std::vector<detail::Frame> frames(n_pts);
  for (std::size_t j = 0; j < n_pts; ++j)
    frames[j] = detail::centerline_frame(spec, static_cast<double>(j) / static_cast<double>(n_pts - 1));

  Bundle b;
  b.streamlines.reserve(spec.n_streamlines);
  for (std::size_t i = 0; i < spec.n_streamlines; ++i) {
    const double r = spec.tube_radius * std::sqrt(shifted_halton(i + 1, 2, shift_r));
    const double theta = 2.0 * std::numbers::pi * shifted_halton(i + 1, 3, shift_a);
    const double off_n = r * std::cos(theta);
    const double off_b = r * std::sin(theta);

    auto rng = keyed_engine(spec.seed, {1, i});
    std::normal_distribution<double> jitter(0.0, 1.0);
    Streamline s(n_pts);
    for (std::size_t j = 0; j < n_pts; ++j) {
      const auto& f = frames[j];
      Eigen::Vector3d p = f.point + off_n * f.normal + off_b * f.binormal;
      if (spec.jitter_sd > 0.0) {
        const double jx = jitter(rng), jy = jitter(rng), jz = jitter(rng);
        p += spec.jitter_sd * Eigen::Vector3d(jx, jy, jz);
      }
      s[j] = rot * p + spec.translation;
    }
    b.streamlines.push_back(std::move(s));
  }
  return b;
}

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(ErrorCode::ConfigError, "unknown split '" + std::string(s) + "'");
}

struct Range {
  double lo = 0, hi = 0;
  double at(double u) const { return lo + (hi - lo) * u; }
};

struct DatasetConfig {
  std::uint64_t seed = 7;
  std::size_t n_cylinder = 200;
  std::size_t n_arc = 200;
  std::size_t n_helix = 200;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  Range length{40.0, 120.0};
  Range arc_angle{1.0, 4.0};
  Range helix_radius{6.0, 20.0};
  Range helix_pitch{20.0, 60.0};
  Range tube_radius{1.5, 5.0};
  Range streamlines{20.0, 200.0};
  Range point_spacing{0.8, 1.6};
  Range jitter_sd{0.05, 0.3};
  double max_rotation_deg = 30.0;
  double max_translation = 20.0;
  std::size_t bundles_per_subject = 73;

  std::size_t total() const { return n_cylinder + n_arc + n_helix; }
};

struct ManifestRow {
  std::string path;  // relative to the manifest's directory
  std::string subject_id;
  std::string cluster_id;
  Split split = Split::train;
  std::string tag;
  BundleSpec spec;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::vector<const ManifestRow*> select(std::optional<Split> split, std::optional<std::string_view> tag = {}) const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : rows)
      if ((!split || r.split == *split) && (!tag || r.tag == *tag)) out.push_back(&r);
    return out;
  }
};

/// Parameters for bundle `index` of the dataset. Shape parameters come from a
/// shifted Halton sequence per family; pose and density noise from the keyed
/// engine. Streamline count grows with tube radius so that NoS carries shape
/// signal (denser bundles are thicker).
inline BundleSpec draw_spec(const DatasetConfig& cfg, std::size_t index) {
  BundleSpec spec;
  std::size_t within = index;
  if (index < cfg.n_cylinder) {
    spec.family = Family::cylinder;
  } else if (index < cfg.n_cylinder + cfg.n_arc) {
    spec.family = Family::arc;
    within -= cfg.n_cylinder;
  } else {
    spec.family = Family::helix;
    within -= cfg.n_cylinder + cfg.n_arc;
  }
  const auto fam = static_cast<std::uint64_t>(spec.family);
  auto shift_rng = keyed_engine(cfg.seed, {0xFA11ULL, fam});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, 6> shift{};
  for (auto& s : shift) s = unit(shift_rng);
  const std::uint64_t h = within + 1;
  constexpr std::array<std::uint64_t, 6> primes = {2, 3, 5, 7, 11, 13};
  auto q = [&](int d) { return shifted_halton(h, primes[static_cast<std::size_t>(d)], shift[static_cast<std::size_t>(d)]); };

  spec.length = cfg.length.at(q(0));
  switch (spec.family) {
    case Family::cylinder: break;
    case Family::arc:
      spec.arc_angle = cfg.arc_angle.at(q(1));
      spec.arc_radius = spec.length / spec.arc_angle;
      break;
    case Family::helix:
      spec.helix_radius = cfg.helix_radius.at(q(1));
      spec.helix_pitch = cfg.helix_pitch.at(q(5));
      break;
  }
  const double u_radius = q(2);
  spec.tube_radius = cfg.tube_radius.at(u_radius);
  const double spacing = cfg.point_spacing.at(q(3));
  spec.points_per_streamline = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(spec.length / spacing)));
  spec.jitter_sd = cfg.jitter_sd.at(q(4));

  auto rng = keyed_engine(cfg.seed, {0xB0ULL, index});
  const double density = std::clamp(u_radius * (0.85 + 0.3 * unit(rng)), 0.0, 1.0);
  spec.n_streamlines = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.streamlines.at(density))));

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
  if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
  const double angle = cfg.max_rotation_deg * std::numbers::pi / 180.0 * unit(rng);
  spec.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized()));
  for (int c = 0; c < 3; ++c) spec.translation[c] = cfg.max_translation * (2.0 * unit(rng) - 1.0);
  spec.seed = derive_seed(cfg.seed, {0x5EEDULL, index});
  return spec;
}

/// Split assignment: a seeded permutation of all indices, cut at the
/// configured fractions.
inline std::vector<Split> assign_splits(const DatasetConfig& cfg) {
  const std::size_t n = cfg.total();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = keyed_engine(cfg.seed, {0x5011ULL});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))));
  std::vector<Split> splits(n, Split::test);
  for (std::size_t k = 0; k < n; ++k)
    splits[order[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
  return splits;
}

inline const char* kManifestHeader =
    "path,family,split,seed,tube_radius,n_streamlines,points_per_streamline,length,arc_radius,arc_angle,"
    "helix_radius,helix_pitch,jitter_sd,qw,qx,qy,qz,tx,ty,tz,tag,subject_id,cluster_id";

inline std::string manifest_to_csv(const DatasetManifest& m, std::string_view provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += "# " + std::string(provenance) + "\n";
  out += kManifestHeader;
  out += '\n';
  for (const auto& r : m.rows) {
    const auto& s = r.spec;
    const auto& q = s.rotation;
    out += r.path + ',' + std::string(to_string(s.family)) + ',' + std::string(to_string(r.split)) + ',' +
           std::to_string(s.seed) + ',' + format_double(s.tube_radius) + ',' + std::to_string(s.n_streamlines) + ',' +
           std::to_string(s.points_per_streamline) + ',' + format_double(s.length) + ',' +
           format_double(s.arc_radius) + ',' + format_double(s.arc_angle) + ',' + format_double(s.helix_radius) + ',' +
           format_double(s.helix_pitch) + ',' + format_double(s.jitter_sd) + ',' + format_double(q.w()) + ',' +
           format_double(q.x()) + ',' + format_double(q.y()) + ',' + format_double(q.z()) + ',' +
           format_double(s.translation.x()) + ',' + format_double(s.translation.y()) + ',' +
           format_double(s.translation.z()) + ',' + r.tag + ',' + r.subject_id + ',' + r.cluster_id + '\n';
  }
  return out;
}

inline DatasetManifest manifest_from_csv(std::string_view text) {
  const auto table = parse_csv(text);
  auto col = [&](std::string_view name) { return table.column(name); };
  const auto c_path = col("path"), c_family = col("family"), c_split = col("split"), c_seed = col("seed"),
             c_tube = col("tube_radius"), c_nos = col("n_streamlines"), c_pps = col("points_per_streamline"),
             c_len = col("length"), c_ar = col("arc_radius"), c_aa = col("arc_angle"), c_hr = col("helix_radius"),
             c_hp = col("helix_pitch"), c_jit = col("jitter_sd"), c_qw = col("qw"), c_qx = col("qx"),
             c_qy = col("qy"), c_qz = col("qz"), c_tx = col("tx"), c_ty = col("ty"), c_tz = col("tz"),
             c_tag = col("tag"), c_subj = col("subject_id"), c_clu = col("cluster_id");
  auto real = [](const std::string& s) {
    double v = 0;
    if (!parse_double(s, v)) fail(ErrorCode::IoError, "bad number '" + s + "' in manifest");
    return v;
  };
  auto count = [](const std::string& s) {
    std::uint64_t v = 0;
    if (!parse_int(s, v)) fail(ErrorCode::IoError, "bad integer '" + s + "' in manifest");
    return v;
  };
  DatasetManifest m;
  for (const auto& f : table.rows) {
    ManifestRow r;
    r.path = f[c_path];
    r.split = split_from_string(f[c_split]);
    r.tag = f[c_tag];
    r.subject_id = f[c_subj];
    r.cluster_id = f[c_clu];
    auto& s = r.spec;
    s.family = family_from_string(f[c_family]);
    s.seed = count(f[c_seed]);
    s.tube_radius = real(f[c_tube]);
    s.n_streamlines = count(f[c_nos]);
    s.points_per_streamline = count(f[c_pps]);
    s.length = real(f[c_len]);
    s.arc_radius = real(f[c_ar]);
    s.arc_angle = real(f[c_aa]);
    s.helix_radius = real(f[c_hr]);
    s.helix_pitch = real(f[c_hp]);
    s.jitter_sd = real(f[c_jit]);
    s.rotation = Eigen::Quaterniond(real(f[c_qw]), real(f[c_qx]), real(f[c_qy]), real(f[c_qz]));
    s.translation = {real(f[c_tx]), real(f[c_ty]), real(f[c_tz])};
    m.rows.push_back(std::move(r));
  }
  return m;
}

/// Writes `bundles/bundle_NNNNN.t2sb` files plus `manifest.csv` under
/// `out_dir`. Same config, same bytes.
inline DatasetManifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir,
                                        std::string_view provenance = {}) {
  if (cfg.total() == 0) fail(ErrorCode::ConfigError, "dataset has no bundles");
  if (!(cfg.train_fraction > 0.0 && cfg.val_fraction >= 0.0 && cfg.train_fraction + cfg.val_fraction <= 1.0))
    fail(ErrorCode::ConfigError, "split fractions must be positive and sum to at most 1");
  const auto splits = assign_splits(cfg);
  DatasetManifest manifest;
  manifest.rows.reserve(cfg.total());
  for (std::size_t i = 0; i < cfg.total(); ++i) {
    ManifestRow row;
    row.spec = draw_spec(cfg, i);
    row.split = splits[i];
    row.tag = std::string(family_tag(row.spec.family));
    char name[32];
    std::snprintf(name, sizeof(name), "bundle_%05zu.t2sb", i);
    row.path = std::string("bundles/") + name;
    const std::size_t per = std::max<std::size_t>(1, cfg.bundles_per_subject);
    row.subject_id = "sub" + std::to_string(i / per);
    row.cluster_id = "cluster" + std::to_string(i % per);

    Bundle b = generate_bundle(row.spec);
    b.subject_id = row.subject_id;
    b.cluster_id = row.cluster_id;
    write_file(out_dir / row.path, write_native(b));
    manifest.rows.push_back(std::move(row));
  }
  write_file(out_dir / "manifest.csv", manifest_to_csv(manifest, provenance));
  return manifest;
}

}  // namespace bshape
