#pragma once

// Ground-truth bundle shape measures computed from streamline geometry and an
// occupancy grid.
//
// Definitions (streamlines orientation-aligned first):
//   length      L  mean streamline arc length
//   span        S  |mean(first points) - mean(last points)|
//   curl           L / S
//   volume      V  |occupied voxels| * v^3
//   diameter    D  2 * sqrt(V / (pi * L))        (cylinder of length L)
//   elongation     L / D
//   surface    SA  v^2 * |occupied voxels with an empty 6-neighbour|
//   end radius     sum over both ends of the mean endpoint distance to the endpoint centroid
//   end area       sum over both ends of v^2 * |voxels holding that end's endpoints|
//   irregularity   SA / (pi * D * L)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"

namespace bshape {

inline constexpr std::size_t kNumMeasures = 10;

inline constexpr std::array<std::string_view, kNumMeasures> kMeasureNames = {
    "length",   "span",   "curl",          "elongation",       "diameter",
    "volume",   "total_surface_area",      "total_radius_end_regions",
    "total_area_end_regions",              "irregularity"};

struct ShapeMeasures {
  double length = 0;                    // mm
  double span = 0;                      // mm
  double curl = 0;
  double elongation = 0;
  double diameter = 0;                  // mm
  double volume = 0;                    // mm^3
  double total_surface_area = 0;        // mm^2
  double total_radius_end_regions = 0;  // mm
  double total_area_end_regions = 0;    // mm^2
  double irregularity = 0;

  std::array<double, kNumMeasures> as_array() const {
    return {length, span, curl, elongation, diameter, volume, total_surface_area, total_radius_end_regions,
            total_area_end_regions, irregularity};
  }

  static ShapeMeasures from_array(const std::array<double, kNumMeasures>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9]};
  }

  friend bool operator==(const ShapeMeasures&, const ShapeMeasures&) = default;
};

inline constexpr double kDefaultVoxelSize = 1.0;
inline constexpr double kMinSpan = 1e-6;

/// Reference is the longest streamline (lowest index on ties). Any other
/// streamline is reversed when its endpoints sit closer to the reference's
/// endpoints in swapped order.
inline Bundle align_orientations(Bundle bundle) {
  auto& lines = bundle.streamlines;
  if (lines.size() < 2) return bundle;
  std::size_t ref = 0;
  double best = arc_length(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const double len = arc_length(lines[i]);
    if (len > best) {
      best = len;
      ref = i;
    }
  }
  const Point3 ref_first = lines[ref].front();
  const Point3 ref_last = lines[ref].back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == ref) continue;
    auto& s = lines[i];
    const double same = (s.front() - ref_first).norm() + (s.back() - ref_last).norm();
    const double flipped = (s.front() - ref_last).norm() + (s.back() - ref_first).norm();
    if (same > flipped) std::reverse(s.begin(), s.end());
  }
  return bundle;
}

struct VoxelIndex {
  std::int32_t x = 0, y = 0, z = 0;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

/// Sparse occupancy grid anchored at the bundle's bounding-box minimum, so
/// every occupied index is non-negative and the grid moves with the bundle.
class VoxelGrid {
 public:
  static constexpr int kBits = 21;
  static constexpr std::int64_t kMaxIndex = (std::int64_t{1} << kBits) - 2;

  VoxelGrid(double voxel_size, Point3 origin) : voxel_size_(voxel_size), origin_(std::move(origin)) {}

  double voxel_size() const noexcept { return voxel_size_; }
  const Point3& origin() const noexcept { return origin_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }

  VoxelIndex index_of(const Point3& p) const {
    VoxelIndex idx;
    idx.x = to_cell((p.x() - origin_.x()) / voxel_size_);
    idx.y = to_cell((p.y() - origin_.y()) / voxel_size_);
    idx.z = to_cell((p.z() - origin_.z()) / voxel_size_);
    return idx;
  }

  /// Marks are buffered; call finalize() before querying.
  void mark(const VoxelIndex& idx) {
    const auto key = pack(idx);
    if (keys_.empty() || keys_.back() != key) keys_.push_back(key);
  }

  void finalize() {
    std::sort(keys_.begin(), keys_.end());
    keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
  }

  bool contains(const VoxelIndex& idx) const {
    if (idx.x < 0 || idx.y < 0 || idx.z < 0 || idx.x > kMaxIndex || idx.y > kMaxIndex || idx.z > kMaxIndex)
      return false;
    return std::binary_search(keys_.begin(), keys_.end(), pack(idx));
  }

  std::vector<VoxelIndex> occupied() const {
    std::vector<VoxelIndex> out;
    out.reserve(keys_.size());
    for (auto k : keys_) out.push_back(unpack(k));
    return out;
  }

  /// Occupied voxels with at least one unoccupied face neighbour.
  std::size_t count_surface() const {
    static constexpr std::array<std::array<int, 3>, 6> kNeighbours = {
        {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    std::size_t n = 0;
    for (auto k : keys_) {
      const auto v = unpack(k);
      for (const auto& d : kNeighbours) {
        if (!contains({v.x + d[0], v.y + d[1], v.z + d[2]})) {
          ++n;
          break;
        }
      }
    }
    return n;
  }

 private:
  static std::int32_t to_cell(double t) {
    const double f = std::floor(t);
    if (!(f >= 0.0 && f <= static_cast<double>(kMaxIndex)))
      fail(ErrorCode::InvalidBundle, "point falls outside the representable voxel grid");
    return static_cast<std::int32_t>(f);
  }
  static std::uint64_t pack(const VoxelIndex& v) {
    return (static_cast<std::uint64_t>(v.x) << (2 * kBits)) | (static_cast<std::uint64_t>(v.y) << kBits) |
           static_cast<std::uint64_t>(v.z);
  }
  static VoxelIndex unpack(std::uint64_t k) {
    constexpr std::uint64_t mask = (std::uint64_t{1} << kBits) - 1;
    return {static_cast<std::int32_t>(k >> (2 * kBits)), static_cast<std::int32_t>((k >> kBits) & mask),
            static_cast<std::int32_t>(k & mask)};
  }

  double voxel_size_;
  Point3 origin_;
  std::vector<std::uint64_t> keys_;
};

inline Point3 bounding_box_min(const Bundle& b) {
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& s : b.streamlines)
    for (const auto& p : s) lo = lo.cwiseMin(p);
  return lo;
}

/// Rasterize every segment, sampled at both endpoints and at a uniform
/// parameter step no longer than half a voxel.
inline VoxelGrid voxelize(const Bundle& bundle, double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
    fail(ErrorCode::OutOfRange, "voxel size must be positive");
  validate(bundle);
  if (!(total_arc_length(bundle) > 0.0)) fail(ErrorCode::DegenerateBundle, "bundle has zero total arc length");

  VoxelGrid grid(voxel_size, bounding_box_min(bundle));
  const double step = voxel_size / 2.0;
  for (const auto& s : bundle.streamlines) {
    for (std::size_t j = 0; j + 1 < s.size(); ++j) {
      const Point3& a = s[j];
      const Point3 d = s[j + 1] - a;
      const auto m = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(d.norm() / step)));
      for (std::int64_t i = 0; i < m; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(m);
        grid.mark(grid.index_of(a + d * t));
      }
      grid.mark(grid.index_of(s[j + 1]));  // exact endpoint; a + d * 1 may round past it
    }
  }
  grid.finalize();
  return grid;
}

namespace detail {

struct EndRegion {
  double radius = 0;
  double area = 0;
};

inline EndRegion end_region(const std::vector<Point3>& ends, const VoxelGrid& geometry) {
  Point3 centroid = Point3::Zero();
  for (const auto& p : ends) centroid += p;
  centroid /= static_cast<double>(ends.size());
  double radius = 0;
  for (const auto& p : ends) radius += (p - centroid).norm();
  radius /= static_cast<double>(ends.size());

  VoxelGrid cells(geometry.voxel_size(), geometry.origin());
  for (const auto& p : ends) cells.mark(cells.index_of(p));
  cells.finalize();
  const double v = geometry.voxel_size();
  return {radius, v * v * static_cast<double>(cells.size())};
}

}  // namespace detail

inline ShapeMeasures compute_measures(const Bundle& input, double voxel_size = kDefaultVoxelSize) {
  const Bundle bundle = align_orientations(input);
  const VoxelGrid grid = voxelize(bundle, voxel_size);
  const auto& lines = bundle.streamlines;
  const auto n = static_cast<double>(lines.size());

  double length = 0;
  Point3 first = Point3::Zero();
  Point3 last = Point3::Zero();
  std::vector<Point3> firsts, lasts;
  firsts.reserve(lines.size());
  lasts.reserve(lines.size());
  for (const auto& s : lines) {
    length += arc_length(s);
    first += s.front();
    last += s.back();
    firsts.push_back(s.front());
    lasts.push_back(s.back());
  }
  length /= n;
  const double span = (first / n - last / n).norm();
  if (span < kMinSpan) fail(ErrorCode::DegenerateSpan, "mean endpoints coincide (span < 1e-6 mm)");

  const double v = voxel_size;
  ShapeMeasures m;
  m.length = length;
  m.span = span;
  m.curl = length / span;
  m.volume = static_cast<double>(grid.size()) * v * v * v;
  m.diameter = 2.0 * std::sqrt(m.volume / (std::numbers::pi * length));
  m.elongation = length / m.diameter;
  m.total_surface_area = static_cast<double>(grid.count_surface()) * v * v;
  const auto head = detail::end_region(firsts, grid);
  const auto tail = detail::end_region(lasts, grid);
  m.total_radius_end_regions = head.radius + tail.radius;
  m.total_area_end_regions = head.area + tail.area;
  m.irregularity = m.total_surface_area / (std::numbers::pi * m.diameter * m.length);
  return m;
}

}  // namespace bshape
