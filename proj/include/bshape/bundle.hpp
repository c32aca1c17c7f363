#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bshape/error.hpp"

namespace bshape {

/// Millimetres, right-anterior-superior frame.
using Point3 = Eigen::Vector3d;

/// Ordered polyline produced by tractography.
using Streamline = std::vector<Point3>;

/// One fiber cluster: the unit of shape analysis.
struct Bundle {
  std::vector<Streamline> streamlines;
  std::string subject_id;
  std::string cluster_id;
  std::optional<std::string> tract_label;

  /// NoS
  std::size_t num_streamlines() const noexcept { return streamlines.size(); }

  /// NoP
  std::size_t num_points() const noexcept {
    std::size_t n = 0;
    for (const auto& s : streamlines) n += s.size();
    return n;
  }
};

inline double arc_length(const Streamline& s) {
  double len = 0.0;
  for (std::size_t j = 1; j < s.size(); ++j) len += (s[j] - s[j - 1]).norm();
  return len;
}

inline double total_arc_length(const Bundle& b) {
  double len = 0.0;
  for (const auto& s : b.streamlines) len += arc_length(s);
  return len;
}

/// Structural invariants: at least one streamline, every streamline has two
/// or more finite points. Zero arc length is left to the geometry code, which
/// reports it as DegenerateBundle.
inline void validate(const Bundle& b) {
  if (b.streamlines.empty()) fail(ErrorCode::InvalidBundle, "bundle has no streamlines");
  for (std::size_t i = 0; i < b.streamlines.size(); ++i) {
    const auto& s = b.streamlines[i];
    if (s.size() < 2)
      fail(ErrorCode::ShortStreamline, "streamline " + std::to_string(i) + " has fewer than 2 points");
    for (const auto& p : s)
      if (!p.allFinite())
        fail(ErrorCode::InvalidBundle, "streamline " + std::to_string(i) + " has a non-finite coordinate");
  }
}

inline Bundle translated(Bundle b, const Point3& t) {
  for (auto& s : b.streamlines)
    for (auto& p : s) p += t;
  return b;
}

}  // namespace bshape
