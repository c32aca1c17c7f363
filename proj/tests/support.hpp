#pragma once

#include <random>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"

namespace testing_support {

inline bshape::Streamline line(const bshape::Point3& a, const bshape::Point3& b, int points) {
  bshape::Streamline s;
  for (int i = 0; i < points; ++i) s.push_back(a + (b - a) * (static_cast<double>(i) / (points - 1)));
  return s;
}

/// Random bundle: smooth-ish random walks starting near `centre`.
inline bshape::Bundle random_bundle(std::uint64_t seed, int max_streamlines, double extent,
                                    const bshape::Point3& centre = bshape::Point3::Zero()) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> nos(1, max_streamlines), nop(2, 30);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bshape::Bundle b;
  const int n = nos(rng);
  const bshape::Point3 dir = bshape::Point3(u(rng), u(rng), u(rng)).normalized();
  for (int i = 0; i < n; ++i) {
    bshape::Streamline s;
    bshape::Point3 p = centre + bshape::Point3(u(rng), u(rng), u(rng)) * extent * 0.2 - dir * extent * 0.4;
    const int k = nop(rng);
    for (int j = 0; j < k; ++j) {
      s.push_back(p);
      p += (dir * 0.8 + 0.5 * bshape::Point3(u(rng), u(rng), u(rng))) * (extent * 0.8 / k);
    }
    b.streamlines.push_back(std::move(s));
  }
  return b;
}

template <typename F>
bshape::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const bshape::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a bshape::Error");
}

}  // namespace testing_support

namespace bshape {
inline void PrintTo(ErrorCode c, std::ostream* os) { *os << to_string(c); }
}  // namespace bshape
