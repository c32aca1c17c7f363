#pragma once

#include <iosfwd>

namespace bshape::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericFailure = 4;

/// Runs the command line; messages go to `out` and `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bshape::cli
