#pragma once

// Readers and writers for the two on-disk bundle formats:
//
//  * a subset of legacy ASCII VTK polydata (POINTS + LINES), the usual
//    interchange format of tractography pipelines;
//  * a compact native binary format:
//
//      "T2SB"  u8 version  u32 NoS  { u32 count  count * (f32 x, f32 y, f32 z) } * NoS
//
//    all little-endian. Coordinates are stored as 32-bit reals, so writing a
//    bundle held in 64-bit precision is lossy by design.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bshape/bundle.hpp"
#include "bshape/error.hpp"
#include "bshape/io.hpp"

namespace bshape {

inline constexpr std::uint8_t kNativeVersion = 1;
inline constexpr char kNativeMagic[4] = {'T', '2', 'S', 'B'};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::toupper(static_cast<unsigned char>(a[i])) != std::toupper(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

class TextCursor {
 public:
  explicit TextCursor(std::string_view text) : text_(text) {}

  bool at_end() const { return pos_ >= text_.size(); }

  /// Next raw line without its terminator; std::nullopt at end of input.
  std::optional<std::string_view> line() {
    if (at_end()) return std::nullopt;
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    auto out = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    return out;
  }

  /// Next non-blank line, trimmed.
  std::optional<std::string_view> content_line() {
    while (auto l = line()) {
      auto t = trim(*l);
      if (!t.empty()) return t;
    }
    return std::nullopt;
  }

  std::optional<std::string_view> token() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return std::nullopt;
    auto start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  std::string_view require_token(const char* what) {
    auto t = token();
    if (!t) fail(ErrorCode::TruncatedFile, std::string("unexpected end of file reading ") + what);
    return *t;
  }

  std::size_t require_count(const char* what) {
    auto t = require_token(what);
    std::uint64_t v = 0;
    if (!parse_int(t, v)) fail(ErrorCode::MalformedHeader, std::string("bad count for ") + what);
    if (v > remaining()) fail(ErrorCode::TruncatedFile, std::string("count for ") + what + " exceeds file size");
    return static_cast<std::size_t>(v);
  }

  double require_real(const char* what) {
    auto t = require_token(what);
    double v = 0.0;
    if (!parse_double(t, v)) fail(ErrorCode::MalformedHeader, std::string("expected a number in ") + what);
    return v;
  }

  /// Skip to the first blank line (used for METADATA blocks).
  void skip_to_blank_line() {
    while (auto l = line())
      if (trim(*l).empty()) return;
  }

  std::size_t remaining() const { return text_.size() - std::min(pos_, text_.size()); }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Titles written by write_polydata look like "bundleshape subject=S cluster=C label=L".
inline void read_title(std::string_view title, Bundle& b) {
  std::size_t start = 0;
  while (start < title.size()) {
    auto end = title.find(' ', start);
    if (end == std::string_view::npos) end = title.size();
    auto field = title.substr(start, end - start);
    start = end + 1;
    auto eq = field.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = field.substr(0, eq);
    auto value = std::string(field.substr(eq + 1));
    if (key == "subject") b.subject_id = value;
    else if (key == "cluster") b.cluster_id = value;
    else if (key == "label") b.tract_label = value;
  }
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < 4) fail(ErrorCode::TruncatedFile, "native bundle ends inside a 32-bit field");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

/// Parse the POLYDATA/LINES subset of legacy ASCII VTK. VERTICES, POLYGONS,
/// TRIANGLE_STRIPS and METADATA blocks are skipped; attribute sections
/// (POINT_DATA, CELL_DATA, FIELD) end the parse. Each skip appends a note to
/// `warnings` when one is given.
inline Bundle parse_polydata(std::string_view text, std::vector<std::string>* warnings = nullptr) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  detail::TextCursor cur(text);

  auto first = cur.line();
  if (!first) fail(ErrorCode::TruncatedFile, "empty file");
  if (!trim(*first).starts_with("# vtk DataFile Version"))
    fail(ErrorCode::MalformedHeader, "missing '# vtk DataFile Version' line");
  auto title = cur.line();
  if (!title) fail(ErrorCode::TruncatedFile, "missing title line");
  auto encoding = cur.content_line();
  if (!encoding) fail(ErrorCode::TruncatedFile, "missing encoding line");
  if (!detail::iequals(*encoding, "ASCII")) fail(ErrorCode::MalformedHeader, "only ASCII polydata is supported");
  auto dataset = cur.content_line();
  if (!dataset) fail(ErrorCode::TruncatedFile, "missing DATASET line");
  {
    detail::TextCursor words(*dataset);
    auto kw = words.token();
    auto kind = words.token();
    if (!kw || !kind || !detail::iequals(*kw, "DATASET") || !detail::iequals(*kind, "POLYDATA") || words.token())
      fail(ErrorCode::MalformedHeader, "expected 'DATASET POLYDATA'");
  }

  Bundle bundle;
  detail::read_title(trim(*title), bundle);
  std::vector<Point3> points;
  bool have_points = false;
  bool have_lines = false;

  while (auto kw = cur.token()) {
    if (detail::iequals(*kw, "POINTS")) {
      if (have_points) fail(ErrorCode::MalformedHeader, "duplicate POINTS block");
      auto n = cur.require_count("POINTS");
      auto type = cur.require_token("POINTS type");
      if (!detail::iequals(type, "float") && !detail::iequals(type, "double"))
        fail(ErrorCode::MalformedHeader, "unsupported POINTS type '" + std::string(type) + "'");
      points.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        Point3 p;
        p.x() = cur.require_real("POINTS");
        p.y() = cur.require_real("POINTS");
        p.z() = cur.require_real("POINTS");
        if (!p.allFinite()) fail(ErrorCode::MalformedHeader, "non-finite coordinate at point " + std::to_string(i));
        points.push_back(p);
      }
      have_points = true;
    } else if (detail::iequals(*kw, "LINES")) {
      if (!have_points) fail(ErrorCode::MalformedHeader, "LINES before POINTS");
      if (have_lines) fail(ErrorCode::MalformedHeader, "duplicate LINES block");
      auto m = cur.require_count("LINES");
      auto size = cur.require_count("LINES size");
      std::size_t consumed = 0;
      bundle.streamlines.reserve(m);
      for (std::size_t r = 0; r < m; ++r) {
        auto k = cur.require_count("LINES record");
        if (k < 2) fail(ErrorCode::ShortStreamline, "LINES record " + std::to_string(r) + " has " + std::to_string(k) + " point(s)");
        Streamline s;
        s.reserve(k);
        for (std::size_t j = 0; j < k; ++j) {
          auto tok = cur.require_token("LINES record");
          std::uint64_t idx = 0;
          if (!parse_int(tok, idx)) fail(ErrorCode::MalformedHeader, "bad point index in LINES record " + std::to_string(r));
          if (idx >= points.size())
            fail(ErrorCode::IndexOutOfRange, "LINES record " + std::to_string(r) + " references point " + std::to_string(idx) +
                                                 " but POINTS has " + std::to_string(points.size()));
          s.push_back(points[static_cast<std::size_t>(idx)]);
        }
        consumed += k + 1;
        bundle.streamlines.push_back(std::move(s));
      }
      if (consumed != size)
        fail(ErrorCode::MalformedHeader, "LINES size " + std::to_string(size) + " does not match records (" +
                                             std::to_string(consumed) + ")");
      have_lines = true;
    } else if (detail::iequals(*kw, "VERTICES") || detail::iequals(*kw, "POLYGONS") ||
               detail::iequals(*kw, "TRIANGLE_STRIPS")) {
      std::string name(*kw);
      cur.require_count(name.c_str());
      auto size = cur.require_count(name.c_str());
      for (std::size_t i = 0; i < size; ++i) cur.require_token(name.c_str());
      warn("skipped " + name + " block");
    } else if (detail::iequals(*kw, "METADATA")) {
      cur.skip_to_blank_line();
      warn("skipped METADATA block");
    } else if (detail::iequals(*kw, "POINT_DATA") || detail::iequals(*kw, "CELL_DATA") ||
               detail::iequals(*kw, "FIELD")) {
      warn("ignored attribute data starting at " + std::string(*kw));
      break;
    } else {
      fail(ErrorCode::MalformedHeader, "unsupported keyword '" + std::string(kw->substr(0, 64)) + "'");
    }
  }

  if (!have_points) fail(ErrorCode::TruncatedFile, "no POINTS block");
  if (!have_lines) fail(ErrorCode::TruncatedFile, "no LINES block");
  if (bundle.streamlines.empty()) fail(ErrorCode::InvalidBundle, "LINES block is empty");
  return bundle;
}

inline std::string write_polydata(const Bundle& bundle) {
  validate(bundle);
  const std::size_t n = bundle.num_points();
  const std::size_t m = bundle.num_streamlines();

  std::string out;
  out.reserve(n * 60 + m * 16 + 256);
  out += "# vtk DataFile Version 3.0\n";
  out += "bundleshape subject=" + (bundle.subject_id.empty() ? std::string("-") : bundle.subject_id);
  out += " cluster=" + (bundle.cluster_id.empty() ? std::string("-") : bundle.cluster_id);
  if (bundle.tract_label) out += " label=" + *bundle.tract_label;
  out += "\nASCII\nDATASET POLYDATA\n";
  out += "POINTS " + std::to_string(n) + " double\n";
  for (const auto& s : bundle.streamlines)
    for (const auto& p : s) {
      out += format_double(p.x());
      out += ' ';
      out += format_double(p.y());
      out += ' ';
      out += format_double(p.z());
      out += '\n';
    }
  out += "LINES " + std::to_string(m) + " " + std::to_string(n + m) + "\n";
  std::size_t next = 0;
  for (const auto& s : bundle.streamlines) {
    out += std::to_string(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      out += ' ';
      out += std::to_string(next++);
    }
    out += '\n';
  }
  return out;
}

inline std::string write_native(const Bundle& bundle) {
  validate(bundle);
  std::string out;
  out.reserve(9 + bundle.num_streamlines() * 4 + bundle.num_points() * 12);
  out.append(kNativeMagic, 4);
  out.push_back(static_cast<char>(kNativeVersion));
  detail::put_u32(out, static_cast<std::uint32_t>(bundle.num_streamlines()));
  for (const auto& s : bundle.streamlines) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.size()));
    for (const auto& p : s)
      for (int c = 0; c < 3; ++c) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p[c])));
  }
  return out;
}

inline Bundle read_native(std::string_view bytes) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, "native bundle shorter than its magic");
  if (std::memcmp(bytes.data(), kNativeMagic, 4) != 0) fail(ErrorCode::BadMagic, "not a T2SB file");
  if (bytes.size() < 5) fail(ErrorCode::TruncatedFile, "native bundle ends before version byte");
  auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kNativeVersion) fail(ErrorCode::BadVersion, "unsupported native version " + std::to_string(version));
  std::size_t pos = 5;
  const auto nos = detail::get_u32(bytes, pos);
  // Each streamline needs at least its 4-byte count.
  if (static_cast<std::uint64_t>(nos) * 4 > bytes.size() - pos)
    fail(ErrorCode::TruncatedFile, "declared streamline count exceeds file size");
  Bundle b;
  b.streamlines.reserve(nos);
  for (std::uint32_t i = 0; i < nos; ++i) {
    const auto count = detail::get_u32(bytes, pos);
    if (static_cast<std::uint64_t>(count) * 12 > bytes.size() - pos)
      fail(ErrorCode::TruncatedFile, "streamline " + std::to_string(i) + " declares more points than remain");
    if (count < 2) fail(ErrorCode::ShortStreamline, "streamline " + std::to_string(i) + " has fewer than 2 points");
    Streamline s(count);
    for (auto& p : s)
      for (int c = 0; c < 3; ++c) p[c] = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, pos)));
    b.streamlines.push_back(std::move(s));
  }
  if (pos != bytes.size()) fail(ErrorCode::MalformedHeader, "trailing bytes after last streamline");
  if (b.streamlines.empty()) fail(ErrorCode::InvalidBundle, "native bundle has no streamlines");
  return b;
}

/// Load either format, sniffing the native magic.
inline Bundle load_bundle(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kNativeMagic, 4) == 0) return read_native(bytes);
  return parse_polydata(bytes, warnings);
}

inline void save_bundle(const std::filesystem::path& path, const Bundle& b) {
  if (path.extension() == ".vtk")
    write_file(path, write_polydata(b));
  else
    write_file(path, write_native(b));
}

}  // namespace bshape
