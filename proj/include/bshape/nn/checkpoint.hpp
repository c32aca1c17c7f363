#pragma once

// Checkpoint file: everything prediction needs, in one self-describing file.
//
//   "T2S1"  u32 version
//   u32 config length, config text (key=value lines)
//   u32 array count, then per array:
//     u32 name length, name, u32 rows, u32 cols, rows*cols f64 (column-major)
//   u64 FNV-1a of every preceding byte
//
// All integers and reals are little-endian. Arrays hold the PCA model
// ("pca.*"), the descriptor standardizer ("tab.*") and the network
// parameters ("net.*").

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bshape/error.hpp"
#include "bshape/features.hpp"
#include "bshape/io.hpp"
#include "bshape/nn/network.hpp"
#include "bshape/nn/train.hpp"
#include "bshape/pca.hpp"

namespace bshape::nn {

inline constexpr std::string_view kCheckpointMagic = "T2S1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  PcaModel pca;
  TabStandardizer tab;
  NetworkParams<double> params;

  TargetCodec codec() const { return {config.variant, pca, config.standardize_scores}; }
};

namespace detail {

struct ByteWriter {
  std::string bytes;

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.append(s);
  }
  void array(std::string_view name, const double* data, Eigen::Index rows, Eigen::Index cols) {
    text(name);
    u32(static_cast<std::uint32_t>(rows));
    u32(static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < rows * cols; ++i) f64(data[i]);
  }
};

struct ByteReader {
  std::string_view bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) fail(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)])) << (8 * i);
    pos += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const auto n = u32();
    need(n);
    std::string s(bytes.substr(pos, n));
    pos += n;
    return s;
  }
};

struct StoredArray {
  Eigen::Index rows = 0, cols = 0;
  std::vector<double> values;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.bytes.append(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.text(ck.config.to_text());

  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;
  const auto& p = ck.pca;
  arrays.emplace_back("pca.feature_mean", p.feature_mean);
  arrays.emplace_back("pca.feature_sd", p.feature_sd);
  arrays.emplace_back("pca.components", p.components);
  arrays.emplace_back("pca.explained_variance", p.explained_variance);
  arrays.emplace_back("pca.explained_variance_ratio", p.explained_variance_ratio);
  arrays.emplace_back("pca.spectrum_ratio", p.spectrum_ratio);
  arrays.emplace_back("pca.score_sd", p.score_sd);
  arrays.emplace_back("pca.rank_deficient", Eigen::MatrixXd::Constant(1, 1, p.rank_deficient ? 1.0 : 0.0));
  arrays.emplace_back("tab.mean", Eigen::Map<const Eigen::RowVectorXd>(ck.tab.mean.data(), kNumTabular));
  arrays.emplace_back("tab.sd", Eigen::Map<const Eigen::RowVectorXd>(ck.tab.sd.data(), kNumTabular));
  const auto net = ck.params.arrays();

  w.u32(static_cast<std::uint32_t>(arrays.size() + net.size()));
  for (const auto& [name, m] : arrays) w.array(name, m.data(), m.rows(), m.cols());
  for (const auto& a : net) w.array("net." + a.name, a.data, a.rows, a.cols);
  w.u64(fnv1a(w.bytes));
  return std::move(w.bytes);
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 12 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    fail(ErrorCode::CorruptCheckpoint, "not a checkpoint (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - 8);
  detail::ByteReader tail{bytes, bytes.size() - 8};
  if (tail.u64() != fnv1a(body)) fail(ErrorCode::CorruptCheckpoint, "checkpoint checksum mismatch");

  detail::ByteReader r{body, kCheckpointMagic.size()};
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    fail(ErrorCode::CorruptCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.config = TrainConfig::from_text(r.text());
  } catch (const Error& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("embedded config: ") + e.what());
  }

  std::map<std::string, detail::StoredArray> stored;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.text();
    detail::StoredArray a;
    a.rows = r.u32();
    a.cols = r.u32();
    const auto n = static_cast<std::size_t>(a.rows * a.cols);
    r.need(n * 8);
    a.values.resize(n);
    for (auto& v : a.values) v = r.f64();
    if (!stored.emplace(std::move(name), std::move(a)).second) fail(ErrorCode::CorruptCheckpoint, "duplicate array");
  }
  if (r.pos != body.size()) fail(ErrorCode::CorruptCheckpoint, "trailing bytes after the array table");

  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) -> const detail::StoredArray& {
    const auto it = stored.find(name);
    if (it == stored.end()) fail(ErrorCode::CorruptCheckpoint, "missing array " + name);
    const auto& a = it->second;
    if ((rows >= 0 && a.rows != rows) || (cols >= 0 && a.cols != cols))
      fail(ErrorCode::CorruptCheckpoint, "array " + name + " has the wrong shape");
    return a;
  };
  auto matrix = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const auto& a = take(name, rows, cols);
    return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(a.values.data(), a.rows, a.cols));
  };

  const auto d = static_cast<Eigen::Index>(kNumMeasures);
  auto& p = ck.pca;
  p.feature_mean = matrix("pca.feature_mean", 1, d);
  p.feature_sd = matrix("pca.feature_sd", 1, d);
  p.components = matrix("pca.components", -1, d);
  const auto k = p.components.rows();
  p.explained_variance = matrix("pca.explained_variance", k, 1);
  p.explained_variance_ratio = matrix("pca.explained_variance_ratio", k, 1);
  p.spectrum_ratio = matrix("pca.spectrum_ratio", -1, 1);
  p.score_sd = matrix("pca.score_sd", k, 1);
  p.rank_deficient = matrix("pca.rank_deficient", 1, 1)(0, 0) != 0.0;
  const auto tm = matrix("tab.mean", 1, static_cast<Eigen::Index>(kNumTabular));
  const auto ts = matrix("tab.sd", 1, static_cast<Eigen::Index>(kNumTabular));
  for (std::size_t c = 0; c < kNumTabular; ++c) {
    ck.tab.mean[c] = tm(0, static_cast<Eigen::Index>(c));
    ck.tab.sd[c] = ts(0, static_cast<Eigen::Index>(c));
  }

  ck.params = NetworkParams<double>::zeros(ck.config.variant);
  std::size_t used = 10;
  for (auto& a : ck.params.arrays()) {
    const auto& s = take("net." + a.name, a.rows, a.cols);
    std::copy(s.values.begin(), s.values.end(), a.data);
    ++used;
  }
  if (used != stored.size()) fail(ErrorCode::CorruptCheckpoint, "checkpoint has arrays this variant does not use");
  for (const auto& [name, a] : stored)
    for (double v : a.values)
      if (!std::isfinite(v)) fail(ErrorCode::CorruptCheckpoint, "array " + name + " has non-finite entries");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace bshape::nn
