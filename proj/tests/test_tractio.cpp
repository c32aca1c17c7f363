#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "bshape/tractio.hpp"
#include "support.hpp"

using namespace bshape;
using testing_support::error_of;

namespace {

std::string minimal_file(std::string_view lines_block) {
  return "# vtk DataFile Version 3.0\nexample\nASCII\nDATASET POLYDATA\n"
         "POINTS 5 float\n0 0 0\n1 0 0\n2 0 0\n0 1 0\n0 2 0\n" +
         std::string(lines_block);
}

}  // namespace

TEST(Polydata, MinimalFile) {
  const auto b = parse_polydata(minimal_file("LINES 2 7\n3 0 1 2\n2 3 4\n"));
  ASSERT_EQ(b.num_streamlines(), 2u);
  EXPECT_EQ(b.streamlines[0].size(), 3u);
  EXPECT_EQ(b.streamlines[1].size(), 2u);
  EXPECT_EQ(b.num_points(), 5u);
  EXPECT_EQ(b.streamlines[0][2], Point3(2, 0, 0));
  EXPECT_EQ(b.streamlines[1][1], Point3(0, 2, 0));
}

TEST(Polydata, IndexOutOfRange) {
  EXPECT_EQ(error_of([] { parse_polydata(minimal_file("LINES 1 3\n2 0 9\n")); }), ErrorCode::IndexOutOfRange);
}

TEST(Polydata, ShortStreamline) {
  EXPECT_EQ(error_of([] { parse_polydata(minimal_file("LINES 1 2\n1 0\n")); }), ErrorCode::ShortStreamline);
}

TEST(Polydata, TruncatedAndMalformed) {
  EXPECT_EQ(error_of([] { parse_polydata(minimal_file("LINES 1 4\n3 0 1")); }), ErrorCode::TruncatedFile);
  EXPECT_EQ(error_of([] { parse_polydata(minimal_file("")); }), ErrorCode::TruncatedFile);
  EXPECT_EQ(error_of([] { parse_polydata(minimal_file("LINES 1 3\n2 0 1\nWIDGETS 3\n")); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(error_of([] { parse_polydata("not a vtk file\n"); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(error_of([] { parse_polydata("# vtk DataFile Version 3.0\nt\nBINARY\nDATASET POLYDATA\n"); }),
            ErrorCode::MalformedHeader);
}

TEST(Polydata, SkipsAttributeBlocksWithWarning) {
  std::vector<std::string> warnings;
  const auto b = parse_polydata(minimal_file("POLYGONS 1 4\n3 0 1 2\nLINES 1 3\n2 0 1\nPOINT_DATA 5\nSCALARS s float\n"),
                                &warnings);
  EXPECT_EQ(b.num_streamlines(), 1u);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(Polydata, DoublePointsAccepted) {
  const auto text = "# vtk DataFile Version 4.2\nx\nASCII\nDATASET POLYDATA\nPOINTS 2 double\n0.5 1.5 2.5\n3 4 5\nLINES 1 3\n2 0 1\n";
  EXPECT_EQ(parse_polydata(text).streamlines[0][0], Point3(0.5, 1.5, 2.5));
}

TEST(Polydata, RoundTrip) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto b = testing_support::random_bundle(seed, 12, 50.0);
    b.subject_id = "s" + std::to_string(seed);
    b.cluster_id = "c1";
    b.tract_label = "AF_left";
    const auto back = parse_polydata(write_polydata(b));
    ASSERT_EQ(back.num_streamlines(), b.num_streamlines());
    ASSERT_EQ(back.num_points(), b.num_points());
    EXPECT_EQ(back.subject_id, b.subject_id);
    EXPECT_EQ(back.tract_label, b.tract_label);
    double worst = 0;
    for (std::size_t i = 0; i < b.streamlines.size(); ++i) {
      ASSERT_EQ(back.streamlines[i].size(), b.streamlines[i].size());
      for (std::size_t j = 0; j < b.streamlines[i].size(); ++j)
        worst = std::max(worst, (back.streamlines[i][j] - b.streamlines[i][j]).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(Polydata, CountsInLinesHeader) {
  Bundle b;
  b.streamlines.push_back({Point3(0, 0, 0), Point3(1, 1, 1)});
  EXPECT_NE(write_polydata(b).find("LINES 1 3\n"), std::string::npos);
  EXPECT_EQ(error_of([] { write_polydata(Bundle{}); }), ErrorCode::InvalidBundle);
}

TEST(Polydata, FuzzNeverCrashes) {
  const std::string seed_text = write_polydata(testing_support::random_bundle(3, 4, 10.0));
  std::mt19937_64 rng(99);
  int parsed = 0, rejected = 0;
  for (int iter = 0; iter < 3000; ++iter) {
    std::string text = seed_text;
    std::uniform_int_distribution<int> op(0, 3);
    const int edits = 1 + iter % 6;
    for (int e = 0; e < edits && !text.empty(); ++e) {
      std::uniform_int_distribution<std::size_t> pos(0, text.size() - 1);
      switch (op(rng)) {
        case 0: text[pos(rng)] = static_cast<char>(rng() & 0xFF); break;
        case 1: text.erase(pos(rng), 1 + rng() % 8); break;
        case 2: text.insert(pos(rng), 1, "0123456789 -\n.eE"[rng() % 16]); break;
        case 3: text.resize(pos(rng)); break;
      }
    }
    try {
      parse_polydata(text);
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_EQ(parsed + rejected, 3000);
  EXPECT_GT(rejected, 0);
}

TEST(Native, RoundTripBitExactAt32Bit) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto b = testing_support::random_bundle(seed, 20, 80.0);
    const auto bytes = write_native(b);
    const auto back = read_native(bytes);
    ASSERT_EQ(back.num_streamlines(), b.num_streamlines());
    for (std::size_t i = 0; i < b.streamlines.size(); ++i) {
      ASSERT_EQ(back.streamlines[i].size(), b.streamlines[i].size());
      for (std::size_t j = 0; j < b.streamlines[i].size(); ++j)
        for (int c = 0; c < 3; ++c)
          EXPECT_EQ(std::bit_cast<std::uint32_t>(static_cast<float>(back.streamlines[i][j][c])),
                    std::bit_cast<std::uint32_t>(static_cast<float>(b.streamlines[i][j][c])));
    }
    EXPECT_EQ(write_native(back), bytes);
  }
}

TEST(Native, Errors) {
  const auto good = write_native(testing_support::random_bundle(1, 3, 10.0));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_of([&] { read_native(bad_magic); }), ErrorCode::BadMagic);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(error_of([&] { read_native(bad_version); }), ErrorCode::BadVersion);
  EXPECT_EQ(error_of([&] { read_native(good.substr(0, good.size() - 5)); }), ErrorCode::TruncatedFile);
  auto inflated = good;
  inflated[9] = static_cast<char>(0x7F);  // first streamline's point count
  EXPECT_EQ(error_of([&] { read_native(inflated); }), ErrorCode::TruncatedFile);
}

TEST(Files, LoadSniffsFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "bshape_tractio_test";
  auto b = testing_support::random_bundle(5, 6, 20.0);
  save_bundle(dir / "a.vtk", b);
  save_bundle(dir / "a.t2sb", b);
  EXPECT_EQ(load_bundle(dir / "a.vtk").num_points(), b.num_points());
  EXPECT_EQ(load_bundle(dir / "a.t2sb").num_points(), b.num_points());
  std::filesystem::remove_all(dir);
}
