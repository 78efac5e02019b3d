#include <gtest/gtest.h>

#include <vector>

#include "faultnet/mat5.hpp"
#include "faultnet/rng.hpp"
#include "support/mat5_writer.hpp"

using namespace faultnet;
using faultnet_test::Mat5WriteOptions;
using faultnet_test::write_mat5;

namespace {

Mat5Matrix column_vector(std::vector<double> values) {
  Mat5Matrix m;
  m.rows = values.size();
  m.cols = 1;
  m.values = std::move(values);
  return m;
}

}  // namespace

TEST(Mat5, ZeroHeaderIsBadMagic) {
  std::vector<unsigned char> bytes(128, 0);
  EXPECT_THROW(parse_mat5(bytes), BadMagic);
}

TEST(Mat5, ShortFileIsTruncated) {
  std::vector<unsigned char> bytes(64, 0);
  EXPECT_THROW(parse_mat5(bytes), TruncatedFile);
}

TEST(Mat5, BadEndianIndicatorIsBadMagic) {
  auto bytes = write_mat5({{"X", column_vector({1.0})}});
  bytes[126] = 'Q';
  EXPECT_THROW(parse_mat5(bytes), BadMagic);
}

TEST(Mat5, GoldenColumnVectorRoundTrip) {
  auto bytes = write_mat5({{"X_DE_time", column_vector({1.0, 2.0, 3.0})}});
  Mat5File parsed = parse_mat5(bytes);
  ASSERT_EQ(parsed.size(), 1u);
  const Mat5Matrix& m = parsed.at("X_DE_time");
  EXPECT_EQ(m.rows, 3u);
  EXPECT_EQ(m.cols, 1u);
  EXPECT_EQ(m.values, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Mat5, CompressedElementParsesIdentically) {
  const std::map<std::string, Mat5Matrix> vars = {
      {"X_DE_time", column_vector({1.0, 2.0, 3.0})}};
  Mat5File plain = parse_mat5(write_mat5(vars));
  Mat5File packed = parse_mat5(write_mat5(vars, {.compress = true}));
  ASSERT_EQ(packed.size(), 1u);
  EXPECT_EQ(packed.at("X_DE_time").values, plain.at("X_DE_time").values);
  EXPECT_EQ(packed.at("X_DE_time").rows, plain.at("X_DE_time").rows);
}

TEST(Mat5, BigEndianRoundTrip) {
  const std::map<std::string, Mat5Matrix> vars = {
      {"X_DE_time", column_vector({-1.5, 0.25, 1e300})}};
  Mat5File parsed = parse_mat5(write_mat5(vars, {.big_endian = true}));
  EXPECT_EQ(parsed.at("X_DE_time").values,
            (std::vector<double>{-1.5, 0.25, 1e300}));
}

TEST(Mat5, BigEndianCompressedRoundTrip) {
  const std::map<std::string, Mat5Matrix> vars = {
      {"X_DE_time", column_vector({4.0, 5.0})}};
  Mat5File parsed =
      parse_mat5(write_mat5(vars, {.big_endian = true, .compress = true}));
  EXPECT_EQ(parsed.at("X_DE_time").values, (std::vector<double>{4.0, 5.0}));
}

TEST(Mat5, ShortNameUsesSmallElement) {
  Mat5File parsed = parse_mat5(write_mat5({{"X", column_vector({7.0})}}));
  EXPECT_EQ(parsed.at("X").values, (std::vector<double>{7.0}));
}

TEST(Mat5, ColumnMajorFileOrderMapsToRowMajor) {
  Mat5Matrix m;
  m.rows = 2;
  m.cols = 3;
  m.values = {1, 2, 3, 4, 5, 6};  // row-major [[1,2,3],[4,5,6]]
  Mat5File parsed = parse_mat5(write_mat5({{"grid", m}}));
  const Mat5Matrix& g = parsed.at("grid");
  ASSERT_EQ(g.rows, 2u);
  ASSERT_EQ(g.cols, 3u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_DOUBLE_EQ(g.at(r, c), m.at(r, c));
    }
  }
}

TEST(Mat5, MultipleVariables) {
  Mat5File parsed = parse_mat5(write_mat5({
      {"X_DE_time", column_vector({1.0})},
      {"X_FE_time", column_vector({2.0, 3.0})},
  }));
  EXPECT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed.at("X_FE_time").rows, 2u);
}

TEST(Mat5, NonDoubleClassIsUnsupportedAndNamesVariable) {
  auto bytes = write_mat5({{"bad_var", column_vector({1.0, 2.0})}});
  // Array-flags word sits right after the file header (128), the miMATRIX
  // tag (8) and the flags subelement tag (8); its low byte is the class.
  bytes[144] = 4;  // mxCHAR
  try {
    parse_mat5(bytes);
    FAIL() << "expected UnsupportedElement";
  } catch (const UnsupportedElement& e) {
    EXPECT_NE(std::string(e.what()).find("bad_var"), std::string::npos);
  }
}

TEST(Mat5, ComplexFlagIsUnsupported) {
  auto bytes = write_mat5({{"cvar", column_vector({1.0})}});
  bytes[145] |= 0x08;  // complex bit in the flags byte
  EXPECT_THROW(parse_mat5(bytes), UnsupportedElement);
}

TEST(Mat5, TruncatedDataThrows) {
  auto bytes = write_mat5({{"X_DE_time", column_vector({1.0, 2.0, 3.0})}});
  bytes.resize(bytes.size() - 12);
  EXPECT_THROW(parse_mat5(bytes), TruncatedFile);
}

TEST(Mat5, RandomMatrixRoundTripBothEndiannesses) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Mat5Matrix m;
    m.rows = 1 + rng.uniform_index(8);
    m.cols = 1 + rng.uniform_index(8);
    m.values.resize(m.rows * m.cols);
    for (double& v : m.values) v = rng.normal(0.0, 10.0);

    const bool big = trial % 2 == 1;
    const bool compress = trial % 3 == 0;
    Mat5File parsed = parse_mat5(
        write_mat5({{"m", m}}, {.big_endian = big, .compress = compress}));
    ASSERT_EQ(parsed.at("m").rows, m.rows);
    ASSERT_EQ(parsed.at("m").cols, m.cols);
    EXPECT_EQ(parsed.at("m").values, m.values);
  }
}
