#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "ctsketch/cts_io.hpp"
#include "ctsketch/tensor.hpp"
#include "oracles.hpp"

using namespace ctsketch;

namespace {

DenseTensor iota_tensor(Shape dims) {
  std::vector<double> v(checked_product(dims));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) * 0.5 - 3.0;
  return DenseTensor(std::move(dims), std::move(v));
}

}  // namespace

TEST(DenseTensor, RejectsBadShapes) {
  EXPECT_THROW(DenseTensor({}, {}), ArgumentError);
  EXPECT_THROW(DenseTensor({2, 0}, {}), ArgumentError);
  EXPECT_THROW(DenseTensor({2, 3}, std::vector<double>(5)), ArgumentError);
  EXPECT_NO_THROW(DenseTensor({2, 3}, std::vector<double>(6)));
}

TEST(DenseTensor, RowMajorIndexing) {
  const auto t = iota_tensor({2, 3, 4});
  EXPECT_EQ(t.offset(std::vector<std::size_t>{1, 2, 3}), 23u);
  EXPECT_DOUBLE_EQ(t.at({1, 0, 2}), t.data()[12 + 2]);
  EXPECT_THROW(t.at({2, 0, 0}), ArgumentError);
}

TEST(Unfold, IdentityOnMatrices) {
  const auto t = iota_tensor({2, 3});
  EXPECT_EQ(unfold(t, 1), t);
}

TEST(Unfold, ThreeWaySplitAtLastAxis) {
  const auto t = iota_tensor({2, 3, 4});
  const auto m = unfold(t, 2);
  ASSERT_EQ(m.dims(), (Shape{6, 4}));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m.at({i * 3 + j, k}), t.at({i, j, k}));
    }
  }
}

TEST(Unfold, SplitAxisOutOfRange) {
  const auto t = iota_tensor({2, 3, 4});
  EXPECT_THROW(unfold(t, 0), ArgumentError);
  EXPECT_THROW(unfold(t, 3), ArgumentError);
  EXPECT_THROW(unfold(iota_tensor({5}), 1), ArgumentError);
}

TEST(Unfold, RefoldIsExactInverseOnRandomTensors) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  std::uniform_int_distribution<std::size_t> order(2, 5);
  for (int trial = 0; trial < 50; ++trial) {
    Shape dims(order(rng));
    for (auto& d : dims) d = ext(rng);
    DenseTensor t(dims, oracle::random_vector(checked_product(dims), rng));
    std::uniform_int_distribution<std::size_t> split(1, dims.size() - 1);
    const auto m = unfold(t, split(rng));
    EXPECT_EQ(refold(m, dims), t);
  }
}

TEST(FrobeniusNorm, Examples) {
  EXPECT_EQ(frobenius_norm(DenseTensor::zeros({3, 4})), 0.0);
  EXPECT_EQ(frobenius_norm(DenseTensor({1}, {3.0})), 3.0);
  EXPECT_EQ(frobenius_norm(DenseTensor({2, 2}, {1, 1, 1, 1})), 2.0);
}

TEST(Cts1, ByteLayoutIsLittleEndian) {
  const DenseTensor t({1, 2}, {1.0, -2.0});
  const auto bytes = encode_cts(t);
  const std::vector<std::uint8_t> expected = {
      'C', 'T', 'S', '1',                              // magic
      2, 0, 0, 0,                                      // u32 axis count
      1, 0, 0, 0, 0, 0, 0, 0,                          // u64 dims[0]
      2, 0, 0, 0, 0, 0, 0, 0,                          // u64 dims[1]
      0, 0, 0, 0, 0, 0, 0xf0, 0x3f,                    // 1.0
      0, 0, 0, 0, 0, 0, 0x00, 0xc0,                    // -2.0
  };
  EXPECT_EQ(bytes, expected);
  EXPECT_EQ(decode_cts(bytes), t);
}

TEST(Cts1, FileRoundTripAndCorruption) {
  const auto dir = std::filesystem::temp_directory_path() / "ctsketch_test_tensor";
  std::filesystem::create_directories(dir);
  const auto t = iota_tensor({3, 1, 4});
  write_cts(dir / "t.cts", t);
  EXPECT_EQ(read_cts(dir / "t.cts"), t);

  auto bytes = encode_cts(t);
  bytes.pop_back();
  EXPECT_THROW(decode_cts(bytes), IoError);
  bytes = encode_cts(t);
  bytes[0] = 'X';
  EXPECT_THROW(decode_cts(bytes), IoError);
  EXPECT_THROW(read_cts(dir / "missing.cts"), IoError);
}

TEST(ElementBudget, EnvironmentOverride) {
  ::unsetenv("CTS_ELEMENT_BUDGET");
  EXPECT_EQ(element_budget(), kDefaultElementBudget);
  ::setenv("CTS_ELEMENT_BUDGET", "1000", 1);
  EXPECT_EQ(element_budget(), 1000u);
  ::unsetenv("CTS_ELEMENT_BUDGET");
}
