#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mplstm/data.hpp"

using namespace mplstm;

namespace {

const std::string kGolden = std::string(MPLSTM_TEST_DATA) + "/golden_2sample.mps";

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::vector<unsigned char>& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<unsigned char>(v >> (8 * i));
}

Dataset small_dataset(Rng& rng, std::size_t count) {
  Dataset d;
  d.num_perspectives = 2;
  d.length = 3;
  d.feature_dim = 4;
  d.num_classes = 5;
  for (std::size_t s = 0; s < count; ++s) d.samples.push_back(test::random_sample(rng, 2, 3, 4, 5));
  return d;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mplstm_test_data_" + name);
}

}  // namespace

TEST_CASE("golden fixture decodes to the hand-authored tensors") {
  const Dataset d = read_dataset(kGolden);
  CHECK(d.size() == 2);
  CHECK(d.num_perspectives == 2);
  CHECK(d.length == 2);
  CHECK(d.feature_dim == 3);
  CHECK(d.num_classes == 4);
  CHECK(d.samples[0].label == 3);
  CHECK(d.samples[1].label == 0);
  const auto& a = d.samples[0].perspectives;
  CHECK(a[0][0] == Vec{1, 0, -0.5});
  CHECK(a[0][1] == Vec{0.25, 2, -1});
  CHECK(a[1][0] == Vec{0, 1.5, 0.125});
  CHECK(a[1][1] == Vec{-3, 0.75, 4});
  const auto& b = d.samples[1].perspectives;
  CHECK(b[0][0] == Vec{-0.0625, 8, 1});
  CHECK(b[0][1] == Vec{0.5, -0.5, 0});
  CHECK(b[1][0] == Vec{2.5, -2.5, 16});
  CHECK(b[1][1] == Vec{0.375, 1, -7});
  CHECK(encode_dataset(d) == slurp(kGolden));
}

TEST_CASE("file size arithmetic") {
  CHECK(slurp(kGolden).size() == dataset_file_size(2, 2, 2, 3));
  CHECK(dataset_file_size(2, 2, 2, 3) == 28 + 4 * 2 + 4 * 2 * 2 * 2 * 3);
  CHECK_THROWS_AS(dataset_file_size(1ull << 40, 1ull << 20, 1ull << 20, 4), CountOverflowError);
}

TEST_CASE("decode errors") {
  const auto good = slurp(kGolden);
  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[3] = '2';
    CHECK_THROWS_AS(decode_dataset(bytes), BadMagicError);
  }
  SUBCASE("bad version") {
    auto bytes = good;
    put_u32(bytes, 4, 2);
    CHECK_THROWS_AS(decode_dataset(bytes), BadVersionError);
  }
  SUBCASE("truncated header") {
    const std::vector<unsigned char> bytes(good.begin(), good.begin() + 20);
    CHECK_THROWS_AS(decode_dataset(bytes), TruncatedError);
  }
  SUBCASE("truncated payload") {
    const std::vector<unsigned char> bytes(good.begin(), good.end() - 1);
    CHECK_THROWS_AS(decode_dataset(bytes), TruncatedError);
  }
  SUBCASE("trailing bytes") {
    auto bytes = good;
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_dataset(bytes), TrailingBytesError);
  }
  SUBCASE("zero count") {
    auto bytes = good;
    put_u32(bytes, 20, 0);
    CHECK_THROWS_AS(decode_dataset(bytes), CountError);
  }
  SUBCASE("label out of range") {
    auto bytes = good;
    put_u32(bytes, 28, 4);
    CHECK_THROWS_AS(decode_dataset(bytes), LabelError);
  }
  SUBCASE("every error is a format or validation error") {
    auto bytes = good;
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_dataset(bytes), FormatError);
  }
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(read_dataset("/nonexistent/dir/none.mps"), IoError);
}

TEST_CASE("round trip keeps labels exact and features at float32 resolution") {
  Rng rng(3);
  const Dataset d = small_dataset(rng, 7);
  const auto path = temp_path("roundtrip.mps");
  write_dataset(path, d);
  CHECK(std::filesystem::file_size(path) == dataset_file_size(7, 2, 3, 4));
  const Dataset back = read_dataset(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == d.size());
  for (std::size_t s = 0; s < d.size(); ++s) {
    CHECK(back.samples[s].label == d.samples[s].label);
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
          const double orig = d.samples[s].perspectives[p][i][k];
          CHECK(back.samples[s].perspectives[p][i][k] ==
                static_cast<double>(static_cast<float>(orig)));
        }
      }
    }
  }
  // Already-quantized data round trips bitwise.
  CHECK(encode_dataset(decode_dataset(encode_dataset(back))) == encode_dataset(back));
}

TEST_CASE("writing an inconsistent dataset is rejected") {
  Rng rng(4);
  Dataset d = small_dataset(rng, 2);
  d.samples[1].perspectives[0].pop_back();
  CHECK_THROWS_AS(encode_dataset(d), ValidationError);
  Dataset empty = small_dataset(rng, 0);
  CHECK_THROWS_AS(encode_dataset(empty), ValidationError);
}

TEST_CASE("modsum sample construction") {
  Rng rng(5);
  const SequenceSample s = modsum_sample(4, 6, 1, 2, 0.0, rng);
  CHECK(s.label == 3);
  CHECK(s.num_perspectives() == 2);
  CHECK(s.length() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s.perspectives[0][i] == Vec{0, 1, 0, 0});
    CHECK(s.perspectives[1][i] == Vec{0, 0, 1, 0});
  }
  CHECK(modsum_sample(4, 1, 3, 3, 0.0, rng).label == 2);
}

TEST_CASE("modsum spec validation") {
  ModSumSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.noise_std = -0.1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = ModSumSpec{};
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("modsum labels are uniform and each view alone is uninformative") {
  Rng rng(6);
  ModSumSpec spec;
  spec.num_samples = 10000;
  const Dataset d = gen_modsum(spec, rng);
  CHECK(d.feature_dim == 4);
  CHECK(d.num_classes == 4);

  std::vector<double> counts(4, 0.0);
  for (const auto& s : d.samples) counts[s.label] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 2500.0) * (c - 2500.0) / 2500.0;
  // chi-square with 3 degrees of freedom: P(X > 16.266) = 0.001.
  CHECK(chi2 < 16.266);

  // Best constant-per-view-argmax predictor on view 1, fitted and scored on
  // the same samples (an optimistic estimate, still near 1/K).
  std::vector<std::vector<double>> table(4, std::vector<double>(4, 0.0));
  for (const auto& s : d.samples) {
    Vec mean(4);
    for (const auto& inst : s.perspectives[0]) axpy(1.0, inst.span(), mean.span());
    table[argmax(mean)][s.label] += 1.0;
  }
  double correct = 0.0;
  for (const auto& row : table) correct += *std::max_element(row.begin(), row.end());
  CHECK(std::abs(correct / 10000.0 - 0.25) < 0.03);
}

TEST_CASE("modsum generation is deterministic") {
  ModSumSpec spec;
  spec.num_samples = 20;
  Rng a(7), b(7);
  CHECK(encode_dataset(gen_modsum(spec, a)) == encode_dataset(gen_modsum(spec, b)));
}

TEST_CASE("split batches") {
  Rng rng(8);
  const auto batches = split_batches(10, 4, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);

  CHECK(split_batches(10, 10, rng).size() == 1);
  CHECK(split_batches(10, 64, rng).size() == 1);
  Rng a(9), b(9);
  CHECK(split_batches(50, 7, a) == split_batches(50, 7, b));
  CHECK_THROWS_AS(split_batches(10, 0, rng), ValidationError);
}

TEST_CASE("select perspective") {
  const Dataset d = read_dataset(kGolden);
  const Dataset v = select_perspective(d, 1);
  CHECK(v.num_perspectives == 1);
  CHECK(v.samples[0].perspectives[0][1] == Vec{-3, 0.75, 4});
  CHECK(v.samples[1].label == 0);
  CHECK_THROWS_AS(select_perspective(d, 2), ValidationError);
}
