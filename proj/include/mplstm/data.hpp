#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "mplstm/math.hpp"
#include "mplstm/sample.hpp"

namespace mplstm {

/// An immutable-after-load collection of samples sharing (m, n, d, K).
struct Dataset {
  std::size_t num_perspectives = 0;
  std::size_t length = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<SequenceSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Throws ValidationError unless every sample matches the header counts.
  void check() const;
};

// -- MPS1 binary format ---------------------------------------------------------
//
//   offset  size  field
//        0     4  magic "MPS1"
//        4     4  version (u32) = 1
//        8     4  num_samples (u32)
//       12     4  m (u32)
//       16     4  n (u32)
//       20     4  d (u32)
//       24     4  K (u32)    -- header is 28 bytes on disk
//
// followed by num_samples u32 labels and num_samples*m*n*d float32 features in
// (sample, perspective, instance, feature) order. All little-endian.

inline constexpr char kDatasetMagic[4] = {'M', 'P', 'S', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 28;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public FormatError {
public:
  using FormatError::FormatError;
};
class BadVersionError : public FormatError {
public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
public:
  using FormatError::FormatError;
};
class TrailingBytesError : public FormatError {
public:
  using FormatError::FormatError;
};
class CountError : public FormatError {
public:
  using FormatError::FormatError;
};
class CountOverflowError : public FormatError {
public:
  using FormatError::FormatError;
};
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Expected file size for the given counts; throws CountOverflowError if it
/// does not fit in 64 bits.
std::uint64_t dataset_file_size(std::uint64_t num_samples, std::uint64_t m, std::uint64_t n,
                                std::uint64_t d);

std::vector<unsigned char> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::vector<unsigned char>& bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

// -- synthetic modular-sum task ------------------------------------------------------

/// Perspective 1 shows onehot(a), perspective 2 onehot(b), each instance with
/// i.i.d. Gaussian noise; the label is (a + b) mod K. Either view alone is
/// independent of the label.
struct ModSumSpec {
  std::size_t num_classes = 4;
  std::size_t length = 8;
  double noise_std = 0.25;
  std::size_t num_samples = 1000;

  void validate() const;
};

SequenceSample modsum_sample(std::size_t num_classes, std::size_t length, std::size_t a,
                             std::size_t b, double noise_std, Rng& rng);

Dataset gen_modsum(const ModSumSpec& spec, Rng& rng);

/// Permutes sample indices with rng and cuts them into consecutive batches;
/// the last batch may be short.
std::vector<std::vector<std::size_t>> split_batches(std::size_t num_samples,
                                                    std::size_t batch_size, Rng& rng);

/// Dataset restricted to one perspective (m = 1).
Dataset select_perspective(const Dataset& dataset, std::size_t perspective);

}  // namespace mplstm
