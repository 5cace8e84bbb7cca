#include "mplstm/data.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

namespace mplstm {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t narrow_count(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw CountOverflowError(std::string(what) + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw CountOverflowError("MPS1 payload size overflows 64 bits");
  }
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a) {
    throw CountOverflowError("MPS1 payload size overflows 64 bits");
  }
  return a + b;
}

}  // namespace

void Dataset::check() const {
  if (num_perspectives == 0 || length == 0 || feature_dim == 0 || num_classes == 0) {
    throw ValidationError("dataset counts must all be >= 1");
  }
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sample = samples[s];
    validate_sample(sample, num_perspectives, feature_dim);
    if (sample.length() != length) {
      throw RaggedSequenceError("sample " + std::to_string(s) + " has length " +
                                std::to_string(sample.length()) + ", dataset length is " +
                                std::to_string(length));
    }
    if (sample.label >= num_classes) {
      throw LabelError("sample " + std::to_string(s) + " label " + std::to_string(sample.label) +
                       " out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

std::uint64_t dataset_file_size(std::uint64_t num_samples, std::uint64_t m, std::uint64_t n,
                                std::uint64_t d) {
  const std::uint64_t values = checked_mul(checked_mul(checked_mul(num_samples, m), n), d);
  return checked_add(checked_add(kDatasetHeaderBytes, checked_mul(4, num_samples)),
                     checked_mul(4, values));
}

std::vector<unsigned char> encode_dataset(const Dataset& dataset) {
  dataset.check();
  if (dataset.empty()) throw ValidationError("cannot write an empty dataset");
  const auto ns = narrow_count(dataset.size(), "num_samples");
  const auto m = narrow_count(dataset.num_perspectives, "m");
  const auto n = narrow_count(dataset.length, "n");
  const auto d = narrow_count(dataset.feature_dim, "d");
  const auto k = narrow_count(dataset.num_classes, "K");

  std::vector<unsigned char> out;
  out.reserve(dataset_file_size(ns, m, n, d));
  out.insert(out.end(), std::begin(kDatasetMagic), std::end(kDatasetMagic));
  for (std::uint32_t v : {kDatasetVersion, ns, m, n, d, k}) put_u32(out, v);
  for (const auto& s : dataset.samples) put_u32(out, static_cast<std::uint32_t>(s.label));
  for (const auto& s : dataset.samples) {
    for (const auto& seq : s.perspectives) {
      for (const auto& inst : seq) {
        for (double v : inst) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

Dataset decode_dataset(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kDatasetMagic), std::end(kDatasetMagic),
                                      bytes.begin())) {
    throw BadMagicError("not an MPS1 file");
  }
  if (bytes.size() < kDatasetHeaderBytes) {
    throw TruncatedError("MPS1 header truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  const unsigned char* p = bytes.data();
  const std::uint32_t version = get_u32(p + 4);
  if (version != kDatasetVersion) {
    throw BadVersionError("unsupported MPS1 version " + std::to_string(version));
  }
  const std::uint32_t ns = get_u32(p + 8);
  const std::uint32_t m = get_u32(p + 12);
  const std::uint32_t n = get_u32(p + 16);
  const std::uint32_t d = get_u32(p + 20);
  const std::uint32_t k = get_u32(p + 24);
  if (ns == 0 || m == 0 || n == 0 || d == 0 || k == 0) {
    throw CountError("MPS1 counts must all be >= 1");
  }
  const std::uint64_t expected = dataset_file_size(ns, m, n, d);
  if (bytes.size() < expected) {
    throw TruncatedError("MPS1 payload truncated: " + std::to_string(bytes.size()) +
                         " bytes, header promises " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw TrailingBytesError("MPS1 file has " + std::to_string(bytes.size() - expected) +
                             " trailing bytes");
  }

  Dataset ds;
  ds.num_perspectives = m;
  ds.length = n;
  ds.feature_dim = d;
  ds.num_classes = k;
  ds.samples.resize(ns);
  const unsigned char* labels = p + kDatasetHeaderBytes;
  for (std::uint32_t s = 0; s < ns; ++s) {
    const std::uint32_t label = get_u32(labels + 4 * s);
    if (label >= k) {
      throw LabelError("MPS1 sample " + std::to_string(s) + " label " + std::to_string(label) +
                       " out of range for K = " + std::to_string(k));
    }
    ds.samples[s].label = label;
  }
  const unsigned char* cursor = labels + 4 * static_cast<std::size_t>(ns);
  for (auto& sample : ds.samples) {
    sample.perspectives.assign(m, std::vector<Vec>(n, Vec(d)));
    for (auto& seq : sample.perspectives) {
      for (auto& inst : seq) {
        for (std::size_t f = 0; f < d; ++f, cursor += 4) {
          inst[f] = static_cast<double>(std::bit_cast<float>(get_u32(cursor)));
        }
      }
    }
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path.string() + " failed");
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from " + path.string() + " failed");
  return decode_dataset(bytes);
}

void ModSumSpec::validate() const {
  if (num_classes < 2) throw ValidationError("modsum needs K >= 2");
  if (length == 0) throw ValidationError("modsum needs n >= 1");
  if (num_samples == 0) throw ValidationError("modsum needs at least one sample");
  if (!(noise_std >= 0.0)) throw ValidationError("modsum noise_std must be >= 0");
}

SequenceSample modsum_sample(std::size_t num_classes, std::size_t length, std::size_t a,
                             std::size_t b, double noise_std, Rng& rng) {
  SequenceSample s;
  s.label = (a + b) % num_classes;
  for (std::size_t hot : {a, b}) {
    std::vector<Vec> seq;
    seq.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
      Vec x(num_classes);
      for (std::size_t f = 0; f < num_classes; ++f) {
        x[f] = (f == hot ? 1.0 : 0.0) + noise_std * rng.normal();
      }
      seq.push_back(std::move(x));
    }
    s.perspectives.push_back(std::move(seq));
  }
  return s;
}

Dataset gen_modsum(const ModSumSpec& spec, Rng& rng) {
  spec.validate();
  Dataset ds;
  ds.num_perspectives = 2;
  ds.length = spec.length;
  ds.feature_dim = spec.num_classes;
  ds.num_classes = spec.num_classes;
  ds.samples.reserve(spec.num_samples);
  for (std::size_t s = 0; s < spec.num_samples; ++s) {
    const std::size_t a = rng.below(spec.num_classes);
    const std::size_t b = rng.below(spec.num_classes);
    ds.samples.push_back(modsum_sample(spec.num_classes, spec.length, a, b, spec.noise_std, rng));
  }
  return ds;
}

std::vector<std::vector<std::size_t>> split_batches(std::size_t num_samples,
                                                    std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = num_samples; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < num_samples; start += batch_size) {
    const std::size_t stop = std::min(num_samples, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

Dataset select_perspective(const Dataset& dataset, std::size_t perspective) {
  if (perspective >= dataset.num_perspectives) {
    throw ValidationError("perspective " + std::to_string(perspective) + " out of range");
  }
  Dataset out = dataset;
  out.num_perspectives = 1;
  for (auto& s : out.samples) {
    auto keep = std::move(s.perspectives[perspective]);
    s.perspectives.clear();
    s.perspectives.push_back(std::move(keep));
  }
  return out;
}

}  // namespace mplstm
