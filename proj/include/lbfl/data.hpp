#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lbfl/core_math.hpp"
#include "lbfl/errors.hpp"
#include "lbfl/model.hpp"

namespace lbfl {

using IndexSet = std::vector<std::size_t>;

struct Dataset {
  std::string name;
  std::vector<double> features;  // n * input_dim, row-major
  std::vector<std::uint32_t> labels;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  BatchView view() const { return {features, labels, input_dim}; }

  Batch gather(std::span<const std::size_t> rows) const {
    Batch b;
    b.input_dim = input_dim;
    b.features.reserve(rows.size() * input_dim);
    b.labels.reserve(rows.size());
    for (auto r : rows) {
      const auto* first = features.data() + r * input_dim;
      b.features.insert(b.features.end(), first, first + input_dim);
      b.labels.push_back(labels.at(r));
    }
    return b;
  }

  // Keeps the first `n` rows.
  void truncate(std::size_t n) {
    if (n >= size()) return;
    features.resize(n * input_dim);
    labels.resize(n);
  }
};

// ---------------------------------------------------------------------------
// IDX reader (MNIST / Fashion-MNIST)

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v = (v << 8) | bytes_[offset_ + k];
    offset_ += 4;
    return v;
  }

  std::span<const unsigned char> take(std::size_t n) {
    need(n);
    std::span<const unsigned char> s(bytes_.data() + offset_, n);
    offset_ += n;
    return s;
  }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - offset_ < n) {
      throw IoError("truncated IDX file '" + path_ + "': needed " + std::to_string(n) + " bytes at offset " +
                    std::to_string(offset_) + ", file has " + std::to_string(bytes_.size()));
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace detail

/// Parses an IDX image file (magic 0x803, n x rows x cols unsigned bytes)
/// and the matching label file (magic 0x801). Pixels are scaled by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::string name = "idx") {
  const auto image_bytes = detail::read_all(images_path);
  const auto label_bytes = detail::read_all(labels_path);

  detail::ByteReader images(image_bytes, images_path);
  const auto image_magic = images.u32_be();
  if (image_magic != kIdxImageMagic) {
    throw FormatError("'" + images_path + "': expected image magic " + detail::hex32(kIdxImageMagic) + ", found " +
                      detail::hex32(image_magic));
  }
  const std::size_t n = images.u32_be();
  const std::size_t rows = images.u32_be();
  const std::size_t cols = images.u32_be();

  detail::ByteReader labels(label_bytes, labels_path);
  const auto label_magic = labels.u32_be();
  if (label_magic != kIdxLabelMagic) {
    throw FormatError("'" + labels_path + "': expected label magic " + detail::hex32(kIdxLabelMagic) + ", found " +
                      detail::hex32(label_magic));
  }
  const std::size_t n_labels = labels.u32_be();
  if (n_labels != n) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) +
                      " labels");
  }
  if (n == 0) throw FormatError("IDX files contain no samples");

  Dataset ds;
  ds.name = std::move(name);
  ds.input_dim = rows * cols;
  const auto pixels = images.take(n * ds.input_dim);
  ds.features.resize(pixels.size());
  std::transform(pixels.begin(), pixels.end(), ds.features.begin(),
                 [](unsigned char p) { return static_cast<double>(p) / 255.0; });
  const auto raw_labels = labels.take(n);
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.num_classes = std::max<std::size_t>(2, *std::max_element(ds.labels.begin(), ds.labels.end()) + 1u);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

/// C unit-variance Gaussian clusters. Cluster c is centred at
/// separation * s * e_{c mod D} with s = +1 for c < D, -1 for D <= c < 2D
/// (and so on, alternating). Centres do not depend on the RNG, so train and
/// test sets drawn from different streams share one distribution.
inline Dataset synth_blobs(RngStream& rng, std::size_t n, std::size_t num_classes, std::size_t input_dim,
                           double separation) {
  if (num_classes < 2) throw ConfigError("synth_blobs: num_classes must be >= 2");
  if (input_dim < 1) throw ConfigError("synth_blobs: input_dim must be >= 1");
  if (n < num_classes) throw ConfigError("synth_blobs: n must be >= num_classes");
  if (!(separation >= 0.0)) throw ConfigError("synth_blobs: separation must be >= 0");

  Dataset ds;
  ds.name = "synthetic";
  ds.input_dim = input_dim;
  ds.num_classes = num_classes;
  ds.features.resize(n * input_dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(i % num_classes);
    ds.labels[i] = c;
    double* row = ds.features.data() + i * input_dim;
    for (std::size_t j = 0; j < input_dim; ++j) row[j] = rng.normal();
    const double sign = ((c / input_dim) % 2 == 0) ? 1.0 : -1.0;
    row[c % input_dim] += sign * separation;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Federation split

struct FederationSplit {
  std::vector<IndexSet> client_partitions;  // into the training set
  IndexSet server_eval;                     // into the test set
  IndexSet server_filter;                   // into the test set
};

/// Shuffles the training set and slices it into N near-equal partitions
/// (the first |train| mod N clients get one extra row). The shuffled test
/// set is split into an evaluation subset of floor(|train|/N) rows and a
/// filtering subset holding the remainder.
inline FederationSplit make_split(std::size_t train_size, std::size_t test_size, std::size_t num_clients,
                                  RngStream& rng) {
  if (num_clients < 1) throw ConfigError("make_split: need at least one client");
  if (train_size < num_clients) throw ConfigError("make_split: fewer training rows than clients");
  const std::size_t eval_size = train_size / num_clients;
  if (test_size <= eval_size) {
    throw ConfigError("make_split: test set of " + std::to_string(test_size) +
                      " rows cannot hold a client-sized evaluation subset of " + std::to_string(eval_size) +
                      " plus a non-empty filtering subset");
  }

  FederationSplit split;
  IndexSet train(train_size);
  std::iota(train.begin(), train.end(), std::size_t{0});
  rng.shuffle(train);
  const std::size_t base = train_size / num_clients;
  const std::size_t extra = train_size % num_clients;
  std::size_t at = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    split.client_partitions.emplace_back(train.begin() + static_cast<std::ptrdiff_t>(at),
                                         train.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }

  IndexSet test(test_size);
  std::iota(test.begin(), test.end(), std::size_t{0});
  rng.shuffle(test);
  split.server_eval.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(eval_size));
  split.server_filter.assign(test.begin() + static_cast<std::ptrdiff_t>(eval_size), test.end());
  return split;
}

inline FederationSplit make_split(const Dataset& train, const Dataset& test, std::size_t num_clients,
                                  RngStream& rng) {
  return make_split(train.size(), test.size(), num_clients, rng);
}

/// Uniform sample of M_S filtering indices without replacement, returned
/// in ascending order.
inline IndexSet subsample_filter(const FederationSplit& split, std::size_t filter_size, RngStream& rng) {
  const auto& pool = split.server_filter;
  if (filter_size < 1 || filter_size > pool.size()) {
    throw ConfigError("filter_size (M_S) must be in [1, " + std::to_string(pool.size()) + "], got " +
                      std::to_string(filter_size));
  }
  IndexSet out(pool);
  if (filter_size < pool.size()) {
    // Partial Fisher-Yates: the first filter_size slots become the sample.
    for (std::size_t i = 0; i < filter_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(out.size() - i));
      std::swap(out[i], out[j]);
    }
    out.resize(filter_size);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lbfl
