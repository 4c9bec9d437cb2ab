#pragma once

// Datasets: synthetic generators and MNIST IDX ingestion.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "npl/matrix.hpp"

namespace npl {

/// Targets are real for squared loss; for cross-entropy they hold class ids
/// (non-negative integers stored as doubles, or the binary labels -1/+1).
struct LabeledDataset {
  std::vector<Vector> x;
  Vector y;
  std::vector<Vector> test_x;
  Vector test_y;

  std::size_t size() const { return x.size(); }
  std::size_t d_in() const { return x.empty() ? 0 : x.front().size(); }
  bool has_test() const { return !test_x.empty(); }
  /// Throws DimensionError on ragged inputs or label count mismatch.
  void validate() const;
};

/// Maps labels to class ids: {-1,+1} -> {0,1}; otherwise the label itself.
std::size_t class_id(double label);

struct SyntheticSpec {
  enum class Kind { two_blobs, scaled_pair, ring_vs_center };
  Kind kind = Kind::two_blobs;
  std::size_t n_per_class = 50;
  std::size_t n_test_per_class = 0;
  std::size_t dim = 2;
  double separation = 10.0;  // blob centre distance, ring radius
  double stddev = 1.0;
  Vector base;               // scaled_pair: x
  double factor = 0.5;       // scaled_pair: second point is factor * x
  std::uint64_t seed = 0;
};

SyntheticSpec::Kind parse_synthetic_kind(std::string_view name);
std::string_view to_string(SyntheticSpec::Kind kind);

/// two_blobs: centres at +-(separation/2) e_1 with Gaussian noise clipped to
/// +-3 stddev per coordinate, so the classes are linearly separable whenever
/// separation > 6 stddev. Label -1 is the first blob, +1 the second.
/// scaled_pair: {(x, +1), (factor * x, -1)}, n_per_class ignored.
/// ring_vs_center: centre cluster (-1) against a noisy ring (+1) in the first
/// two coordinates.
LabeledDataset gen_synthetic(const SyntheticSpec& spec);

/// Unit-norm rows (zero rows kept as-is).
std::vector<Vector> normalize_rows(std::span<const Vector> xs);

struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Throws FormatError naming `expected_magic` on mismatch, and on truncated
/// or oversized payloads.
IdxFile parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic);
IdxFile read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
std::vector<std::uint8_t> encode_idx(const IdxFile& file);

/// Keeps the two digits in file order; the first maps to -1 and the second to
/// +1. Pixels are divided by 255.
LabeledDataset binary_mnist(const IdxFile& images, const IdxFile& labels,
                            std::pair<int, int> digits = {4, 7},
                            std::optional<std::size_t> cap = std::nullopt);
LabeledDataset load_binary_mnist(const std::filesystem::path& images,
                                 const std::filesystem::path& labels,
                                 std::pair<int, int> digits = {4, 7},
                                 std::optional<std::size_t> cap = std::nullopt);

/// Moves the last `n_test` examples into the test split.
LabeledDataset split_tail(LabeledDataset data, std::size_t n_test);

}  // namespace npl
