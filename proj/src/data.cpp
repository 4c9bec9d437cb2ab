#include "npl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "npl/errors.hpp"
#include "npl/rng.hpp"

namespace npl {

namespace {

double clipped_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> n(0.0, 1.0);
  return std::clamp(n(rng), -3.0, 3.0) * stddev;
}

void generate(const SyntheticSpec& spec, std::size_t per_class, Rng& rng,
              std::vector<Vector>& xs, Vector& ys) {
  for (std::size_t k = 0; k < per_class; ++k) {
    for (int label : {-1, +1}) {
      Vector x(spec.dim, 0.0);
      if (spec.kind == SyntheticSpec::Kind::two_blobs) {
        for (double& v : x) v = clipped_normal(rng, spec.stddev);
        x[0] += label * spec.separation / 2.0;
      } else {
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        for (double& v : x) v = clipped_normal(rng, spec.stddev);
        if (label > 0) {
          const double a = angle(rng);
          x[0] += spec.separation * std::cos(a);
          x[1] += spec.separation * std::sin(a);
        }
      }
      xs.push_back(std::move(x));
      ys.push_back(label);
    }
  }
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void LabeledDataset::validate() const {
  if (x.empty()) throw DimensionError("dataset is empty");
  if (x.size() != y.size()) throw DimensionError("dataset: input and label counts differ");
  if (test_x.size() != test_y.size()) throw DimensionError("dataset: test input and label counts differ");
  const std::size_t d = d_in();
  if (d == 0) throw DimensionError("dataset: zero-dimensional inputs");
  for (const auto& v : x)
    if (v.size() != d) throw DimensionError("dataset: ragged inputs");
  for (const auto& v : test_x)
    if (v.size() != d) throw DimensionError("dataset: ragged test inputs");
}

std::size_t class_id(double label) {
  if (label == -1.0) return 0;
  if (label == 1.0) return 1;
  if (label < 0 || label != std::floor(label)) throw ParameterError("label is not a class id");
  return static_cast<std::size_t>(label);
}

SyntheticSpec::Kind parse_synthetic_kind(std::string_view name) {
  if (name == "two_blobs") return SyntheticSpec::Kind::two_blobs;
  if (name == "scaled_pair") return SyntheticSpec::Kind::scaled_pair;
  if (name == "ring_vs_center") return SyntheticSpec::Kind::ring_vs_center;
  throw ParameterError("unknown synthetic dataset '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticSpec::Kind kind) {
  switch (kind) {
    case SyntheticSpec::Kind::two_blobs: return "two_blobs";
    case SyntheticSpec::Kind::scaled_pair: return "scaled_pair";
    case SyntheticSpec::Kind::ring_vs_center: return "ring_vs_center";
  }
  return "unknown";
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
  LabeledDataset out;
  if (spec.kind == SyntheticSpec::Kind::scaled_pair) {
    if (spec.base.empty()) throw ParameterError("scaled_pair needs a base vector");
    if (!(spec.factor > 0.0)) throw ParameterError("scaled_pair factor must be positive");
    Vector half = spec.base;
    for (double& v : half) v *= spec.factor;
    out.x = {spec.base, half};
    out.y = {1.0, -1.0};
    return out;
  }
  if (spec.n_per_class < 1) throw ParameterError("n_per_class must be >= 1");
  if (!(spec.stddev >= 0.0) || !std::isfinite(spec.separation))
    throw ParameterError("invalid noise or separation");
  if (spec.dim < 1 || (spec.kind == SyntheticSpec::Kind::ring_vs_center && spec.dim < 2))
    throw ParameterError("synthetic dimension too small");
  Rng train_rng(derive_seed(spec.seed, 1));
  generate(spec, spec.n_per_class, train_rng, out.x, out.y);
  if (spec.n_test_per_class > 0) {
    Rng test_rng(derive_seed(spec.seed, 2));
    generate(spec, spec.n_test_per_class, test_rng, out.test_x, out.test_y);
  }
  return out;
}

std::vector<Vector> normalize_rows(std::span<const Vector> xs) {
  std::vector<Vector> out(xs.begin(), xs.end());
  for (auto& x : out) {
    const double n = norm2(x);
    if (n > 0)
      for (double& v : x) v /= n;
  }
  return out;
}

IdxFile parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic) {
  if (bytes.size() < 4) throw FormatError("IDX: file shorter than its header");
  IdxFile f;
  f.magic = read_be32(bytes, 0);
  if (f.magic != expected_magic)
    throw FormatError("IDX: bad magic " + hex32(f.magic) + ", expected " + hex32(expected_magic));
  const std::size_t ndims = f.magic & 0xFF;
  if ((f.magic >> 8) != 0x08) throw FormatError("IDX: only unsigned byte payloads are supported");
  if (bytes.size() < 4 + 4 * ndims) throw FormatError("IDX: truncated dimension header");
  std::uint64_t expected = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    f.dims.push_back(read_be32(bytes, 4 + 4 * k));
    expected *= f.dims.back();
  }
  const std::size_t offset = 4 + 4 * ndims;
  const std::size_t have = bytes.size() - offset;
  if (have < expected)
    throw FormatError("IDX: truncated payload (" + std::to_string(have) + " of " +
                      std::to_string(expected) + " bytes)");
  if (have > expected) throw FormatError("IDX: trailing bytes after payload");
  f.payload.assign(bytes.begin() + std::ptrdiff_t(offset), bytes.end());
  return f;
}

IdxFile read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  const auto bytes = slurp(path);
  try {
    return parse_idx(bytes, expected_magic);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx(const IdxFile& file) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
  };
  put(file.magic);
  for (auto d : file.dims) put(d);
  out.insert(out.end(), file.payload.begin(), file.payload.end());
  return out;
}

LabeledDataset binary_mnist(const IdxFile& images, const IdxFile& labels,
                            std::pair<int, int> digits, std::optional<std::size_t> cap) {
  if (images.magic != kIdxImageMagic || images.dims.size() != 3)
    throw FormatError("IDX images: expected magic 0x00000803 with 3 dimensions");
  if (labels.magic != kIdxLabelMagic || labels.dims.size() != 1)
    throw FormatError("IDX labels: expected magic 0x00000801 with 1 dimension");
  if (images.dims[0] != labels.dims[0])
    throw FormatError("IDX: image count " + std::to_string(images.dims[0]) +
                      " does not match label count " + std::to_string(labels.dims[0]));
  const std::size_t pixels = std::size_t(images.dims[1]) * images.dims[2];
  LabeledDataset out;
  for (std::size_t k = 0; k < labels.dims[0]; ++k) {
    if (cap && out.size() >= *cap) break;
    const int digit = labels.payload[k];
    if (digit != digits.first && digit != digits.second) continue;
    Vector x(pixels);
    for (std::size_t p = 0; p < pixels; ++p) x[p] = images.payload[k * pixels + p] / 255.0;
    out.x.push_back(std::move(x));
    out.y.push_back(digit == digits.first ? -1.0 : 1.0);
  }
  return out;
}

LabeledDataset load_binary_mnist(const std::filesystem::path& images,
                                 const std::filesystem::path& labels, std::pair<int, int> digits,
                                 std::optional<std::size_t> cap) {
  return binary_mnist(read_idx(images, kIdxImageMagic), read_idx(labels, kIdxLabelMagic), digits, cap);
}

LabeledDataset split_tail(LabeledDataset data, std::size_t n_test) {
  if (n_test >= data.size()) throw ParameterError("split_tail: test split would empty the training set");
  const auto cut = std::ptrdiff_t(data.size() - n_test);
  data.test_x.assign(std::make_move_iterator(data.x.begin() + cut), std::make_move_iterator(data.x.end()));
  data.test_y.assign(data.y.begin() + cut, data.y.end());
  data.x.resize(std::size_t(cut));
  data.y.resize(std::size_t(cut));
  return data;
}

}  // namespace npl
