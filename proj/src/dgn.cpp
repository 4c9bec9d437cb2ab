#include "npl/dgn.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "npl/errors.hpp"
#include "npl/rng.hpp"

namespace npl {

namespace {

constexpr std::uint64_t kFeatureStream = 0xFEA7;
constexpr std::uint64_t kValueStream = 0x5A1E;
constexpr char kMagic[4] = {'D', 'G', 'N', '1'};

void outer_add(Matrix& m, std::span<const double> left, std::span<const double> right) {
  for (std::size_t i = 0; i < left.size(); ++i) {
    if (left[i] == 0.0) continue;
    auto r = m.row(i);
    for (std::size_t j = 0; j < right.size(); ++j) r[j] += left[i] * right[j];
  }
}

std::uint32_t regime_tag(Regime r) { return static_cast<std::uint32_t>(r) + 1; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes_[pos_++]) << (8 * b);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(bytes_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("DGN file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::DLNPF: return "dlnpf";
    case Regime::FLNPF: return "flnpf";
    case Regime::FRNPF_II: return "frnpf_ii";
    case Regime::FRNPF_DI: return "frnpf_di";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  for (Regime r : {Regime::DLNPF, Regime::FLNPF, Regime::FRNPF_II, Regime::FRNPF_DI})
    if (to_string(r) == lower) return r;
  throw ParameterError("unknown regime '" + std::string(name) + "'");
}

Architecture DgnModel::value_arch() const {
  Architecture a = arch;
  a.width = arch.width * pad;
  return a;
}

DgnModel build_dgn(const Architecture& arch, Regime regime, std::optional<double> beta,
                   std::uint64_t seed_f, std::uint64_t seed_v, const Weights* pretrained,
                   const WeightInit& init) {
  arch.validate();
  DgnModel m;
  m.arch = arch;
  m.regime = regime;
  if (regime == Regime::DLNPF && !(beta && *beta > 0.0))
    throw ParameterError("DLNPF requires soft gates with beta > 0");
  m.gates = beta ? GateMode::soft(*beta) : GateMode::hard();

  switch (regime) {
    case Regime::FLNPF:
      if (!pretrained) throw ParameterError("FLNPF requires pretrained feature weights");
      if (!pretrained->matches(arch))
        throw DimensionError("FLNPF donor weights do not match the architecture");
      m.feature = *pretrained;
      m.value = init_weights(arch, init, derive_seed(seed_v, kValueStream));
      break;
    case Regime::FRNPF_DI:
      m.feature = init_weights(arch, init, derive_seed(seed_f, kFeatureStream));
      m.value = m.feature;
      break;
    case Regime::DLNPF:
    case Regime::FRNPF_II:
      m.feature = init_weights(arch, init, derive_seed(seed_f, kFeatureStream));
      m.value = init_weights(arch, init, derive_seed(seed_v, kValueStream));
      break;
  }
  return m;
}

GatePattern expand_gates(const GatePattern& gates, std::size_t m) {
  if (m < 1) throw ParameterError("padding factor must be >= 1");
  GatePattern out(gates.size());
  for (std::size_t l = 0; l < gates.size(); ++l) {
    out[l].reserve(gates[l].size() * m);
    for (std::size_t k = 0; k < m; ++k) out[l].insert(out[l].end(), gates[l].begin(), gates[l].end());
  }
  return out;
}

DgnForward dgn_forward(const DgnModel& model, std::span<const double> x) {
  DgnForward f;
  f.feature = forward(model.arch, model.feature, x, GateMode::hard());
  if (model.gates.is_soft()) {
    f.gates.resize(f.feature.pre.size());
    for (std::size_t l = 0; l < f.gates.size(); ++l) {
      const auto& q = f.feature.pre[l];
      f.gates[l].resize(q.size());
      for (std::size_t i = 0; i < q.size(); ++i) f.gates[l][i] = soft_gate(q[i], model.gates.beta);
    }
  } else {
    f.gates = f.feature.gates;
  }
  const GatePattern value_gates = model.pad == 1 ? f.gates : expand_gates(f.gates, model.pad);
  f.value = forward_gated(model.value_arch(), model.value, x, value_gates);
  f.y_hat = f.value.output.at(0);
  return f;
}

DgnGradient dgn_backprop(const DgnModel& model, const DgnForward& fwd,
                         std::span<const double> output_grad) {
  DgnGradient g;
  const bool soft = model.gates.is_soft();
  GatePattern value_gate_grad;
  g.value = backprop(model.value, fwd.value, output_grad, soft ? &value_gate_grad : nullptr);
  g.feature = Weights::zeros(model.arch);
  if (!soft) return g;

  const std::size_t w = model.arch.width;
  const std::size_t hidden = model.arch.hidden_layers();
  std::vector<Vector> inject(hidden, Vector(w, 0.0));
  for (std::size_t l = 0; l < hidden; ++l)
    for (std::size_t i = 0; i < w; ++i) {
      double dg = 0.0;
      for (std::size_t k = 0; k < model.pad; ++k) dg += value_gate_grad[l][k * w + i];
      inject[l][i] = dg * soft_gate_derivative(fwd.feature.pre[l][i], model.gates.beta);
    }
  // The feature network's own head is never read; its hidden layers pass
  // gradient back through hard ReLUs.
  Vector dz(w, 0.0);
  for (std::size_t kk = hidden; kk-- > 0;) {
    Vector dq(w);
    for (std::size_t i = 0; i < w; ++i) dq[i] = inject[kk][i] + dz[i] * fwd.feature.gates[kk][i];
    outer_add(g.feature.layers[kk], dq,
              kk == 0 ? std::span<const double>(fwd.feature.input)
                      : std::span<const double>(fwd.feature.hidden[kk - 1]));
    if (kk > 0) dz = matvec_transposed(model.feature.layers[kk], dq);
  }
  return g;
}

DgnTangent dgn_ntf(const DgnModel& model, std::span<const double> x) {
  if (model.arch.d_out != 1) throw DimensionError("dgn_ntf: scalar-output models only");
  const auto fwd = dgn_forward(model, x);
  const double seed = 1.0;
  auto grad = dgn_backprop(model, fwd, std::span<const double>(&seed, 1));
  DgnTangent t;
  t.value = grad.value.flatten();
  t.feature = model.feature_trainable() ? grad.feature.flatten() : Vector(model.feature.size(), 0.0);
  return t;
}

DgnKernels dgn_kernels(const DgnModel& model, std::span<const Vector> xs) {
  std::vector<ActivationRecord> value_records;
  std::vector<Vector> feature_tangents;
  value_records.reserve(xs.size());
  const bool need_feature = model.gates.is_soft() && model.feature_trainable();
  for (const auto& x : xs) {
    auto fwd = dgn_forward(model, x);
    if (need_feature) {
      const double seed = 1.0;
      feature_tangents.push_back(dgn_backprop(model, fwd, std::span<const double>(&seed, 1)).feature.flatten());
    }
    value_records.push_back(std::move(fwd.value));
  }
  DgnKernels k;
  k.value = tangent_gram_layerwise(model.value, value_records, GramKind::Kv);
  if (need_feature) {
    k.feature = feature_gram(feature_tangents, GramKind::Kf);
  } else {
    k.feature = GramMatrix{GramKind::Kf, Matrix(xs.size(), xs.size())};
  }
  return k;
}

DgnModel pad_dgn(const DgnModel& model, std::size_t m, double sigma_base, std::uint64_t seed) {
  if (m < 1) throw ParameterError("pad_dgn: m must be >= 1");
  if (model.gates.is_soft()) throw ParameterError("pad_dgn: requires hard gates");
  if (model.feature_trainable()) throw ParameterError("pad_dgn: requires frozen feature weights");
  DgnModel out = model;
  out.pad = m;
  out.value = init_weights(out.value_arch(), WeightInit::bernoulli(sigma_base / std::sqrt(double(m))), seed);
  return out;
}

std::vector<std::uint8_t> encode_dgn(const DgnModel& model) {
  if (model.pad != 1) throw ParameterError("encode_dgn: padded models are not serialisable");
  if (model.arch.d_out != 1) throw ParameterError("encode_dgn: scalar-output models only");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, std::uint32_t(model.arch.d_in));
  put_u32(out, std::uint32_t(model.arch.width));
  put_u32(out, std::uint32_t(model.arch.depth));
  put_u32(out, regime_tag(model.regime));
  put_f64(out, model.gates.is_soft() ? model.gates.beta : 0.0);
  for (double v : model.feature.flatten()) put_f64(out, v);
  for (double v : model.value.flatten()) put_f64(out, v);
  return out;
}

DgnModel decode_dgn(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError("DGN file: bad magic, expected \"DGN1\"");
  Reader r(bytes.subspan(4));
  DgnModel m;
  m.arch.d_in = r.u32();
  m.arch.width = r.u32();
  m.arch.depth = r.u32();
  try {
    m.arch.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("DGN file: ") + e.what());
  }
  const std::uint32_t tag = r.u32();
  if (tag < 1 || tag > 4) throw FormatError("DGN file: unknown regime tag " + std::to_string(tag));
  m.regime = static_cast<Regime>(tag - 1);
  const double beta = r.f64();
  m.gates = beta > 0.0 ? GateMode::soft(beta) : GateMode::hard();
  const std::size_t count = m.arch.weight_count();
  if (r.remaining() != 2 * count * 8) throw FormatError("DGN file: payload length does not match header");
  Vector flat(count);
  m.feature = Weights::zeros(m.arch);
  m.value = Weights::zeros(m.arch);
  for (double& v : flat) v = r.f64();
  m.feature.assign(flat);
  for (double& v : flat) v = r.f64();
  m.value.assign(flat);
  return m;
}

void write_dgn(const DgnModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_dgn(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DgnModel read_dgn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dgn(bytes);
}

}  // namespace npl
