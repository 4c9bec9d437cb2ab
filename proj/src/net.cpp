#include "npl/net.hpp"

#include <cmath>
#include <string>

#include "npl/errors.hpp"
#include "npl/rng.hpp"

namespace npl {

void Architecture::validate() const {
  if (depth < 2) throw ParameterError("architecture: depth must be >= 2");
  if (width < 1) throw ParameterError("architecture: width must be >= 1");
  if (d_in < 1) throw ParameterError("architecture: d_in must be >= 1");
  if (d_out < 1) throw ParameterError("architecture: d_out must be >= 1");
}

std::size_t Architecture::weight_count() const {
  return d_in * width + (depth - 2) * width * width + d_out * width;
}

Weights Weights::zeros(const Architecture& arch) {
  arch.validate();
  Weights w;
  w.layers.reserve(arch.depth);
  for (std::size_t k = 0; k < arch.depth; ++k)
    w.layers.emplace_back(arch.layer_rows(k), arch.layer_cols(k));
  return w;
}

bool Weights::matches(const Architecture& arch) const {
  if (layers.size() != arch.depth) return false;
  for (std::size_t k = 0; k < arch.depth; ++k)
    if (layers[k].rows() != arch.layer_rows(k) || layers[k].cols() != arch.layer_cols(k))
      return false;
  return true;
}

void Weights::check(const Architecture& arch) const {
  if (!matches(arch)) throw DimensionError("weights do not match the architecture");
}

std::size_t Weights::size() const {
  std::size_t n = 0;
  for (const auto& m : layers) n += m.size();
  return n;
}

Vector Weights::flatten() const {
  Vector flat;
  flat.reserve(size());
  for (const auto& m : layers) flat.insert(flat.end(), m.values().begin(), m.values().end());
  return flat;
}

void Weights::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw DimensionError("weights: flat vector has wrong length");
  std::size_t off = 0;
  for (auto& m : layers) {
    auto v = m.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = flat[off + i];
    off += v.size();
  }
}

GateMode GateMode::soft(double beta) {
  if (!(beta > 0.0)) throw ParameterError("soft gate: beta must be positive");
  return {Kind::soft, beta};
}

double GateMode::gate(double q) const {
  if (kind == Kind::soft) return soft_gate(q, beta);
  return q > 0.0 ? 1.0 : 0.0;
}

double soft_gate(double q, double beta) {
  const double e = std::exp(-beta * std::abs(q));
  return q >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

double soft_gate_derivative(double q, double beta) {
  const double e = std::exp(-beta * std::abs(q));
  return beta * e / ((1.0 + e) * (1.0 + e));
}

namespace {

void check_input(const Architecture& arch, const Weights& weights, std::span<const double> x) {
  arch.validate();
  weights.check(arch);
  if (x.size() != arch.d_in)
    throw DimensionError("input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(arch.d_in));
}

template <class GateFn>
ActivationRecord propagate(const Architecture& arch, const Weights& weights,
                           std::span<const double> x, GateFn&& gate_of) {
  ActivationRecord rec;
  rec.input.assign(x.begin(), x.end());
  const std::size_t hidden = arch.hidden_layers();
  rec.pre.resize(hidden);
  rec.gates.resize(hidden);
  rec.hidden.resize(hidden);
  std::span<const double> z = rec.input;
  for (std::size_t k = 0; k < hidden; ++k) {
    Vector q = matvec(weights.layers[k], z);
    Vector g(q.size());
    Vector h(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      g[i] = gate_of(k, i, q[i]);
      h[i] = q[i] * g[i];
    }
    rec.pre[k] = std::move(q);
    rec.gates[k] = std::move(g);
    rec.hidden[k] = std::move(h);
    z = rec.hidden[k];
  }
  rec.output = matvec(weights.layers[hidden], z);
  return rec;
}

void add_outer(Matrix& m, std::span<const double> left, std::span<const double> right) {
  for (std::size_t i = 0; i < left.size(); ++i) {
    const double li = left[i];
    if (li == 0.0) continue;
    auto r = m.row(i);
    for (std::size_t j = 0; j < right.size(); ++j) r[j] += li * right[j];
  }
}

}  // namespace

ActivationRecord forward(const Architecture& arch, const Weights& weights,
                         std::span<const double> x, GateMode mode) {
  check_input(arch, weights, x);
  auto rec = propagate(arch, weights, x,
                       [&](std::size_t, std::size_t, double q) { return mode.gate(q); });
  rec.mode = mode;
  return rec;
}

ActivationRecord forward_gated(const Architecture& arch, const Weights& weights,
                               std::span<const double> x, const GatePattern& gates) {
  check_input(arch, weights, x);
  if (gates.size() != arch.hidden_layers())
    throw DimensionError("gate pattern has wrong number of layers");
  for (const auto& g : gates)
    if (g.size() != arch.width) throw DimensionError("gate pattern has wrong width");
  auto rec = propagate(arch, weights, x,
                       [&](std::size_t k, std::size_t i, double) { return gates[k][i]; });
  rec.external_gates = true;
  return rec;
}

std::vector<Vector> backprop_deltas(const Weights& weights, const ActivationRecord& rec,
                                    std::span<const double> output_grad) {
  const std::size_t depth = weights.layers.size();
  const std::size_t hidden = depth - 1;
  if (rec.pre.size() != hidden) throw DimensionError("backprop: record does not match weights");
  if (output_grad.size() != weights.layers.back().rows())
    throw DimensionError("backprop: output gradient has wrong length");
  const bool soft_self = !rec.external_gates && rec.mode.is_soft();

  std::vector<Vector> deltas(depth);
  deltas[hidden].assign(output_grad.begin(), output_grad.end());
  for (std::size_t kk = hidden; kk-- > 0;) {
    const Vector dz = matvec_transposed(weights.layers[kk + 1], deltas[kk + 1]);
    const auto& q = rec.pre[kk];
    const auto& g = rec.gates[kk];
    Vector dq(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      dq[i] = dz[i] * g[i];
      if (soft_self) dq[i] += dz[i] * q[i] * soft_gate_derivative(q[i], rec.mode.beta);
    }
    deltas[kk] = std::move(dq);
  }
  return deltas;
}

Weights backprop(const Weights& weights, const ActivationRecord& rec,
                 std::span<const double> output_grad, GatePattern* gate_grad) {
  const auto deltas = backprop_deltas(weights, rec, output_grad);
  const std::size_t depth = weights.layers.size();
  Weights grad;
  grad.layers.reserve(depth);
  for (const auto& m : weights.layers) grad.layers.emplace_back(m.rows(), m.cols());
  for (std::size_t k = 0; k < depth; ++k)
    add_outer(grad.layers[k], deltas[k],
              k == 0 ? std::span<const double>(rec.input) : std::span<const double>(rec.hidden[k - 1]));
  if (gate_grad) {
    gate_grad->assign(depth - 1, Vector{});
    for (std::size_t k = 0; k + 1 < depth; ++k) {
      // dz at hidden layer k, re-derived from the next layer's delta.
      const Vector dz = matvec_transposed(weights.layers[k + 1], deltas[k + 1]);
      Vector dg(dz.size());
      for (std::size_t i = 0; i < dz.size(); ++i) dg[i] = dz[i] * rec.pre[k][i];
      (*gate_grad)[k] = std::move(dg);
    }
  }
  return grad;
}

Vector ntf(const Architecture& arch, const Weights& weights, std::span<const double> x,
           GateMode mode) {
  if (arch.d_out != 1) throw DimensionError("ntf: scalar-output networks only");
  const auto rec = forward(arch, weights, x, mode);
  const double seed = 1.0;
  return backprop(weights, rec, std::span<const double>(&seed, 1)).flatten();
}

WeightInit WeightInit::bernoulli(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("bernoulli init: sigma must be positive");
  return {Kind::bernoulli, sigma};
}

WeightInit WeightInit::gaussian(double stddev) {
  if (!(stddev > 0.0)) throw ParameterError("gaussian init: std must be positive");
  return {Kind::gaussian, stddev};
}

WeightInit WeightInit::he() { return {Kind::he, 1.0}; }

Weights init_weights(const Architecture& arch, const WeightInit& scheme, std::uint64_t seed) {
  if (!(scheme.scale > 0.0)) throw ParameterError("init: scale must be positive");
  Weights w = Weights::zeros(arch);
  Rng rng(seed);
  switch (scheme.kind) {
    case WeightInit::Kind::bernoulli: {
      std::uint64_t bits = 0;
      int left = 0;
      for (auto& m : w.layers)
        for (double& v : m.values()) {
          if (left == 0) {
            bits = rng();
            left = 64;
          }
          v = (bits & 1U) ? scheme.scale : -scheme.scale;
          bits >>= 1;
          --left;
        }
      break;
    }
    case WeightInit::Kind::gaussian: {
      std::normal_distribution<double> nd(0.0, scheme.scale);
      for (auto& m : w.layers)
        for (double& v : m.values()) v = nd(rng);
      break;
    }
    case WeightInit::Kind::he: {
      for (std::size_t k = 0; k < w.layers.size(); ++k) {
        const double gain = k + 1 == w.layers.size() ? 1.0 : 2.0;
        std::normal_distribution<double> nd(0.0, std::sqrt(gain / double(arch.layer_cols(k))));
        for (double& v : w.layers[k].values()) v = nd(rng);
      }
      break;
    }
  }
  return w;
}

GatePattern gate_pattern(const Architecture& arch, const Weights& weights,
                         std::span<const double> x) {
  return forward(arch, weights, x, GateMode::hard()).gates;
}

}  // namespace npl
