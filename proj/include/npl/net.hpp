#pragma once

// Bias-free fully-connected ReLU networks with explicit gates.
//
// Layers are stored 0-based: layers[k] maps z(k) to q(k+1), so layers[0] is
// w x d_in, layers[1..d-2] are w x w and layers[d-1] is d_out x w. Hidden
// layer k (0-based, k = 0..d-2) carries pre-activations, gates and outputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "npl/matrix.hpp"

namespace npl {

struct Architecture {
  std::size_t d_in = 1;
  std::size_t width = 1;
  std::size_t depth = 2;  // number of weight layers; depth-1 hidden layers
  std::size_t d_out = 1;

  /// Throws ParameterError unless d >= 2, w >= 1, d_in >= 1, d_out >= 1.
  void validate() const;
  std::size_t hidden_layers() const { return depth - 1; }
  std::size_t layer_rows(std::size_t k) const { return k + 1 == depth ? d_out : width; }
  std::size_t layer_cols(std::size_t k) const { return k == 0 ? d_in : width; }
  /// d_in*w + (d-2)*w^2 + d_out*w
  std::size_t weight_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Per-hidden-layer gate values, gates[k][i] for hidden layer k, unit i.
using GatePattern = std::vector<Vector>;

struct Weights {
  std::vector<Matrix> layers;

  static Weights zeros(const Architecture& arch);

  bool matches(const Architecture& arch) const;
  /// Throws DimensionError when the shapes differ from `arch`.
  void check(const Architecture& arch) const;
  std::size_t size() const;

  /// Canonical flat order: layer-major, then row, then column.
  Vector flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const Weights&, const Weights&) = default;
};

struct GateMode {
  enum class Kind { hard, soft };
  Kind kind = Kind::hard;
  double beta = 0.0;

  static GateMode hard() { return {}; }
  /// Throws ParameterError when beta <= 0.
  static GateMode soft(double beta);
  bool is_soft() const { return kind == Kind::soft; }
  double gate(double q) const;

  friend bool operator==(const GateMode&, const GateMode&) = default;
};

/// 1 / (1 + exp(-beta q)); beta must be positive.
double soft_gate(double q, double beta);
/// beta / ((1 + exp(beta q)) (1 + exp(-beta q))) = beta g (1 - g).
double soft_gate_derivative(double q, double beta);

/// Everything a forward pass produced. Gates are either derived from the
/// network's own pre-activations (self-gated, `mode` applies) or supplied
/// externally and then treated as constants.
struct ActivationRecord {
  Vector input;
  std::vector<Vector> pre;     // q, per hidden layer
  GatePattern gates;           // G, per hidden layer
  std::vector<Vector> hidden;  // z = q * G, per hidden layer
  Vector output;
  GateMode mode;
  bool external_gates = false;

  double y_hat() const { return output.at(0); }
  friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

ActivationRecord forward(const Architecture& arch, const Weights& weights,
                         std::span<const double> x, GateMode mode = GateMode::hard());

/// Value-network style pass: z = q * G with G taken from `gates`.
ActivationRecord forward_gated(const Architecture& arch, const Weights& weights,
                               std::span<const double> x, const GatePattern& gates);

/// Reverse-mode gradient of <output_grad, output> w.r.t. every weight.
/// Self-gated soft records include the gate's dependence on q. When
/// `gate_grad` is non-null it receives d<output_grad, output>/dG per hidden
/// unit (dz * q), with G held as an independent input.
Weights backprop(const Weights& weights, const ActivationRecord& record,
                 std::span<const double> output_grad, GatePattern* gate_grad = nullptr);

/// Per-layer error signals d<output_grad, output>/dq for every weight layer
/// (hidden layers first, output layer last). Tangent kernels factor through
/// these: d y / d layers[k](i, j) = deltas[k][i] * input_of_layer_k[j].
std::vector<Vector> backprop_deltas(const Weights& weights, const ActivationRecord& record,
                                    std::span<const double> output_grad);

/// Neural tangent feature: gradient of the scalar output w.r.t. all weights,
/// in canonical order.
Vector ntf(const Architecture& arch, const Weights& weights, std::span<const double> x,
           GateMode mode = GateMode::hard());

struct WeightInit {
  enum class Kind { bernoulli, gaussian, he };
  Kind kind = Kind::gaussian;
  double scale = 1.0;  // sigma for bernoulli, std for gaussian, unused for he

  /// Entries uniformly from {-sigma, +sigma}.
  static WeightInit bernoulli(double sigma);
  static WeightInit gaussian(double stddev);
  /// N(0, 2/fan_in) for hidden layers and N(0, 1/fan_in) for the output layer.
  static WeightInit he();
};

Weights init_weights(const Architecture& arch, const WeightInit& scheme, std::uint64_t seed);

/// Hard gate pattern of `x` under the network's own pre-activations.
GatePattern gate_pattern(const Architecture& arch, const Weights& weights,
                         std::span<const double> x);

}  // namespace npl
