#pragma once

// Deep gated networks: a feature network whose pre-activations produce the
// gates and a value network that consumes them. The value network may be
// wider than the feature network by an integer padding factor m, in which
// case every feature gate drives m value units.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>

#include "npl/kernels.hpp"
#include "npl/net.hpp"

namespace npl {

enum class Regime { DLNPF, FLNPF, FRNPF_II, FRNPF_DI };

std::string_view to_string(Regime regime);
/// Accepts "dlnpf", "flnpf", "frnpf_ii", "frnpf_di" (case-insensitive).
Regime parse_regime(std::string_view name);

struct DgnModel {
  Architecture arch;  // feature network; the value network shares d_in and depth
  std::size_t pad = 1;
  Regime regime = Regime::FRNPF_II;
  GateMode gates;
  Weights feature;
  Weights value;

  Architecture value_arch() const;
  bool feature_trainable() const { return regime == Regime::DLNPF; }
};

/// `beta` selects soft gates; nullopt means hard gates. DLNPF requires a
/// positive beta, FLNPF requires `pretrained` with the same architecture.
/// FRNPF_DI draws one weight set from `seed_f` and uses it for both networks.
DgnModel build_dgn(const Architecture& arch, Regime regime, std::optional<double> beta,
                   std::uint64_t seed_f, std::uint64_t seed_v,
                   const Weights* pretrained = nullptr, const WeightInit& init = WeightInit::he());

/// G(k*w + i, l) = G(i, l) for k = 0..m-1.
GatePattern expand_gates(const GatePattern& gates, std::size_t m);

struct DgnForward {
  double y_hat = 0.0;
  GatePattern gates;  // feature-width gates handed to the value network
  ActivationRecord feature;
  ActivationRecord value;
};

DgnForward dgn_forward(const DgnModel& model, std::span<const double> x);

struct DgnTangent {
  Vector feature;  // d y / d Theta^f, canonical order; output head entries are 0
  Vector value;    // d y / d Theta^v
};

DgnTangent dgn_ntf(const DgnModel& model, std::span<const double> x);

/// Gradient of <output_grad, y> w.r.t. both weight sets.
struct DgnGradient {
  Weights feature;
  Weights value;
};
DgnGradient dgn_backprop(const DgnModel& model, const DgnForward& fwd,
                         std::span<const double> output_grad);

struct DgnKernels {
  GramMatrix value;    // K^v
  GramMatrix feature;  // K^f
};

DgnKernels dgn_kernels(const DgnModel& model, std::span<const Vector> xs);

/// Widens the value network to m*w with fresh bernoulli(sigma_base / sqrt(m))
/// weights and replicated gates. Requires hard gates and frozen features.
DgnModel pad_dgn(const DgnModel& model, std::size_t m, double sigma_base, std::uint64_t seed);

/// Binary layout (little-endian): "DGN1", u32 d_in, u32 w, u32 d, u32 regime
/// tag, f64 beta (0 for hard gates), then Theta^f and Theta^v as f64 in
/// canonical order. Padded or multi-output models cannot be written.
std::vector<std::uint8_t> encode_dgn(const DgnModel& model);
DgnModel decode_dgn(std::span<const std::uint8_t> bytes);
void write_dgn(const DgnModel& model, const std::filesystem::path& path);
DgnModel read_dgn(const std::filesystem::path& path);

}  // namespace npl
