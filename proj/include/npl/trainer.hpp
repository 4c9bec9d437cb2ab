#pragma once

// Gradient-descent training of ReLU networks and DGNs with path-view
// instrumentation: error vectors, gate switching, kernel snapshots, nu.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "npl/data.hpp"
#include "npl/dgn.hpp"
#include "npl/kernels.hpp"
#include "npl/net.hpp"

namespace npl {

struct ReluNet {
  Architecture arch;
  Weights weights;
};

enum class Loss { squared, cross_entropy };
std::string_view to_string(Loss loss);
Loss parse_loss(std::string_view name);

struct Optimizer {
  enum class Kind { sgd, adam };
  Kind kind = Kind::sgd;
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static Optimizer sgd(double step) { return {Kind::sgd, step}; }
  static Optimizer adam(double step) { return {Kind::adam, step}; }
};

struct TrainConfig {
  Optimizer optimizer;
  std::size_t batch_size = 0;  // 0 means full batch
  std::size_t epochs = 1;
  Loss loss = Loss::squared;
  std::uint64_t seed = 0;
  bool track_switches = true;
  bool record_errors = false;     // store e_t (full-batch squared loss only)
  std::size_t snapshot_every = 0; // kernel snapshots on the training set
  std::size_t nu_every = 0;       // nu and kernel norms on the probe set
  std::size_t eval_every = 1;     // epoch records; 0 keeps only the last epoch
  std::vector<Vector> probe_x;    // defaults to the training inputs
  Vector probe_y;

  /// Throws ParameterError on a negative step or a non-positive Adam parameter.
  void validate() const;
};

struct GateFlip {
  std::size_t example;
  std::size_t layer;
  std::size_t unit;
  friend bool operator==(const GateFlip&, const GateFlip&) = default;
};

struct SwitchEvent {
  std::size_t step;
  std::vector<GateFlip> flips;
};

struct NpfMetrics {
  double nu = std::numeric_limits<double>::quiet_NaN();
  double kv_trace = std::numeric_limits<double>::quiet_NaN();
  double kv_frobenius = std::numeric_limits<double>::quiet_NaN();
  double kf_trace = std::numeric_limits<double>::quiet_NaN();
  double kf_frobenius = std::numeric_limits<double>::quiet_NaN();
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;  // pre-update loss on the step's batch
  double error_norm = std::numeric_limits<double>::quiet_NaN();
  std::size_t switch_count = 0;
  NpfMetrics metrics;
};

struct KernelSnapshot {
  std::size_t step = 0;
  Matrix ntk;  // K (ReLU) or K^v + K^f (DGN)
  Matrix npk;
  Matrix lambda;
  Matrix kv;
  Matrix kf;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<Vector> errors;          // e_t before step t, when recorded
  std::vector<std::size_t> switch_instants;  // T_0 = 0 first
  std::vector<SwitchEvent> switches;
  std::vector<KernelSnapshot> snapshots;
  std::vector<EpochRecord> epochs;
};

/// Deterministic given the config seed. Frozen feature weights are never
/// touched. Throws DivergenceError when the loss exceeds 1e12 or is NaN.
Trajectory train(ReluNet& net, const LabeledDataset& data, const TrainConfig& config);
Trajectory train(DgnModel& model, const LabeledDataset& data, const TrainConfig& config);

/// Fraction of examples classified correctly: sign agreement for a scalar
/// output, argmax for several.
double accuracy(const ReluNet& net, std::span<const Vector> xs, std::span<const double> ys);
double accuracy(const DgnModel& model, std::span<const Vector> xs, std::span<const double> ys);

/// Flips between per-example gate patterns, in (example, layer, unit) order.
std::vector<GateFlip> detect_switch(std::span<const GatePattern> prev, std::span<const GatePattern> next);

struct ErrorDynamicsReport {
  double alpha = 0.0;      // step actually probed (halved on gate switches)
  double ratio = 0.0;      // ||de + alpha K e|| / ||alpha K e||
  std::size_t retries = 0;
};

/// One full-batch squared-loss GD step compared with the first-order
/// prediction -alpha K e, K taken at the pre-step weights. Throws
/// ParameterError when gates keep switching down to a minimal step.
ErrorDynamicsReport error_dynamics_check(const ReluNet& net, const LabeledDataset& data, double alpha);
ErrorDynamicsReport error_dynamics_check(const DgnModel& model, const LabeledDataset& data, double alpha);

struct ErrorDynamicsSlope {
  std::vector<double> alphas;
  std::vector<double> ratios;
  double slope = 0.0;  // geometric mean of ratio(alpha/2) / ratio(alpha)
};

template <class Model>
ErrorDynamicsSlope error_dynamics_slope(const Model& model, const LabeledDataset& data,
                                        double alpha, std::size_t halvings = 4);

NpfMetrics track_npf_metrics(const ReluNet& net, std::span<const Vector> xs, std::span<const double> y);
NpfMetrics track_npf_metrics(const DgnModel& model, std::span<const Vector> xs, std::span<const double> y);

}  // namespace npl
