#pragma once

// Monte Carlo checks of the fixed-gate kernel limit, path-gradient moments,
// kernel variance against width, and the memorisation network.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "npl/dgn.hpp"
#include "npl/kernels.hpp"

namespace npl {

struct McConfig {
  std::size_t trials = 200;
  std::vector<std::size_t> widths = {64, 256, 1024};  // value-network widths
  double sigma_prime = 1.0;                           // value weights are bernoulli(sigma' / sqrt(width))
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
};

struct McWidthResult {
  std::size_t width = 0;
  std::size_t pad = 0;
  double sigma = 0.0;
  Matrix mean_kv;
  Matrix target;  // d sigma^(2(d-1)) H at this width
  double frobenius_error = 0.0;   // ||mean - target||_F / ||target||_F
  double max_entry_error = 0.0;   // max |mean - target| / max |target|
};

struct McResult {
  std::vector<McWidthResult> rows;
  double target_spread = 0.0;  // max entrywise difference between targets across widths
};

/// `gates_model` supplies fixed hard gates from its frozen feature network;
/// every width must be a multiple of its feature width.
McResult mc_expected_ntk(const DgnModel& gates_model, std::span<const Vector> xs, const McConfig& cfg);

struct PathGradientMoments {
  double expected_same = 0.0;  // d sigma^(2(d-1))
  double same_min = 0.0;
  double same_max = 0.0;
  double cross_mean = 0.0;
  double cross_stderr = 0.0;
  std::size_t trials = 0;
};

PathGradientMoments path_gradient_moments(const Architecture& arch, double sigma, std::size_t trials,
                                          std::uint64_t seed, std::size_t threads = 1);

struct VarianceConfig {
  std::size_t d_in = 4;
  std::size_t depth = 3;
  std::size_t feature_width = 16;
  std::vector<std::size_t> widths = {64, 128, 256, 512};
  std::size_t trials = 2000;
  double sigma_prime = 1.0;
  std::uint64_t feature_seed = 1;
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
};

struct VarianceRow {
  std::size_t width = 0;
  double mean = 0.0;
  double variance = 0.0;
  bool low_confidence = false;  // fewer than 30 trials
};

struct VarianceResult {
  Vector x;
  Vector x_prime;
  std::vector<VarianceRow> rows;
  double slope = 0.0;  // least-squares slope of log variance against log width
};

/// Variance of the off-diagonal K^v(x, x') over value-weight draws, for two
/// unit-norm inputs drawn from the feature seed and fixed padded gates.
VarianceResult variance_vs_width(const VarianceConfig& cfg);

/// E[K_0] / d of the memorisation network: 1 on the diagonal, mu^(d-1) off it.
GramMatrix expected_memo_kernel(std::size_t n, std::size_t depth, double mu);

struct MemoClosedForm {
  double rho_max = 0.0;
  double rho_min = 0.0;
  std::size_t min_multiplicity = 0;
};

MemoClosedForm memo_spectrum_closed_form(std::size_t n, std::size_t depth, double mu);

struct SpectrumReport {
  Vector eigenvalues;  // ascending
  Vector ecdf;         // cumulative sums of the ascending eigenvalues
  double rho_max = 0.0;
  double rho_min = 0.0;
  std::optional<MemoClosedForm> predicted;
};

SpectrumReport spectrum_report(const Matrix& k, std::optional<MemoClosedForm> predicted = std::nullopt);

/// Input fixed to 1, gates Ber(mu) per example, frozen.
struct MemoNet {
  std::size_t n = 0;
  Architecture arch;  // d_in = 1
  double mu = 0.5;
  std::vector<GatePattern> gates;
  Weights weights;
};

/// Value weights bernoulli(sqrt(1 / (mu w))).
MemoNet make_memo_net(std::size_t n, std::size_t width, std::size_t depth, double mu, std::uint64_t seed);
Matrix memo_kernel(const MemoNet& net);
Vector memo_outputs(const MemoNet& net);

/// Full-batch GD on 0.5 sum (y_hat - y)^2; returns ||e_t||^2 / ||e_0||^2 for
/// t = 0..steps.
Vector train_memo(MemoNet& net, std::span<const double> y, double alpha, std::size_t steps);

struct MemoStudyConfig {
  std::size_t n = 50;
  std::vector<std::size_t> widths = {25};
  std::vector<std::size_t> depths = {2, 8, 16};
  double mu = 0.5;
  std::size_t kernel_seeds = 200;
  std::size_t train_seeds = 10;
  std::size_t steps = 500;
  double alpha_scale = 0.1;  // alpha = alpha_scale / rho_max(K_0)
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
};

struct MemoCell {
  std::size_t width = 0;
  std::size_t depth = 0;
  double diag_mean = 0.0;
  double diag_stderr = 0.0;
  double off_mean = 0.0;
  double off_stderr = 0.0;
  SpectrumReport empirical;  // spectrum of the seed-averaged K_0 / d
  SpectrumReport expected;   // spectrum of E[K_0] / d
  Vector error_curve;        // seed-averaged ||e_t||^2 / ||e_0||^2
};

std::vector<MemoCell> run_memo_study(const MemoStudyConfig& cfg);

}  // namespace npl
