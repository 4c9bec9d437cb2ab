#pragma once

// Gram-matrix constructions over a dataset: input gram, path overlap,
// neural path kernel, tangent kernels, the infinite-width ReLU recursion,
// and a Jacobi eigensolver for the spectral checks.

#include <cstddef>
#include <span>
#include <string_view>

#include "npl/matrix.hpp"
#include "npl/net.hpp"
#include "npl/paths.hpp"

namespace npl {

enum class GramKind { Sigma, Lambda, NPK, NTK, Kv, Kf, LimitNTK };

std::string_view to_string(GramKind kind);
/// Throws FormatError for unknown names.
GramKind parse_gram_kind(std::string_view name);

struct GramMatrix {
  GramKind kind = GramKind::Sigma;
  Matrix values;

  std::size_t n() const { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Sigma(s,s') = <x_s, x_s'>. Throws DimensionError on ragged input.
GramMatrix input_gram(std::span<const Vector> xs);

/// Gram matrix of arbitrary per-example feature vectors.
GramMatrix feature_gram(std::span<const Vector> features, GramKind kind);

/// Lambda(s,s') = |{p : A(x_s,p) = A(x_s',p) = 1}| / d_in, by enumerating paths.
GramMatrix lambda_via_paths(std::span<const GatePattern> gates, const PathIndex& paths);

/// Lambda(s,s') = prod_l sum_i G_s(i,l) G_s'(i,l). Needs no path enumeration.
GramMatrix lambda_via_layers(std::span<const GatePattern> gates);

/// H = Sigma (.) Lambda, Lambda taken layer-wise.
GramMatrix npk(std::span<const Vector> xs, std::span<const GatePattern> gates);

/// H = Phi^T Phi for a P x n NPF matrix.
GramMatrix npk_from_features(const Matrix& phi);

/// Gram matrix of neural tangent features.
GramMatrix ntk(const Architecture& arch, const Weights& weights, std::span<const Vector> xs,
               GateMode mode = GateMode::hard());

/// Tangent-kernel Gram matrix of scalar-output records, computed from the
/// per-layer factorisation <delta_s, delta_s'> <z_s, z_s'> without forming
/// the tangent features. Cost is O(n^2 w d) after the backward passes.
GramMatrix tangent_gram_layerwise(const Weights& weights, std::span<const ActivationRecord> records,
                                  GramKind kind = GramKind::NTK);

/// P x P value tangent kernel (grad_Theta v)^T (grad_Theta v). Depends on weights only.
Matrix vtk(const Weights& weights, const PathIndex& paths);

/// Phi^T V Phi.
GramMatrix ntk_factored(const Matrix& phi, const Matrix& vtk);

/// Ascending eigenvalues and matching orthonormal eigenvectors (columns).
struct EigenDecomposition {
  Vector values;
  Matrix vectors;

  double min() const { return values.front(); }
  double max() const { return values.back(); }
};

/// Cyclic Jacobi; stops when the off-diagonal norm drops below
/// 1e-12 * ||A||_F or after 100 sweeps. Throws ParameterError when A is not
/// symmetric to 1e-10 (relative to its largest entry).
EigenDecomposition eig_sym(const Matrix& a);

struct EigenBoundReport {
  double lhs = 0.0;  // rho_min(K)
  double rhs = 0.0;  // rho_min(H) * rho_max(V)
  bool holds = false;
};

/// rho_min(K) <= rho_min(H) rho_max(V), with slack 1e-8 * rho_max(K).
EigenBoundReport eigen_bound_check(const Matrix& ntk, const Matrix& npk, const Matrix& vtk);

/// 2 E[relu(u) relu(v)] for (u,v) ~ N(0, [[l1, c],[c, l2]]), in closed form.
double relu_moment(double l1, double l2, double c);
/// 2 E[1{u>0} 1{v>0}] for the same bivariate Gaussian.
double step_moment(double l1, double l2, double c);

struct LimitNtkTerms {
  Matrix k_tilde;  // tilde K^(d)
  Matrix sigma;    // Sigma^(d)
};

/// Runs the infinite-width ReLU recursion up to depth d.
LimitNtkTerms limit_ntk_terms(const Matrix& sigma, std::size_t depth);

/// K^(d) = (tilde K^(d) + Sigma^(d)) / 2. Throws ParameterError when Sigma is
/// not PSD or has a non-positive diagonal entry.
GramMatrix limit_ntk_relu(const GramMatrix& sigma, std::size_t depth);

/// y^T Hn^-1 y with Hn = H / trace(H). A ridge of 1e-10 * trace(Hn) / n is
/// added when Hn is numerically singular. Throws ParameterError when trace <= 0.
double nu_metric(const Matrix& npk, std::span<const double> y);

}  // namespace npl
