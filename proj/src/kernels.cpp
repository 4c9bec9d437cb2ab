#include "npl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "npl/errors.hpp"

namespace npl {

namespace {

constexpr std::string_view kKindNames[] = {"Sigma", "Lambda", "NPK", "NTK", "Kv", "Kf", "LimitNTK"};

void check_gate_set(std::span<const GatePattern> gates) {
  if (gates.empty()) throw DimensionError("gate set is empty");
  for (const auto& g : gates) {
    if (g.size() != gates[0].size()) throw DimensionError("gate patterns differ in depth");
    for (std::size_t l = 0; l < g.size(); ++l)
      if (g[l].size() != gates[0][l].size()) throw DimensionError("gate patterns differ in width");
  }
}

// Cholesky solve; nullopt when a pivot is not safely positive.
std::optional<Vector> cholesky_solve(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 1e-12 * max_diag)) return std::nullopt;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vector z(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) z[i] -= l(i, k) * z[k];
    z[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) z[i] -= l(k, i) * z[k];
    z[i] /= l(i, i);
  }
  return z;
}

}  // namespace

std::string_view to_string(GramKind kind) { return kKindNames[static_cast<int>(kind)]; }

GramKind parse_gram_kind(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kKindNames); ++i)
    if (kKindNames[i] == name) return static_cast<GramKind>(i);
  throw FormatError("unknown gram kind '" + std::string(name) + "'");
}

GramMatrix feature_gram(std::span<const Vector> features, GramKind kind) {
  if (features.empty()) throw DimensionError("gram: need at least one example");
  const std::size_t n = features.size();
  for (const auto& f : features)
    if (f.size() != features[0].size()) throw DimensionError("gram: ragged feature vectors");
  GramMatrix g{kind, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(features[i], features[j]);
      g.values(i, j) = v;
      g.values(j, i) = v;
    }
  return g;
}

GramMatrix input_gram(std::span<const Vector> xs) { return feature_gram(xs, GramKind::Sigma); }

GramMatrix lambda_via_paths(std::span<const GatePattern> gates, const PathIndex& paths) {
  check_gate_set(gates);
  const std::size_t n = gates.size();
  // Active-path indicator per example, then pairwise intersection counts.
  std::vector<std::vector<char>> act(n, std::vector<char>(paths.count()));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < paths.count(); ++p) act[s][p] = activity(gates[s], paths, p) == 1.0;
  GramMatrix g{GramKind::Lambda, Matrix(n, n)};
  const double d_in = double(paths.arch().d_in);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      std::size_t count = 0;
      for (std::size_t p = 0; p < paths.count(); ++p) count += act[i][p] && act[j][p];
      g.values(i, j) = g.values(j, i) = double(count) / d_in;
    }
  return g;
}

GramMatrix lambda_via_layers(std::span<const GatePattern> gates) {
  check_gate_set(gates);
  const std::size_t n = gates.size();
  GramMatrix g{GramKind::Lambda, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double prod = 1.0;
      for (std::size_t l = 0; l < gates[i].size(); ++l) prod *= dot(gates[i][l], gates[j][l]);
      g.values(i, j) = g.values(j, i) = prod;
    }
  return g;
}

GramMatrix npk(std::span<const Vector> xs, std::span<const GatePattern> gates) {
  if (xs.size() != gates.size()) throw DimensionError("npk: inputs and gates differ in count");
  const auto sigma = input_gram(xs);
  const auto lambda = lambda_via_layers(gates);
  return {GramKind::NPK, hadamard(sigma.values, lambda.values)};
}

GramMatrix npk_from_features(const Matrix& phi) {
  const std::size_t n = phi.cols();
  GramMatrix g{GramKind::NPK, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < phi.rows(); ++p) s += phi(p, i) * phi(p, j);
      g.values(i, j) = g.values(j, i) = s;
    }
  return g;
}

GramMatrix ntk(const Architecture& arch, const Weights& weights, std::span<const Vector> xs,
               GateMode mode) {
  std::vector<Vector> psi;
  psi.reserve(xs.size());
  for (const auto& x : xs) psi.push_back(ntf(arch, weights, x, mode));
  return feature_gram(psi, GramKind::NTK);
}

GramMatrix tangent_gram_layerwise(const Weights& weights, std::span<const ActivationRecord> records,
                                  GramKind kind) {
  if (records.empty()) throw DimensionError("gram: need at least one example");
  const std::size_t n = records.size();
  const std::size_t depth = weights.layers.size();
  const double seed = 1.0;
  std::vector<std::vector<Vector>> deltas;
  deltas.reserve(n);
  for (const auto& r : records) deltas.push_back(backprop_deltas(weights, r, std::span<const double>(&seed, 1)));
  auto layer_input = [&](std::size_t s, std::size_t k) -> std::span<const double> {
    return k == 0 ? std::span<const double>(records[s].input) : std::span<const double>(records[s].hidden[k - 1]);
  };
  GramMatrix g{kind, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < depth; ++k)
        s += dot(deltas[i][k], deltas[j][k]) * dot(layer_input(i, k), layer_input(j, k));
      g.values(i, j) = g.values(j, i) = s;
    }
  return g;
}

Matrix vtk(const Weights& weights, const PathIndex& paths) {
  const std::size_t count = paths.count();
  std::vector<PathGradient> grads;
  grads.reserve(count);
  for (std::size_t p = 0; p < count; ++p) grads.push_back(npv_gradient_sparse(weights, paths, p));
  const std::size_t depth = paths.arch().depth;
  Matrix v(count, count);
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = a; b < count; ++b) {
      double s = 0.0;
      // Offsets are ordered by layer, so shared weights sit at the same slot.
      for (std::size_t k = 0; k < depth; ++k)
        if (grads[a].offset[k] == grads[b].offset[k]) s += grads[a].value[k] * grads[b].value[k];
      v(a, b) = v(b, a) = s;
    }
  return v;
}

GramMatrix ntk_factored(const Matrix& phi, const Matrix& vtk_matrix) {
  if (vtk_matrix.rows() != phi.rows() || vtk_matrix.cols() != phi.rows())
    throw DimensionError("ntk_factored: VTK and NPF matrix shapes disagree");
  const Matrix vphi = matmul(vtk_matrix, phi);
  const std::size_t n = phi.cols();
  GramMatrix g{GramKind::NTK, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < phi.rows(); ++p) s += phi(p, i) * vphi(p, j);
      g.values(i, j) = g.values(j, i) = s;
    }
  return g;
}

EigenDecomposition eig_sym(const Matrix& input) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw ParameterError("eig_sym: matrix is not square");
  const double scale = std::max(1.0, max_abs(input));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-10 * scale)
        throw ParameterError("eig_sym: matrix is not symmetric");

  Matrix a = input;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);
  const double tol = 1e-12 * frobenius_norm(a);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) <= tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

EigenBoundReport eigen_bound_check(const Matrix& k, const Matrix& h, const Matrix& v) {
  const auto ek = eig_sym(k);
  const auto eh = eig_sym(h);
  const auto ev = eig_sym(v);
  EigenBoundReport r;
  r.lhs = ek.min();
  r.rhs = eh.min() * ev.max();
  const double scale = std::max(std::abs(ek.max()), 1e-300);
  r.holds = r.lhs <= r.rhs + 1e-8 * scale;
  return r;
}

double relu_moment(double l1, double l2, double c) {
  const double norm = std::sqrt(l1 * l2);
  const double rho = std::clamp(c / norm, -1.0, 1.0);
  const double theta = std::acos(rho);
  return norm / std::numbers::pi * (std::sin(theta) + (std::numbers::pi - theta) * std::cos(theta));
}

double step_moment(double l1, double l2, double c) {
  const double rho = std::clamp(c / std::sqrt(l1 * l2), -1.0, 1.0);
  return (std::numbers::pi - std::acos(rho)) / std::numbers::pi;
}

LimitNtkTerms limit_ntk_terms(const Matrix& sigma, std::size_t depth) {
  const std::size_t n = sigma.rows();
  if (sigma.cols() != n || n == 0) throw ParameterError("limit_ntk: Sigma must be square");
  if (depth < 1) throw ParameterError("limit_ntk: depth must be >= 1");
  for (std::size_t i = 0; i < n; ++i)
    if (!(sigma(i, i) > 0.0)) throw ParameterError("limit_ntk: Sigma has a non-positive diagonal entry");
  const auto e = eig_sym(sigma);
  if (e.min() < -1e-8 * std::max(e.max(), 0.0)) throw ParameterError("limit_ntk: Sigma is not PSD");

  Matrix s = sigma;
  Matrix k = sigma;
  for (std::size_t l = 1; l < depth; ++l) {
    Matrix next(n, n);
    Matrix dot_sigma(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        next(i, j) = next(j, i) = relu_moment(s(i, i), s(j, j), s(i, j));
        dot_sigma(i, j) = dot_sigma(j, i) = step_moment(s(i, i), s(j, j), s(i, j));
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) k(i, j) = k(i, j) * dot_sigma(i, j) + next(i, j);
    s = std::move(next);
  }
  return {std::move(k), std::move(s)};
}

GramMatrix limit_ntk_relu(const GramMatrix& sigma, std::size_t depth) {
  auto terms = limit_ntk_terms(sigma.values, depth);
  const std::size_t n = sigma.n();
  GramMatrix out{GramKind::LimitNTK, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values(i, j) = 0.5 * (terms.k_tilde(i, j) + terms.sigma(i, j));
  return out;
}

double nu_metric(const Matrix& h, std::span<const double> y) {
  const std::size_t n = h.rows();
  if (h.cols() != n || y.size() != n) throw DimensionError("nu_metric: shape mismatch");
  const double tr = trace(h);
  if (!(tr > 0.0)) throw ParameterError("nu_metric: trace must be positive");
  Matrix hn(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) hn(i, j) = h(i, j) / tr;
  auto z = cholesky_solve(hn, y);
  if (!z) {
    const double ridge = 1e-10 * trace(hn) / double(n);
    for (std::size_t i = 0; i < n; ++i) hn(i, i) += ridge;
    z = cholesky_solve(hn, y);
    if (!z) throw ParameterError("nu_metric: kernel is not positive semi-definite");
  }
  return dot(y, *z);
}

}  // namespace npl
