#include "npl/paths.hpp"

#include <limits>
#include <string>

#include "npl/errors.hpp"

namespace npl {

PathIndex enumerate_paths(const Architecture& arch, std::size_t cap) {
  arch.validate();
  if (arch.d_out != 1) throw DimensionError("paths: scalar-output networks only");
  PathIndex idx;
  idx.arch_ = arch;
  const std::size_t hidden = arch.hidden_layers();
  idx.stride_.assign(hidden + 1, 1);
  std::size_t count = 1;
  for (std::size_t l = hidden; l >= 1; --l) {
    idx.stride_[l] = count;
    if (count > cap / arch.width) throw PathOverflowError("path count exceeds cap " + std::to_string(cap));
    count *= arch.width;
  }
  idx.stride_[0] = count;
  if (count > cap / arch.d_in) throw PathOverflowError("path count exceeds cap " + std::to_string(cap));
  idx.count_ = count * arch.d_in;
  return idx;
}

double activity(const GatePattern& gates, const PathIndex& paths, std::size_t p) {
  const std::size_t hidden = paths.arch().hidden_layers();
  if (gates.size() != hidden) throw DimensionError("activity: gate pattern has wrong depth");
  double a = 1.0;
  for (std::size_t l = 1; l <= hidden; ++l) a *= gates[l - 1].at(paths.unit(p, l));
  return a;
}

Vector npf(std::span<const double> x, const GatePattern& gates, const PathIndex& paths) {
  if (x.size() != paths.arch().d_in) throw DimensionError("npf: input length mismatch");
  Vector phi(paths.count());
  for (std::size_t p = 0; p < phi.size(); ++p)
    phi[p] = x[paths.input_node(p)] * activity(gates, paths, p);
  return phi;
}

Vector npv(const Weights& weights, const PathIndex& paths) {
  const auto& arch = paths.arch();
  weights.check(arch);
  const std::size_t hidden = arch.hidden_layers();
  Vector v(paths.count());
  for (std::size_t p = 0; p < v.size(); ++p) {
    std::size_t prev = paths.input_node(p);
    double prod = 1.0;
    for (std::size_t l = 1; l <= hidden; ++l) {
      const std::size_t cur = paths.unit(p, l);
      prod *= weights.layers[l - 1](cur, prev);
      prev = cur;
    }
    v[p] = prod * weights.layers[hidden](0, prev);
  }
  return v;
}

double output_via_paths(std::span<const double> x, const Weights& weights,
                        const GatePattern& gates, const PathIndex& paths) {
  return dot(npf(x, gates, paths), npv(weights, paths));
}

PathGradient npv_gradient_sparse(const Weights& weights, const PathIndex& paths, std::size_t p) {
  const auto& arch = paths.arch();
  weights.check(arch);
  if (p >= paths.count()) throw DimensionError("npv_gradient: path id out of range");
  const std::size_t depth = arch.depth;
  PathGradient g;
  g.offset.resize(depth);
  g.value.resize(depth);

  std::vector<double> theta(depth);
  std::size_t base = 0;
  std::size_t prev = paths.input_node(p);
  for (std::size_t k = 0; k < depth; ++k) {
    const std::size_t cur = k + 1 == depth ? 0 : paths.unit(p, k + 1);
    const auto& m = weights.layers[k];
    theta[k] = m(cur, prev);
    g.offset[k] = base + cur * m.cols() + prev;
    base += m.size();
    prev = cur;
  }
  // Product of all weights but one, via prefix and suffix products.
  std::vector<double> suffix(depth + 1, 1.0);
  for (std::size_t k = depth; k-- > 0;) suffix[k] = suffix[k + 1] * theta[k];
  double prefix = 1.0;
  for (std::size_t k = 0; k < depth; ++k) {
    g.value[k] = prefix * suffix[k + 1];
    prefix *= theta[k];
  }
  return g;
}

Vector npv_gradient(const Weights& weights, const PathIndex& paths, std::size_t p) {
  const auto sparse = npv_gradient_sparse(weights, paths, p);
  Vector dense(weights.size(), 0.0);
  for (std::size_t k = 0; k < sparse.offset.size(); ++k) dense[sparse.offset[k]] = sparse.value[k];
  return dense;
}

Matrix npf_matrix(std::span<const Vector> xs, std::span<const GatePattern> gates,
                  const PathIndex& paths) {
  if (xs.size() != gates.size()) throw DimensionError("npf_matrix: inputs and gates differ in count");
  Matrix phi(paths.count(), xs.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const Vector col = npf(xs[s], gates[s], paths);
    for (std::size_t p = 0; p < col.size(); ++p) phi(p, s) = col[p];
  }
  return phi;
}

}  // namespace npl
