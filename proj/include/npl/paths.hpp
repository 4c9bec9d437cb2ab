#pragma once

// Path view of a bias-free network: a path picks one input node and one
// unit per hidden layer. Paths are numbered lexicographically with the input
// node slowest and the last hidden layer fastest.

#include <cstddef>
#include <span>
#include <vector>

#include "npl/matrix.hpp"
#include "npl/net.hpp"

namespace npl {

inline constexpr std::size_t kDefaultPathCap = 10'000'000;

class PathIndex {
 public:
  const Architecture& arch() const { return arch_; }
  std::size_t count() const { return count_; }

  /// I_0(p): the input node of path p.
  std::size_t input_node(std::size_t p) const { return p / stride_[0]; }
  /// I_l(p) for hidden layer l = 1..d-1 (1-based layer, 0-based unit).
  std::size_t unit(std::size_t p, std::size_t layer) const {
    return (p / stride_[layer]) % arch_.width;
  }

 private:
  friend PathIndex enumerate_paths(const Architecture&, std::size_t);
  Architecture arch_;
  std::size_t count_ = 0;
  std::vector<std::size_t> stride_;  // stride_[l] = w^(d-1-l)
};

/// Throws PathOverflowError when d_in * w^(d-1) exceeds `cap`.
PathIndex enumerate_paths(const Architecture& arch, std::size_t cap = kDefaultPathCap);

/// Product of the gates along path p (0/1 for hard gates).
double activity(const GatePattern& gates, const PathIndex& paths, std::size_t p);

/// phi(p) = x(I_0(p)) * activity(p).
Vector npf(std::span<const double> x, const GatePattern& gates, const PathIndex& paths);

/// v(p) = product of the d weights along p.
Vector npv(const Weights& weights, const PathIndex& paths);

/// <phi, v>.
double output_via_paths(std::span<const double> x, const Weights& weights,
                        const GatePattern& gates, const PathIndex& paths);

/// The d weights a path touches, as canonical flat offsets, together with
/// d v(p) / d theta for each of them.
struct PathGradient {
  std::vector<std::size_t> offset;
  std::vector<double> value;
};

PathGradient npv_gradient_sparse(const Weights& weights, const PathIndex& paths, std::size_t p);

/// Dense d v(p) / d Theta in canonical weight order.
Vector npv_gradient(const Weights& weights, const PathIndex& paths, std::size_t p);

/// P x n matrix whose column s is npf(xs[s], gates[s]).
Matrix npf_matrix(std::span<const Vector> xs, std::span<const GatePattern> gates,
                  const PathIndex& paths);

}  // namespace npl
