#include <cmath>
#include <set>

#include "doctest.h"
#include "npl/errors.hpp"
#include "npl/paths.hpp"
#include "oracles.hpp"

using namespace npl;

TEST_CASE("path counts") {
  CHECK(enumerate_paths({2, 3, 3}).count() == 18);
  CHECK(enumerate_paths({1, 1, 2}).count() == 1);
  CHECK(enumerate_paths({3, 4, 4}).count() == 192);
  CHECK_THROWS_AS(enumerate_paths({2, 10, 8}), PathOverflowError);
  CHECK_THROWS_AS(enumerate_paths({2, 3, 3}, 17), PathOverflowError);
}

TEST_CASE("enumeration is a lexicographic bijection with the input node slowest") {
  const Architecture a{2, 3, 4};
  const auto paths = enumerate_paths(a);
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::size_t> prev;
  for (std::size_t p = 0; p < paths.count(); ++p) {
    std::vector<std::size_t> tuple{paths.input_node(p)};
    for (std::size_t l = 1; l < a.depth; ++l) tuple.push_back(paths.unit(p, l));
    if (p > 0) CHECK(prev < tuple);
    seen.insert(tuple);
    prev = tuple;
  }
  CHECK(seen.size() == paths.count());
  CHECK(paths.input_node(0) == 0);
  CHECK(paths.input_node(paths.count() - 1) == a.d_in - 1);
}

TEST_CASE("activity of open and closed paths") {
  const Architecture a{2, 3, 3};
  const auto paths = enumerate_paths(a);
  const GatePattern on{{1, 1, 1}, {1, 1, 1}};
  for (std::size_t p = 0; p < paths.count(); ++p) CHECK(activity(on, paths, p) == 1.0);
  GatePattern one_off = on;
  one_off[1][2] = 0;
  for (std::size_t p = 0; p < paths.count(); ++p)
    CHECK(activity(one_off, paths, p) == (paths.unit(p, 2) == 2 ? 0.0 : 1.0));

  const auto g = oracle::toy_gates();
  // 1-based p3 is 0-based 2 and p1 is 0.
  CHECK(activity(g[0], paths, 2) == 1.0);
  CHECK(activity(g[0], paths, 0) == 0.0);
}

TEST_CASE("toy-network neural path features") {
  const Architecture a{2, 3, 3};
  const auto paths = enumerate_paths(a);
  const auto g = oracle::toy_gates();
  const Vector x{3.0, 5.0};
  const double A = x[0], B = x[1];
  CHECK(npf(x, g[0], paths) == Vector{0, 0, A, 0, 0, 0, 0, 0, A, 0, 0, B, 0, 0, 0, 0, 0, B});
  CHECK(npf(x, g[1], paths) == Vector{0, A, A, 0, 0, 0, 0, 0, 0, 0, B, B, 0, 0, 0, 0, 0, 0});
  CHECK(npf(x, g[2], paths) == Vector{0, 0, 0, 0, A, A, 0, 0, 0, 0, 0, 0, 0, B, B, 0, 0, 0});
  CHECK(npf(Vector{0, 0}, g[0], paths) == Vector(18, 0.0));
}

TEST_CASE("npf coordinates match a per-coordinate recomputation") {
  Rng rng(2);
  const Architecture a{3, 3, 4};
  const auto paths = enumerate_paths(a);
  std::bernoulli_distribution coin(0.6);
  for (int t = 0; t < 10; ++t) {
    GatePattern g(a.hidden_layers(), Vector(a.width));
    for (auto& l : g)
      for (double& v : l) v = coin(rng);
    const auto x = oracle::random_vector(rng, a.d_in);
    const auto phi = npf(x, g, paths);
    for (std::size_t p = 0; p < paths.count(); ++p) {
      // Decode p by hand: p = i0 w^(d-1) + i1 w^(d-2) + ... + i_{d-1}.
      std::size_t rest = p;
      std::vector<std::size_t> units(a.depth - 1);
      for (std::size_t l = a.depth - 1; l-- > 0;) {
        units[l] = rest % a.width;
        rest /= a.width;
      }
      double act = 1.0;
      for (std::size_t l = 0; l + 1 < a.depth; ++l) act *= g[l][units[l]];
      CHECK(phi[p] == x[rest] * act);
    }
  }
}

TEST_CASE("npv products") {
  Weights w = Weights::zeros({1, 1, 2});
  w.layers[0](0, 0) = 2;
  w.layers[1](0, 0) = 3;
  CHECK(npv(w, enumerate_paths({1, 1, 2})) == Vector{6});

  const Architecture a{2, 3, 4};
  const auto paths = enumerate_paths(a);
  Weights c = Weights::zeros(a);
  for (auto& l : c.layers)
    for (double& v : l.values()) v = 0.5;
  for (double v : npv(c, paths)) CHECK(v == std::pow(0.5, 4));
  const auto b = init_weights(a, WeightInit::bernoulli(0.7), 5);
  for (double v : npv(b, paths)) CHECK(std::abs(v) == doctest::Approx(std::pow(0.7, 4)).epsilon(1e-14));
}

TEST_CASE("output via paths") {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_arch(rng, 3, 4, 4);
    const auto w = init_weights(a, WeightInit::gaussian(1.0), 500 + t);
    const auto paths = enumerate_paths(a);
    const auto x = oracle::random_vector(rng, a.d_in);
    const auto r = forward(a, w, x);
    const double y = output_via_paths(x, w, r.gates, paths);
    CHECK(std::abs(y - r.y_hat()) <= 1e-10 * std::max(1.0, std::abs(r.y_hat())));
    GatePattern off = r.gates;
    for (auto& l : off) std::fill(l.begin(), l.end(), 0.0);
    CHECK(output_via_paths(x, w, off, paths) == 0.0);
  }
}

TEST_CASE("soft activities reproduce a depth-2 soft pass") {
  // y = b * q * g(q) with q = a x: a single path with activity g(q).
  const Architecture arch{1, 1, 2};
  Weights w = Weights::zeros(arch);
  w.layers[0](0, 0) = 0.8;
  w.layers[1](0, 0) = -1.7;
  const Vector x{1.3};
  const auto r = forward(arch, w, x, GateMode::soft(4.0));
  const double q = 0.8 * 1.3;
  CHECK(r.y_hat() == doctest::Approx(-1.7 * q * soft_gate(q, 4.0)).epsilon(1e-15));
  CHECK(output_via_paths(x, w, r.gates, enumerate_paths(arch)) == doctest::Approx(r.y_hat()).epsilon(1e-15));
}

TEST_CASE("npv gradient") {
  const Architecture s{1, 1, 2};
  Weights w = Weights::zeros(s);
  w.layers[0](0, 0) = 2;
  w.layers[1](0, 0) = 5;
  CHECK(npv_gradient(w, enumerate_paths(s), 0) == Vector{5, 2});

  Rng rng(4);
  const Architecture a{2, 3, 4};
  const auto paths = enumerate_paths(a);
  const auto g = init_weights(a, WeightInit::gaussian(1.0), 6);
  for (std::size_t p = 0; p < paths.count(); p += 5) {
    const auto grad = npv_gradient(g, paths, p);
    std::size_t nz = 0;
    for (double v : grad) nz += v != 0.0;
    CHECK(nz == a.depth);
    const auto fd = oracle::central_difference(
        [&](const Vector& th) {
          Weights v = g;
          v.assign(th);
          return npv(v, paths)[p];
        },
        g.flatten(), 1e-6);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (grad[i] == 0.0) CHECK(fd[i] == 0.0);
      CHECK(std::abs(grad[i] - fd[i]) <= 1e-7 * std::max(1.0, std::abs(fd[i])));
    }
  }
}

TEST_CASE("property: npf sparsity and scale covariance") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const auto a = oracle::random_arch(rng, 3, 4, 4);
    const auto w = init_weights(a, WeightInit::gaussian(1.0), 900 + t);
    const auto paths = enumerate_paths(a);
    const auto x = oracle::random_vector(rng, a.d_in);
    const auto r = forward(a, w, x);
    const auto phi = npf(x, r.gates, paths);
    std::size_t active = 0, nz = 0;
    for (std::size_t p = 0; p < paths.count(); ++p) {
      active += activity(r.gates, paths, p) == 1.0;
      nz += phi[p] != 0.0;
    }
    CHECK(nz == active);  // all coordinates of x are nonzero
    Vector x2 = x;
    for (double& v : x2) v *= 3.0;
    const auto r2 = forward(a, w, x2);
    CHECK(r2.gates == r.gates);
    const auto phi2 = npf(x2, r2.gates, paths);
    for (std::size_t p = 0; p < paths.count(); ++p) CHECK(phi2[p] == doctest::Approx(3.0 * phi[p]));
  }
}

TEST_CASE("npf matrix columns") {
  Rng rng(1);
  const Architecture a{2, 3, 3};
  const auto paths = enumerate_paths(a);
  const auto g = oracle::toy_gates();
  const auto xs = oracle::random_inputs(rng, 3, 2);
  const auto phi = npf_matrix(xs, g, paths);
  REQUIRE(phi.rows() == 18);
  REQUIRE(phi.cols() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto col = npf(xs[s], g[s], paths);
    for (std::size_t p = 0; p < 18; ++p) CHECK(phi(p, s) == col[p]);
  }
}
