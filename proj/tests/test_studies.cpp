#include <cmath>

#include "doctest.h"
#include "npl/data.hpp"
#include "npl/errors.hpp"
#include "npl/studies.hpp"
#include "oracles.hpp"

using namespace npl;

TEST_CASE("expected memorisation kernel and its spectrum") {
  for (std::size_t d : {2, 4, 8})
    for (double mu : {0.3, 0.5, 0.9}) {
      const std::size_t n = 12;
      const auto k = expected_memo_kernel(n, d, mu);
      CHECK(k(3, 3) == 1.0);
      CHECK(k(2, 7) == doctest::Approx(std::pow(mu, double(d - 1))).epsilon(1e-15));
      const auto cf = memo_spectrum_closed_form(n, d, mu);
      const auto e = eig_sym(k.values);
      CHECK(cf.rho_max == doctest::Approx(e.max()).epsilon(1e-10));
      CHECK(cf.rho_min == doctest::Approx(e.min()).epsilon(1e-10));
      std::size_t mult = 0;
      for (double v : e.values) mult += std::abs(v - cf.rho_min) <= 1e-9;
      CHECK(mult == cf.min_multiplicity);
      CHECK(cf.min_multiplicity == n - 1);
    }
}

TEST_CASE("spectrum report") {
  Matrix k(3, 3);
  k(0, 0) = 3;
  k(1, 1) = 1;
  k(2, 2) = 2;
  const auto r = spectrum_report(k);
  CHECK(r.eigenvalues[0] == doctest::Approx(1));
  CHECK(r.eigenvalues[2] == doctest::Approx(3));
  CHECK(r.ecdf[0] == doctest::Approx(1));
  CHECK(r.ecdf[1] == doctest::Approx(3));
  CHECK(r.ecdf[2] == doctest::Approx(6));
  CHECK(r.rho_max == doctest::Approx(3));
  CHECK(r.rho_min == doctest::Approx(1));
  CHECK_FALSE(r.predicted.has_value());
  CHECK(spectrum_report(k, memo_spectrum_closed_form(3, 2, 0.5)).predicted.has_value());
}

TEST_CASE("memorisation network") {
  const auto net = make_memo_net(5, 4, 3, 0.5, 1);
  CHECK(net.arch.d_in == 1);
  REQUIRE(net.gates.size() == 5);
  const std::vector<Vector> ones(5, Vector{1.0});
  const auto paths = enumerate_paths(net.arch);
  const auto k = memo_kernel(net);
  const auto ref = ntk_factored(npf_matrix(ones, net.gates, paths), vtk(net.weights, paths)).values;
  CHECK(relative_frobenius_error(k, ref) <= 1e-12);
  const auto out = memo_outputs(net);
  for (std::size_t s = 0; s < 5; ++s)
    CHECK(out[s] == doctest::Approx(output_via_paths(ones[s], net.weights, net.gates[s], paths)));
  for (double v : net.weights.flatten()) CHECK(std::abs(v) == doctest::Approx(std::sqrt(1.0 / 2.0)));

  auto t = make_memo_net(8, 10, 3, 0.5, 2);
  Rng rng(3);
  const auto y = oracle::random_vector(rng, 8);
  const double alpha = 0.1 / eig_sym(memo_kernel(t)).max();
  const auto curve = train_memo(t, y, alpha, 50);
  REQUIRE(curve.size() == 51);
  CHECK(curve[0] == 1.0);
  for (std::size_t s = 1; s < curve.size(); ++s) CHECK(curve[s] <= curve[s - 1] * (1 + 1e-12));
  CHECK(curve.back() < 0.9);
}

TEST_CASE("path gradient moments") {
  const Architecture a{2, 6, 3};
  const auto m = path_gradient_moments(a, 0.5, 400, 4);
  CHECK(m.expected_same == doctest::Approx(3 * std::pow(0.5, 4)));
  CHECK(m.same_min == doctest::Approx(m.expected_same).epsilon(1e-12));
  CHECK(m.same_max == doctest::Approx(m.expected_same).epsilon(1e-12));
  CHECK(std::abs(m.cross_mean) <= 4 * m.cross_stderr + 1e-15);
  CHECK(m.trials == 400);
}

TEST_CASE("Monte Carlo kernel with fixed gates") {
  const Architecture a{3, 4, 3};
  const auto gm = build_dgn(a, Regime::FRNPF_II, std::nullopt, 5, 6);
  Rng rng(7);
  const auto xs = normalize_rows(oracle::random_inputs(rng, 4, 3));
  McConfig c;
  c.trials = 200;
  c.widths = {8, 32};
  c.master_seed = 8;
  const auto r = mc_expected_ntk(gm, xs, c);
  REQUIRE(r.rows.size() == 2);
  std::vector<GatePattern> g;
  for (const auto& x : xs) g.push_back(gate_pattern(a, gm.feature, x));
  // d sigma'^(2(d-1)) H / w_f^(d-1): padded overlap and variance cancel.
  Matrix expect = npk(xs, g).values;
  for (double& v : expect.values()) v *= 3.0 / 16.0;
  for (const auto& row : r.rows) {
    CHECK(row.pad * 4 == row.width);
    CHECK(max_abs_diff(row.target, expect) <= 1e-12);
    CHECK(row.frobenius_error <= 0.1);
  }
  CHECK(r.target_spread <= 1e-12);

  c.threads = 3;
  const auto r3 = mc_expected_ntk(gm, xs, c);
  CHECK(r3.rows[1].mean_kv == r.rows[1].mean_kv);
  c.widths = {6};
  CHECK_THROWS_AS(mc_expected_ntk(gm, xs, c), ParameterError);
}

TEST_CASE("kernel variance falls with width") {
  VarianceConfig c;
  c.feature_width = 8;
  c.widths = {32, 64, 128};
  c.trials = 300;
  const auto r = variance_vs_width(c);
  REQUIRE(r.rows.size() == 3);
  CHECK(norm2(r.x) == doctest::Approx(1.0));
  CHECK(norm2(r.x_prime) == doctest::Approx(1.0));
  for (const auto& row : r.rows) CHECK_FALSE(row.low_confidence);
  CHECK(r.rows[2].variance < r.rows[0].variance);
  CHECK(r.slope < -0.5);
  CHECK(r.slope > -1.5);
  c.trials = 10;
  CHECK(variance_vs_width(c).rows[0].low_confidence);
}

TEST_CASE("small memorisation study") {
  MemoStudyConfig c;
  c.n = 10;
  c.widths = {10};
  c.depths = {2, 4};
  c.kernel_seeds = 20;
  c.train_seeds = 2;
  c.steps = 30;
  c.threads = 2;
  const auto cells = run_memo_study(c);
  REQUIRE(cells.size() == 2);
  for (const auto& cell : cells) {
    CHECK(std::abs(cell.diag_mean - 1.0) <= 5 * cell.diag_stderr + 1e-12);
    CHECK(std::abs(cell.off_mean - std::pow(0.5, double(cell.depth - 1))) <= 5 * cell.off_stderr + 1e-12);
    CHECK(cell.error_curve.size() == 31);
    CHECK(cell.error_curve.back() < 1.0);
    REQUIRE(cell.expected.predicted.has_value());
    CHECK(cell.expected.rho_max == doctest::Approx(cell.expected.predicted->rho_max));
  }
}
