#include <cmath>

#include "doctest.h"
#include "npl/errors.hpp"
#include "npl/trainer.hpp"
#include "oracles.hpp"

using namespace npl;

namespace {

LabeledDataset blobs(std::uint64_t seed, std::size_t per_class = 50, std::size_t test = 0) {
  SyntheticSpec s;
  s.n_per_class = per_class;
  s.n_test_per_class = test;
  s.seed = seed;
  return gen_synthetic(s);
}

LabeledDataset random_regression(Rng& rng, std::size_t n, std::size_t d) {
  LabeledDataset data;
  data.x = normalize_rows(oracle::random_inputs(rng, n, d));
  data.y = oracle::random_vector(rng, n);
  return data;
}

double total_loss(const ReluNet& net, const LabeledDataset& data) {
  double l = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const double e = forward(net.arch, net.weights, data.x[s]).y_hat() - data.y[s];
    l += 0.5 * e * e;
  }
  return l;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  c.optimizer = Optimizer::sgd(-1.0);
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.optimizer = Optimizer::adam(1e-3);
  c.optimizer.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.optimizer = Optimizer::sgd(0.1);
  c.probe_x = {{1.0}};
  CHECK_THROWS_AS(c.validate(), DimensionError);
  CHECK(parse_loss(to_string(Loss::cross_entropy)) == Loss::cross_entropy);
}

TEST_CASE("zero step leaves the model untouched") {
  ReluNet net{{2, 8, 3}, init_weights({2, 8, 3}, WeightInit::he(), 1)};
  const auto before = net.weights;
  TrainConfig c;
  c.optimizer = Optimizer::sgd(0.0);
  c.epochs = 5;
  const auto traj = train(net, blobs(2), c);
  CHECK(net.weights == before);
  REQUIRE(traj.steps.size() == 5);
  for (const auto& s : traj.steps) CHECK(s.loss == traj.steps[0].loss);
  CHECK(traj.switch_instants == std::vector<std::size_t>{0});
}

TEST_CASE("single example: error shrinks every step") {
  ReluNet net{{3, 6, 3}, init_weights({3, 6, 3}, WeightInit::he(), 3)};
  LabeledDataset d;
  d.x = {{0.6, -0.8, 0.0}};
  d.y = {2.0};
  TrainConfig c;
  c.optimizer = Optimizer::sgd(0.01);
  c.epochs = 100;
  const auto traj = train(net, d, c);
  for (std::size_t t = 1; t < traj.steps.size(); ++t) CHECK(traj.steps[t].error_norm < traj.steps[t - 1].error_norm);
  CHECK(traj.steps.back().error_norm < 0.1 * traj.steps.front().error_norm);
}

TEST_CASE("full batch records errors in data order") {
  ReluNet net{{2, 5, 3}, init_weights({2, 5, 3}, WeightInit::he(), 4)};
  const auto data = blobs(5, 10);
  const auto start = net;
  TrainConfig c;
  c.optimizer = Optimizer::sgd(1e-3);
  c.record_errors = true;
  const auto traj = train(net, data, c);
  REQUIRE(traj.errors.size() == 1);
  for (std::size_t s = 0; s < data.size(); ++s)
    CHECK(traj.errors[0][s] == forward(start.arch, start.weights, data.x[s]).y_hat() - data.y[s]);
  CHECK(traj.steps[0].loss == doctest::Approx(total_loss(start, data)).epsilon(1e-12));
}

TEST_CASE("divergence is reported") {
  ReluNet net{{2, 16, 4}, init_weights({2, 16, 4}, WeightInit::he(), 6)};
  TrainConfig c;
  c.optimizer = Optimizer::sgd(10.0);
  c.epochs = 200;
  CHECK_THROWS_AS(train(net, blobs(7), c), DivergenceError);
}

TEST_CASE("detect_switch") {
  const std::vector<GatePattern> a = {{{1, 0}, {0, 1}}, {{1, 1}, {0, 0}}};
  CHECK(detect_switch(a, a).empty());
  auto b = a;
  b[1][0][1] = 0;
  b[0][1][0] = 1;
  const auto f = detect_switch(a, b);
  REQUIRE(f.size() == 2);
  CHECK(f[0] == GateFlip{0, 1, 0});
  CHECK(f[1] == GateFlip{1, 0, 1});
  const std::vector<GatePattern> shorter = {a[0]};
  CHECK_THROWS_AS(detect_switch(a, shorter), DimensionError);
}

TEST_CASE("fixed random features fit separable blobs") {
  const auto data = blobs(8, 50, 50);
  auto m = build_dgn({2, 32, 3}, Regime::FRNPF_II, std::nullopt, 9, 10);
  const auto feature = m.feature;
  TrainConfig c;
  c.optimizer = Optimizer::adam(3e-4);
  c.batch_size = 10;
  c.epochs = 200;
  c.eval_every = 50;
  c.seed = 11;
  const auto traj = train(m, data, c);
  CHECK(traj.epochs.size() == 4);
  CHECK(traj.epochs.back().train_accuracy >= 0.95);
  CHECK(accuracy(m, data.test_x, data.test_y) >= 0.95);
  CHECK(m.feature == feature);
  CHECK(traj.switch_instants == std::vector<std::size_t>{0});
  CHECK(traj.switches.empty());
}

TEST_CASE("property: frozen features stay bit-exact") {
  const auto data = blobs(12, 20);
  const Architecture a{2, 8, 3};
  const auto donor = init_weights(a, WeightInit::he(), 13);
  for (auto r : {Regime::FRNPF_II, Regime::FRNPF_DI, Regime::FLNPF}) {
    auto m = build_dgn(a, r, std::nullopt, 14, 15, &donor);
    const auto f0 = m.feature;
    const auto v0 = m.value;
    TrainConfig c;
    c.optimizer = Optimizer::adam(1e-2);
    c.batch_size = 8;
    c.epochs = 5;
    train(m, data, c);
    CHECK(m.feature == f0);
    CHECK_FALSE(m.value == v0);
  }
  auto dl = build_dgn(a, Regime::DLNPF, 4.0, 14, 15);
  const auto f0 = dl.feature;
  TrainConfig c;
  c.optimizer = Optimizer::sgd(1e-5);
  c.epochs = 3;
  train(dl, data, c);
  CHECK_FALSE(dl.feature == f0);
}

TEST_CASE("property: training is deterministic") {
  const auto data = blobs(16, 20);
  for (std::size_t batch : {0, 7}) {
    ReluNet a{{2, 8, 3}, init_weights({2, 8, 3}, WeightInit::he(), 17)};
    ReluNet b = a;
    TrainConfig c;
    c.optimizer = Optimizer::adam(1e-2);
    c.batch_size = batch;
    c.epochs = 10;
    c.seed = 18;
    const auto ta = train(a, data, c);
    const auto tb = train(b, data, c);
    CHECK(a.weights == b.weights);
    REQUIRE(ta.steps.size() == tb.steps.size());
    for (std::size_t t = 0; t < ta.steps.size(); ++t) CHECK(ta.steps[t].loss == tb.steps[t].loss);
    CHECK(ta.switch_instants == tb.switch_instants);
  }
}

TEST_CASE("property: path overlap only changes at switch instants") {
  Rng rng(19);
  const auto data = random_regression(rng, 8, 3);
  ReluNet net{{3, 6, 3}, init_weights({3, 6, 3}, WeightInit::he(), 20)};
  TrainConfig c;
  c.optimizer = Optimizer::sgd(0.05);
  c.epochs = 60;
  c.snapshot_every = 1;
  const auto traj = train(net, data, c);
  REQUIRE(traj.snapshots.size() == 60);
  CHECK(traj.switch_instants.front() == 0);
  CHECK(traj.switch_instants.size() > 1);
  std::size_t changes = 0;
  for (std::size_t t = 1; t < traj.snapshots.size(); ++t) {
    const bool switched = std::find(traj.switch_instants.begin(), traj.switch_instants.end(), t) !=
                          traj.switch_instants.end();
    if (!switched) CHECK(traj.snapshots[t].lambda == traj.snapshots[t - 1].lambda);
    if (!(traj.snapshots[t].lambda == traj.snapshots[t - 1].lambda)) ++changes;
  }
  CHECK(changes > 0);
  for (const auto& e : traj.switches) CHECK(e.flips.size() == traj.steps[e.step - 1].switch_count);
}

TEST_CASE("property: loss is non-increasing for small steps with fixed gates") {
  Rng rng(21);
  for (int t = 0; t < 5; ++t) {
    const auto data = random_regression(rng, 10, 3);
    auto m = build_dgn({3, 10, 2}, Regime::FRNPF_II, std::nullopt, 22 + t, 32 + t);
    const double rho = eig_sym(dgn_kernels(m, data.x).value.values).max();
    TrainConfig c;
    c.optimizer = Optimizer::sgd(1.0 / rho);
    c.epochs = 100;
    const auto traj = train(m, data, c);
    for (std::size_t s = 1; s < traj.steps.size(); ++s)
      CHECK(traj.steps[s].loss <= traj.steps[s - 1].loss * (1 + 1e-12));
  }
}

TEST_CASE("cross-entropy on three classes") {
  LabeledDataset d;
  Rng rng(23);
  std::normal_distribution<double> g(0.0, 0.3);
  const double cx[3] = {0, 3, 0}, cy[3] = {0, 0, 3};
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 20; ++i) {
      d.x.push_back({cx[k] + g(rng), cy[k] + g(rng), 1.0});
      d.y.push_back(k);
    }
  const Architecture a{3, 16, 3, 3};
  ReluNet net{a, init_weights(a, WeightInit::he(), 24)};
  TrainConfig c;
  c.optimizer = Optimizer::adam(1e-2);
  c.loss = Loss::cross_entropy;
  c.batch_size = 10;
  c.epochs = 100;
  const auto traj = train(net, d, c);
  CHECK(traj.epochs.back().train_loss < traj.epochs.front().train_loss);
  CHECK(accuracy(net, d.x, d.y) >= 0.95);
  c.loss = Loss::squared;
  CHECK_THROWS_AS(train(net, d, c), DimensionError);
}

TEST_CASE("first-order error dynamics") {
  Rng rng(25);
  const auto data = random_regression(rng, 6, 3);
  ReluNet net{{3, 4, 3}, init_weights({3, 4, 3}, WeightInit::gaussian(0.7), 26)};
  const auto rep = error_dynamics_check(net, data, 1e-4);
  CHECK(rep.ratio <= 5e-3);
  const auto sl = error_dynamics_slope(net, data, 1e-3);
  CHECK(sl.slope == doctest::Approx(0.5).epsilon(0.05));
  CHECK_THROWS_AS(error_dynamics_check(net, data, 0.0), ParameterError);
}

TEST_CASE("npf metrics are recorded on the probe cadence") {
  const auto data = blobs(27, 10);
  auto m = build_dgn({2, 8, 3}, Regime::DLNPF, 4.0, 28, 29);
  TrainConfig c;
  c.optimizer = Optimizer::sgd(1e-3);
  c.epochs = 6;
  c.nu_every = 2;
  const auto traj = train(m, data, c);
  for (const auto& s : traj.steps) {
    CHECK(std::isnan(s.metrics.nu) == (s.step % 2 != 0));
    if (s.step % 2 == 0) {
      CHECK(s.metrics.nu > 0.0);
      CHECK(s.metrics.kv_trace > 0.0);
      CHECK(s.metrics.kf_trace > 0.0);
    }
  }
  ReluNet net{{2, 8, 3}, init_weights({2, 8, 3}, WeightInit::he(), 30)};
  const auto r = track_npf_metrics(net, data.x, data.y);
  CHECK(r.nu > 0.0);
  CHECK(std::isnan(r.kv_trace));
}
