#include "npl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "npl/errors.hpp"
#include "npl/rng.hpp"

namespace npl {

namespace {

constexpr double kDivergenceLoss = 1e12;

// Uniform view over the two trainable model kinds.
struct ReluOps {
  ReluNet& net;

  std::size_t d_out() const { return net.arch.d_out; }
  std::size_t d_in() const { return net.arch.d_in; }
  ActivationRecord run(std::span<const double> x) const { return forward(net.arch, net.weights, x); }
  static const Vector& output(const ActivationRecord& r) { return r.output; }
  static const GatePattern& hard_gates(const ActivationRecord& r) { return r.gates; }
  std::vector<Weights*> params() { return {&net.weights}; }
  std::vector<Weights> grad(const ActivationRecord& r, std::span<const double> og) const {
    return {backprop(net.weights, r, og)};
  }
};

struct DgnOps {
  DgnModel& model;

  std::size_t d_out() const { return model.arch.d_out; }
  std::size_t d_in() const { return model.arch.d_in; }
  DgnForward run(std::span<const double> x) const { return dgn_forward(model, x); }
  static const Vector& output(const DgnForward& f) { return f.value.output; }
  static const GatePattern& hard_gates(const DgnForward& f) { return f.feature.gates; }
  std::vector<Weights*> params() {
    if (model.feature_trainable()) return {&model.value, &model.feature};
    return {&model.value};
  }
  std::vector<Weights> grad(const DgnForward& f, std::span<const double> og) const {
    auto g = dgn_backprop(model, f, og);
    if (model.feature_trainable()) return {std::move(g.value), std::move(g.feature)};
    return {std::move(g.value)};
  }
};

void add_scaled(Weights& acc, const Weights& g, double s = 1.0) {
  for (std::size_t k = 0; k < acc.layers.size(); ++k) {
    auto a = acc.layers[k].values();
    auto b = g.layers[k].values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
  }
}

// Per-example loss and gradient of the loss w.r.t. the outputs.
double loss_and_grad(Loss loss, const Vector& out, double target, Vector& og) {
  og.assign(out.size(), 0.0);
  if (loss == Loss::squared) {
    if (out.size() != 1) throw DimensionError("squared loss needs a scalar output");
    const double e = out[0] - target;
    og[0] = e;
    return 0.5 * e * e;
  }
  const std::size_t c = class_id(target);
  if (c >= out.size()) throw DimensionError("class id exceeds the number of output heads");
  const double mx = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double v : out) z += std::exp(v - mx);
  for (std::size_t k = 0; k < out.size(); ++k) og[k] = std::exp(out[k] - mx) / z;
  og[c] -= 1.0;
  return std::log(z) + mx - out[c];
}

bool correct(const Vector& out, double target) {
  if (out.size() == 1) return (out[0] > 0) == (target > 0);
  const auto arg = std::size_t(std::max_element(out.begin(), out.end()) - out.begin());
  return arg == class_id(target);
}

template <class Ops>
double accuracy_impl(const Ops& ops, std::span<const Vector> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("accuracy: input and label counts differ");
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) hits += correct(Ops::output(ops.run(xs[s])), ys[s]);
  return double(hits) / double(xs.size());
}

template <class Ops>
std::vector<GatePattern> all_gates(const Ops& ops, std::span<const Vector> xs) {
  std::vector<GatePattern> g;
  g.reserve(xs.size());
  for (const auto& x : xs) g.push_back(Ops::hard_gates(ops.run(x)));
  return g;
}

double frob(const Matrix& m) { return frobenius_norm(m); }

NpfMetrics nu_from_gates(std::span<const Vector> xs, std::span<const GatePattern> gates,
                         std::span<const double> y) {
  NpfMetrics m;
  m.nu = nu_metric(npk(xs, gates).values, y);
  return m;
}

KernelSnapshot snapshot(const ReluNet& net, std::span<const Vector> xs, std::size_t step) {
  KernelSnapshot s;
  s.step = step;
  std::vector<ActivationRecord> recs;
  std::vector<GatePattern> gates;
  for (const auto& x : xs) {
    recs.push_back(forward(net.arch, net.weights, x));
    gates.push_back(recs.back().gates);
  }
  s.ntk = tangent_gram_layerwise(net.weights, recs).values;
  s.lambda = lambda_via_layers(gates).values;
  s.npk = npk(xs, gates).values;
  return s;
}

KernelSnapshot snapshot(const DgnModel& model, std::span<const Vector> xs, std::size_t step) {
  KernelSnapshot s;
  s.step = step;
  std::vector<GatePattern> gates;
  for (const auto& x : xs) gates.push_back(dgn_forward(model, x).feature.gates);
  const auto k = dgn_kernels(model, xs);
  s.kv = k.value.values;
  s.kf = k.feature.values;
  s.ntk = s.kv;
  for (std::size_t i = 0; i < s.ntk.size(); ++i) s.ntk.values()[i] += s.kf.values()[i];
  s.lambda = lambda_via_layers(gates).values;
  s.npk = npk(xs, gates).values;
  return s;
}

template <class Model, class Ops>
Trajectory train_impl(Model& model, Ops ops, const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.d_in() != ops.d_in()) throw DimensionError("train: data dimension does not match the model");
  if (cfg.loss == Loss::squared && ops.d_out() != 1)
    throw DimensionError("train: squared loss needs a scalar-output model");

  const std::size_t n = data.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  const bool full_batch = batch == n;
  const bool scalar_squared = cfg.loss == Loss::squared;
  const bool track = cfg.track_switches && scalar_squared;
  const std::span<const Vector> probe_x = cfg.probe_x.empty() ? std::span<const Vector>(data.x) : cfg.probe_x;
  const std::span<const double> probe_y = cfg.probe_x.empty() ? std::span<const double>(data.y) : cfg.probe_y;

  auto params = ops.params();
  std::vector<Vector> adam_m, adam_v;
  if (cfg.optimizer.kind == Optimizer::Kind::adam)
    for (auto* p : params) {
      adam_m.emplace_back(p->size(), 0.0);
      adam_v.emplace_back(p->size(), 0.0);
    }

  Trajectory traj;
  traj.switch_instants.push_back(0);
  std::vector<GatePattern> gates;
  if (track) gates = all_gates(ops, data.x);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  Vector og;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!full_batch) {
      Rng rng(derive_seed(cfg.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::vector<Weights> acc;
      for (auto* p : params) {
        acc.push_back(*p);
        for (auto& l : acc.back().layers) std::fill(l.values().begin(), l.values().end(), 0.0);
      }
      double loss = 0.0;
      Vector e;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t s = order[b];
        const auto fwd = ops.run(data.x[s]);
        loss += loss_and_grad(cfg.loss, Ops::output(fwd), data.y[s], og);
        if (scalar_squared && full_batch) e.push_back(og[0]);
        const auto g = ops.grad(fwd, og);
        for (std::size_t k = 0; k < acc.size(); ++k) add_scaled(acc[k], g[k]);
      }
      if (!std::isfinite(loss) || loss > kDivergenceLoss)
        throw DivergenceError("training diverged at step " + std::to_string(step) +
                              " (loss " + std::to_string(loss) + ")");

      StepRecord rec;
      rec.step = step;
      rec.loss = loss;
      if (!e.empty()) {
        rec.error_norm = norm2(e);
        if (cfg.record_errors) traj.errors.push_back(e);
      }
      if (scalar_squared && cfg.nu_every && step % cfg.nu_every == 0)
        rec.metrics = track_npf_metrics(model, probe_x, probe_y);
      if (scalar_squared && cfg.snapshot_every && step % cfg.snapshot_every == 0)
        traj.snapshots.push_back(snapshot(model, data.x, step));

      const double a = cfg.optimizer.step;
      for (std::size_t k = 0; k < params.size(); ++k) {
        Vector theta = params[k]->flatten();
        const Vector g = acc[k].flatten();
        if (cfg.optimizer.kind == Optimizer::Kind::sgd) {
          for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= a * g[i];
        } else {
          const auto& o = cfg.optimizer;
          const double t = double(step + 1);
          const double c1 = 1.0 - std::pow(o.beta1, t);
          const double c2 = 1.0 - std::pow(o.beta2, t);
          auto& m = adam_m[k];
          auto& v = adam_v[k];
          for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            theta[i] -= a * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
          }
        }
        params[k]->assign(theta);
      }
      ++step;

      if (track) {
        auto next = all_gates(ops, data.x);
        auto flips = detect_switch(gates, next);
        if (!flips.empty()) {
          rec.switch_count = flips.size();
          traj.switch_instants.push_back(step);
          traj.switches.push_back({step, std::move(flips)});
          gates = std::move(next);
        }
      }
      traj.steps.push_back(std::move(rec));
    }

    const bool last = epoch + 1 == cfg.epochs;
    if (!last && (cfg.eval_every == 0 || (epoch + 1) % cfg.eval_every != 0)) continue;
    EpochRecord er;
    er.epoch = epoch;
    for (std::size_t s = 0; s < n; ++s)
      er.train_loss += loss_and_grad(cfg.loss, Ops::output(ops.run(data.x[s])), data.y[s], og);
    er.train_accuracy = accuracy_impl(ops, data.x, data.y);
    if (data.has_test()) er.test_accuracy = accuracy_impl(ops, data.test_x, data.test_y);
    traj.epochs.push_back(er);
  }
  return traj;
}

template <class Ops>
Vector errors(const Ops& ops, const LabeledDataset& data) {
  Vector e(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) e[s] = Ops::output(ops.run(data.x[s]))[0] - data.y[s];
  return e;
}

Matrix full_kernel(const ReluNet& net, const LabeledDataset& data) {
  std::vector<ActivationRecord> recs;
  for (const auto& x : data.x) recs.push_back(forward(net.arch, net.weights, x));
  return tangent_gram_layerwise(net.weights, recs).values;
}

Matrix full_kernel(const DgnModel& model, const LabeledDataset& data) {
  auto k = dgn_kernels(model, data.x);
  Matrix out = k.value.values;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += k.feature.values.values()[i];
  return out;
}

ReluOps ops_for(ReluNet& m) { return {m}; }
DgnOps ops_for(DgnModel& m) { return {m}; }

template <class Model>
ErrorDynamicsReport error_dynamics_impl(const Model& model, const LabeledDataset& data, double alpha) {
  data.validate();
  if (!(alpha > 0)) throw ParameterError("error_dynamics_check: alpha must be positive");
  Model base = model;
  auto ops = ops_for(base);
  if (ops.d_out() != 1) throw DimensionError("error_dynamics_check: scalar-output models only");

  const Vector e0 = errors(ops, data);
  const Matrix k = full_kernel(base, data);
  const Vector ke = matvec(k, e0);
  const auto gates0 = all_gates(ops, data.x);

  auto params = ops.params();
  std::vector<Vector> grad(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) grad[j].assign(params[j]->size(), 0.0);
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto fwd = ops.run(data.x[s]);
    const double og = e0[s];
    const auto g = ops.grad(fwd, std::span<const double>(&og, 1));
    for (std::size_t j = 0; j < params.size(); ++j) {
      const Vector flat = g[j].flatten();
      for (std::size_t i = 0; i < flat.size(); ++i) grad[j][i] += flat[i];
    }
  }

  ErrorDynamicsReport rep;
  for (double a = alpha; rep.retries <= 40; a /= 2.0, ++rep.retries) {
    Model moved = base;
    auto mops = ops_for(moved);
    auto mparams = mops.params();
    for (std::size_t j = 0; j < mparams.size(); ++j) {
      Vector theta = mparams[j]->flatten();
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= a * grad[j][i];
      mparams[j]->assign(theta);
    }
    // A gate switch inside the step breaks the first-order expansion.
    if (!detect_switch(gates0, all_gates(mops, data.x)).empty()) continue;
    const Vector e1 = errors(mops, data);
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < e0.size(); ++s) {
      const double pred = a * ke[s];
      num += (e1[s] - e0[s] + pred) * (e1[s] - e0[s] + pred);
      den += pred * pred;
    }
    if (den == 0.0) throw ParameterError("error_dynamics_check: K e vanishes");
    rep.alpha = a;
    rep.ratio = std::sqrt(num / den);
    return rep;
  }
  throw ParameterError("error_dynamics_check: gates switch even at the smallest step");
}

}  // namespace

std::string_view to_string(Loss loss) {
  return loss == Loss::squared ? "squared" : "cross_entropy";
}

Loss parse_loss(std::string_view name) {
  if (name == "squared") return Loss::squared;
  if (name == "cross_entropy") return Loss::cross_entropy;
  throw ParameterError("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(optimizer.step >= 0.0) || !std::isfinite(optimizer.step))
    throw ParameterError("step size must be a finite non-negative number");
  if (optimizer.kind == Optimizer::Kind::adam &&
      !(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1 &&
        optimizer.eps > 0))
    throw ParameterError("invalid Adam parameters");
  if (probe_x.size() != probe_y.size()) throw DimensionError("probe inputs and labels differ in count");
}

Trajectory train(ReluNet& net, const LabeledDataset& data, const TrainConfig& config) {
  return train_impl(net, ReluOps{net}, data, config);
}

Trajectory train(DgnModel& model, const LabeledDataset& data, const TrainConfig& config) {
  return train_impl(model, DgnOps{model}, data, config);
}

double accuracy(const ReluNet& net, std::span<const Vector> xs, std::span<const double> ys) {
  ReluNet copy = net;
  return accuracy_impl(ReluOps{copy}, xs, ys);
}

double accuracy(const DgnModel& model, std::span<const Vector> xs, std::span<const double> ys) {
  DgnModel copy = model;
  return accuracy_impl(DgnOps{copy}, xs, ys);
}

std::vector<GateFlip> detect_switch(std::span<const GatePattern> prev, std::span<const GatePattern> next) {
  if (prev.size() != next.size()) throw DimensionError("detect_switch: example counts differ");
  std::vector<GateFlip> flips;
  for (std::size_t s = 0; s < prev.size(); ++s) {
    if (prev[s].size() != next[s].size()) throw DimensionError("detect_switch: layer counts differ");
    for (std::size_t l = 0; l < prev[s].size(); ++l) {
      if (prev[s][l].size() != next[s][l].size()) throw DimensionError("detect_switch: widths differ");
      for (std::size_t i = 0; i < prev[s][l].size(); ++i)
        if (prev[s][l][i] != next[s][l][i]) flips.push_back({s, l, i});
    }
  }
  return flips;
}

ErrorDynamicsReport error_dynamics_check(const ReluNet& net, const LabeledDataset& data, double alpha) {
  return error_dynamics_impl(net, data, alpha);
}

ErrorDynamicsReport error_dynamics_check(const DgnModel& model, const LabeledDataset& data, double alpha) {
  return error_dynamics_impl(model, data, alpha);
}

template <class Model>
ErrorDynamicsSlope error_dynamics_slope(const Model& model, const LabeledDataset& data, double alpha,
                                        std::size_t halvings) {
  ErrorDynamicsSlope out;
  double log_sum = 0.0;
  for (std::size_t k = 0; k <= halvings; ++k) {
    const auto rep = error_dynamics_check(model, data, alpha / std::ldexp(1.0, int(k)));
    out.alphas.push_back(rep.alpha);
    out.ratios.push_back(rep.ratio);
    if (k > 0) log_sum += std::log(out.ratios[k] / out.ratios[k - 1]);
  }
  out.slope = halvings ? std::exp(log_sum / double(halvings)) : 0.0;
  return out;
}

template ErrorDynamicsSlope error_dynamics_slope<ReluNet>(const ReluNet&, const LabeledDataset&, double,
                                                          std::size_t);
template ErrorDynamicsSlope error_dynamics_slope<DgnModel>(const DgnModel&, const LabeledDataset&, double,
                                                           std::size_t);

NpfMetrics track_npf_metrics(const ReluNet& net, std::span<const Vector> xs, std::span<const double> y) {
  std::vector<GatePattern> gates;
  for (const auto& x : xs) gates.push_back(gate_pattern(net.arch, net.weights, x));
  return nu_from_gates(xs, gates, y);
}

NpfMetrics track_npf_metrics(const DgnModel& model, std::span<const Vector> xs, std::span<const double> y) {
  std::vector<GatePattern> gates;
  for (const auto& x : xs) gates.push_back(dgn_forward(model, x).feature.gates);
  NpfMetrics m = nu_from_gates(xs, gates, y);
  const auto k = dgn_kernels(model, xs);
  m.kv_trace = trace(k.value.values);
  m.kv_frobenius = frob(k.value.values);
  m.kf_trace = trace(k.feature.values);
  m.kf_frobenius = frob(k.feature.values);
  return m;
}

}  // namespace npl
