#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>

#include "json.hpp"
#include "npl/data.hpp"
#include "npl/dgn.hpp"
#include "npl/errors.hpp"
#include "npl/io.hpp"
#include "npl/kernels.hpp"
#include "npl/rng.hpp"
#include "npl/studies.hpp"
#include "npl/trainer.hpp"

#ifndef NPL_GIT_DESCRIBE
#define NPL_GIT_DESCRIBE "unknown"
#endif

namespace npl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Defaults = std::vector<std::pair<std::string, std::string>>;

const Defaults kCommon = {{"seed", "0"}, {"threads", "1"}};

const Defaults kDataset = {
    {"dataset", "two_blobs"},  // two_blobs | scaled_pair | ring_vs_center | mnist
    {"n_per_class", "50"},
    {"n_test_per_class", "0"},
    {"dim", "2"},
    {"separation", "10"},
    {"stddev", "1"},
    {"base", "1,1"},
    {"factor", "0.5"},
    {"data_seed", "0"},
    {"images", ""},
    {"labels", ""},
    {"digits", "4,7"},
    {"cap", "0"},      // 0 keeps every matching image
    {"n_train", "0"},  // mnist: 0 keeps everything for training, else the rest is test data
};

Defaults merge(std::initializer_list<const Defaults*> parts) {
  Defaults out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

std::size_t threads_of(const Params& p) { return std::max<std::size_t>(1, p.count("threads")); }

LabeledDataset load_dataset(const Params& p) {
  const auto name = p.text("dataset");
  if (name == "mnist") {
    if (!p.has_value("images") || !p.has_value("labels"))
      throw ConfigError("dataset=mnist needs both 'images' and 'labels'");
    const auto digits = p.counts("digits");
    if (digits.size() != 2) throw ConfigError("config key 'digits': expected two digits");
    std::optional<std::size_t> cap;
    if (p.count("cap") > 0) cap = p.count("cap");
    auto d = load_binary_mnist(p.text("images"), p.text("labels"), {int(digits[0]), int(digits[1])}, cap);
    const std::size_t n_train = p.count("n_train");
    if (n_train > 0) {
      if (n_train >= d.size())
        throw ConfigError("n_train=" + std::to_string(n_train) + " leaves no test data (" +
                          std::to_string(d.size()) + " examples)");
      const std::size_t n_test = d.size() - n_train;
      d = split_tail(std::move(d), n_test);
    }
    return d;
  }
  SyntheticSpec s;
  s.kind = parse_synthetic_kind(name);
  s.n_per_class = p.count("n_per_class");
  s.n_test_per_class = p.count("n_test_per_class");
  s.dim = p.count("dim");
  s.separation = p.real("separation");
  s.stddev = p.real("stddev");
  s.base = p.reals("base");
  s.factor = p.real("factor");
  s.seed = p.u64("data_seed");
  return gen_synthetic(s);
}

std::optional<double> beta_of(const Params& p) {
  if (!p.has_value("beta")) return std::nullopt;
  const double b = p.real("beta");
  if (!(b > 0)) throw ConfigError("config key 'beta' must be positive");
  return b;
}

WeightInit init_of(const Params& p) {
  const auto name = p.text("init");
  if (name == "he") return WeightInit::he();
  if (name == "gaussian") return WeightInit::gaussian(p.real("init_scale"));
  if (name == "bernoulli") return WeightInit::bernoulli(p.real("init_scale"));
  throw ConfigError("config key 'init': unknown scheme '" + name + "'");
}

std::size_t inversions(const std::vector<double>& errors) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < errors.size(); ++i) n += errors[i] > errors[i - 1];
  return n;
}

// Random instances for the identity suite, drawn independently of the tests.
struct Instance {
  Architecture arch;
  Weights weights;
  std::vector<Vector> xs;
};

Instance random_instance(Rng& rng, const Params& p, std::uint64_t seed) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
  };
  Instance in;
  in.arch = Architecture{pick(1, p.count("max_in")), pick(1, p.count("max_width")), pick(2, p.count("max_depth"))};
  in.weights = init_weights(in.arch, WeightInit::gaussian(1.0), seed);
  std::normal_distribution<double> g;
  in.xs.resize(p.count("n_inputs"));
  for (auto& x : in.xs) {
    x.resize(in.arch.d_in);
    for (double& v : x) v = g(rng);
  }
  return in;
}

std::vector<GatePattern> gates_of(const Instance& in) {
  std::vector<GatePattern> g;
  for (const auto& x : in.xs) g.push_back(gate_pattern(in.arch, in.weights, x));
  return g;
}

struct Check {
  std::string name;
  double worst = 0.0;
  double threshold = 0.0;
  bool passed() const { return worst <= threshold; }
};

json table_json(const Check& c) {
  return {{"name", c.name}, {"worst", c.worst}, {"threshold", c.threshold}, {"passed", c.passed()}};
}

Table error_table(const McResult& r) {
  Table t{{"width", "pad", "sigma", "frobenius_error", "max_entry_error"}, {}};
  for (const auto& row : r.rows)
    t.rows.push_back({double(row.width), double(row.pad), row.sigma, row.frobenius_error, row.max_entry_error});
  return t;
}

}  // namespace

Params default_params(const std::string& command) {
  if (command == "verify") {
    const Defaults own = {{"instances", "200"}, {"max_in", "3"}, {"max_width", "4"}, {"max_depth", "4"},
                          {"n_inputs", "4"}};
    return {command, merge({&kCommon, &own})};
  }
  if (command == "kernel") {
    const Defaults own = {{"kind", "NPK"},     {"width", "16"},     {"depth", "3"},  {"init", "he"},
                          {"init_scale", "1"}, {"regime", "relu"}, {"beta", ""},    {"model", ""},
                          {"normalize", "false"}};
    return {command, merge({&kCommon, &kDataset, &own})};
  }
  if (command == "mc-ntk") {
    const Defaults own = {{"d_in", "4"},        {"feature_width", "16"},     {"depth", "3"},
                          {"n_inputs", "5"},    {"trials", "500"},           {"widths", "64,256,1024"},
                          {"sigma_prime", "1"}, {"feature_seed", "11"},      {"input_seed", "7"}};
    return {command, merge({&kCommon, &own})};
  }
  if (command == "variance") {
    const VarianceConfig v;
    const Defaults own = {{"d_in", std::to_string(v.d_in)},
                          {"depth", std::to_string(v.depth)},
                          {"feature_width", std::to_string(v.feature_width)},
                          {"widths", "64,128,256,512"},
                          {"trials", std::to_string(v.trials)},
                          {"sigma_prime", "1"},
                          {"feature_seed", std::to_string(v.feature_seed)}};
    return {command, merge({&kCommon, &own})};
  }
  if (command == "memorise") {
    const Defaults own = {{"n", "50"},          {"widths", "25"},         {"depths", "2,8,16"},
                          {"mu", "0.5"},        {"kernel_seeds", "200"},  {"train_seeds", "10"},
                          {"steps", "500"},     {"alpha_scale", "0.1"}};
    return {command, merge({&kCommon, &own})};
  }
  if (command == "train") {
    const Defaults own = {{"regime", "relu"},     {"beta", ""},           {"donor", ""},
                          {"width", "32"},        {"depth", "3"},         {"init", "he"},
                          {"init_scale", "1"},    {"optimizer", "adam"},  {"step", "1e-3"},
                          {"batch", "32"},        {"epochs", "30"},       {"loss", "squared"},
                          {"track_switches", "true"}, {"nu_every", "0"}, {"probe", "100"},
                          {"snapshot_every", "0"}, {"eval_every", "1"},   {"normalize", "false"}};
    return {command, merge({&kCommon, &kDataset, &own})};
  }
  throw ConfigError("unknown subcommand '" + command + "'");
}

void validate_params(const Params& p) {
  p.u64("seed");
  p.count("threads");
  if (p.command() == "kernel") parse_gram_kind(p.text("kind"));
  if (p.command() != "train") return;
  const auto regime = p.text("regime");
  if (regime == "relu") return;
  const auto r = parse_regime(regime);
  if (r == Regime::DLNPF && !beta_of(p)) throw ConfigError("regime dlnpf requires --beta");
  if (r == Regime::FLNPF && !p.has_value("donor")) throw ConfigError("regime flnpf requires a donor model (--donor PATH)");
}

void write_manifest(const RunContext& ctx) {
  json m;
  m["command"] = ctx.params.command();
  m["config"] = ctx.params.values();
  m["seed"] = ctx.params.u64("seed");
  m["git_describe"] = NPL_GIT_DESCRIBE;
  write_json(ctx.out / "manifest.json", m);
}

int cmd_verify(const RunContext& ctx) {
  const auto& p = ctx.params;
  const std::uint64_t seed = p.u64("seed");
  Rng rng(derive_seed(seed, 0));
  Check path_sum{"path_sum_identity", 0.0, 1e-10};
  Check overlap{"overlap_definitions", 0.0, 0.0};
  Check hadamard{"hadamard_factorisation", 0.0, 1e-10};
  Check factor{"tangent_kernel_factorisation", 0.0, 1e-8};
  Check bound{"spectral_bound_violations", 0.0, 0.0};
  for (std::size_t t = 0; t < p.count("instances"); ++t) {
    const auto in = random_instance(rng, p, derive_seed(seed, t + 1));
    const auto paths = enumerate_paths(in.arch);
    const auto g = gates_of(in);
    for (std::size_t s = 0; s < in.xs.size(); ++s) {
      const double y = forward(in.arch, in.weights, in.xs[s]).y_hat();
      const double yp = output_via_paths(in.xs[s], in.weights, g[s], paths);
      path_sum.worst = std::max(path_sum.worst, std::abs(y - yp) / std::max(1.0, std::abs(y)));
    }
    const auto lp = lambda_via_paths(g, paths).values;
    const auto ll = lambda_via_layers(g).values;
    overlap.worst = std::max(overlap.worst, double(in.arch.d_in) * max_abs_diff(lp, ll));
    const auto h = npk(in.xs, g).values;
    const auto phi = npf_matrix(in.xs, g, paths);
    const auto direct = npk_from_features(phi).values;
    hadamard.worst = std::max(hadamard.worst, max_abs_diff(h, direct) / std::max(1.0, max_abs(direct)));
    const auto v = vtk(in.weights, paths);
    const auto k = ntk(in.arch, in.weights, in.xs).values;
    factor.worst = std::max(factor.worst, relative_frobenius_error(ntk_factored(phi, v).values, k));
    bound.worst += !eigen_bound_check(k, h, v).holds;
  }
  const std::vector<Check> checks = {path_sum, overlap, hadamard, factor, bound};
  json report = json::array();
  for (const auto& c : checks) report.push_back(table_json(c));
  write_json(ctx.out / "verify.json", report);
  for (const auto& c : checks)
    std::printf("%s %s: worst %.3g (threshold %.3g)\n", c.passed() ? "PASS" : "FAIL", c.name.c_str(), c.worst,
                c.threshold);
  for (const auto& c : checks)
    if (!c.passed()) {
      std::fprintf(stderr, "verify: check '%s' failed\n", c.name.c_str());
      return kExitFailed;
    }
  return kExitOk;
}

int cmd_kernel(const RunContext& ctx) {
  const auto& p = ctx.params;
  auto data = load_dataset(p);
  if (p.flag("normalize")) data.x = normalize_rows(data.x);
  const auto kind = parse_gram_kind(p.text("kind"));
  const std::uint64_t seed = p.u64("seed");
  const Architecture arch{data.d_in(), p.count("width"), p.count("depth")};

  std::optional<DgnModel> model;
  if (p.has_value("model")) {
    model = read_dgn(p.text("model"));
    if (model->arch.d_in != data.d_in()) throw ConfigError("model input dimension does not match the dataset");
  } else if (p.text("regime") != "relu") {
    model = build_dgn(arch, parse_regime(p.text("regime")), beta_of(p), derive_seed(seed, 1), derive_seed(seed, 2),
                      nullptr, init_of(p));
  }
  const Weights relu = model ? model->feature : init_weights(arch, init_of(p), derive_seed(seed, 100));
  const Architecture& garch = model ? model->arch : arch;

  std::vector<GatePattern> gates;
  for (const auto& x : data.x) gates.push_back(model ? dgn_forward(*model, x).gates : gate_pattern(garch, relu, x));

  GramMatrix g;
  switch (kind) {
    case GramKind::Sigma: g = input_gram(data.x); break;
    case GramKind::Lambda: g = lambda_via_layers(gates); break;
    case GramKind::NPK: g = npk(data.x, gates); break;
    case GramKind::NTK: {
      if (model) {
        const auto k = dgn_kernels(*model, data.x);
        g = {GramKind::NTK, k.value.values};
        for (std::size_t i = 0; i < g.values.size(); ++i) g.values.values()[i] += k.feature.values.values()[i];
      } else {
        g = ntk(garch, relu, data.x);
      }
      break;
    }
    case GramKind::Kv:
    case GramKind::Kf: {
      if (!model) throw ConfigError("kind=" + p.text("kind") + " needs a DGN: set 'regime' or 'model'");
      const auto k = dgn_kernels(*model, data.x);
      g = kind == GramKind::Kv ? k.value : k.feature;
      break;
    }
    case GramKind::LimitNTK: g = limit_ntk_relu(input_gram(data.x), garch.depth); break;
  }
  write_csv(ctx.out / "gram.csv", g);
  write_json(ctx.out / "spectrum.json", to_json(spectrum_report(g.values)));
  write_csv(ctx.out / "spectrum.csv", spectrum_table(spectrum_report(g.values)));
  std::printf("%s Gram matrix, n=%zu, written to %s\n", std::string(to_string(g.kind)).c_str(), g.n(),
              (ctx.out / "gram.csv").c_str());
  return kExitOk;
}

int cmd_mc_ntk(const RunContext& ctx) {
  const auto& p = ctx.params;
  const Architecture arch{p.count("d_in"), p.count("feature_width"), p.count("depth")};
  const auto gm = build_dgn(arch, Regime::FRNPF_II, std::nullopt, p.u64("feature_seed"), 0);
  Rng rng(p.u64("input_seed"));
  std::normal_distribution<double> g;
  std::vector<Vector> xs(p.count("n_inputs"), Vector(arch.d_in));
  for (auto& x : xs)
    for (double& v : x) v = g(rng);
  xs = normalize_rows(xs);

  McConfig c;
  c.trials = p.count("trials");
  c.widths = p.counts("widths");
  c.sigma_prime = p.real("sigma_prime");
  c.master_seed = p.u64("seed");
  c.threads = threads_of(p);
  const auto r = mc_expected_ntk(gm, xs, c);

  write_csv(ctx.out / "mc_ntk.csv", error_table(r));
  for (const auto& row : r.rows) {
    write_csv(ctx.out / ("mean_kv_w" + std::to_string(row.width) + ".csv"), GramMatrix{GramKind::Kv, row.mean_kv});
    write_csv(ctx.out / ("target_w" + std::to_string(row.width) + ".csv"), GramMatrix{GramKind::NPK, row.target});
  }
  std::vector<double> errs;
  for (const auto& row : r.rows) errs.push_back(row.frobenius_error);
  const bool ok = errs.back() <= 0.1 && inversions(errs) <= 1;
  write_json(ctx.out / "summary.json", {{"final_error", errs.back()},
                                       {"inversions", inversions(errs)},
                                       {"target_spread", r.target_spread},
                                       {"passed", ok}});
  for (const auto& row : r.rows) std::printf("w=%zu  rel. Frobenius error %.4f\n", row.width, row.frobenius_error);
  return ok ? kExitOk : kExitFailed;
}

int cmd_variance(const RunContext& ctx) {
  const auto& p = ctx.params;
  VarianceConfig c;
  c.d_in = p.count("d_in");
  c.depth = p.count("depth");
  c.feature_width = p.count("feature_width");
  c.widths = p.counts("widths");
  c.trials = p.count("trials");
  c.sigma_prime = p.real("sigma_prime");
  c.feature_seed = p.u64("feature_seed");
  c.master_seed = p.u64("seed");
  c.threads = threads_of(p);
  const auto r = variance_vs_width(c);
  Table t{{"width", "mean", "variance", "low_confidence"}, {}};
  for (const auto& row : r.rows) t.rows.push_back({double(row.width), row.mean, row.variance, double(row.low_confidence)});
  write_csv(ctx.out / "variance.csv", t);
  const bool ok = r.slope >= -1.3 && r.slope <= -0.7;
  write_json(ctx.out / "summary.json", {{"slope", r.slope}, {"x", r.x}, {"x_prime", r.x_prime}, {"passed", ok}});
  std::printf("log-log slope of variance against width: %.3f\n", r.slope);
  return ok ? kExitOk : kExitFailed;
}

int cmd_memorise(const RunContext& ctx) {
  const auto& p = ctx.params;
  MemoStudyConfig c;
  c.n = p.count("n");
  c.widths = p.counts("widths");
  c.depths = p.counts("depths");
  c.mu = p.real("mu");
  c.kernel_seeds = p.count("kernel_seeds");
  c.train_seeds = p.count("train_seeds");
  c.steps = p.count("steps");
  c.alpha_scale = p.real("alpha_scale");
  c.master_seed = p.u64("seed");
  c.threads = threads_of(p);
  const auto cells = run_memo_study(c);

  Table summary{{"width", "depth", "diag_mean", "diag_stderr", "off_mean", "off_stderr", "expected_off",
                 "rho_max_empirical", "rho_min_empirical", "rho_max_closed_form", "rho_min_closed_form",
                 "final_error"},
                {}};
  Table curves{{"step"}, {}};
  for (std::size_t t = 0; t <= c.steps; ++t) curves.rows.push_back({double(t)});
  bool ok = true;
  for (const auto& cell : cells) {
    const double off = std::pow(c.mu, double(cell.depth) - 1.0);
    const double cf_max = cell.expected.predicted ? cell.expected.predicted->rho_max : NAN;
    const double cf_min = cell.expected.predicted ? cell.expected.predicted->rho_min : NAN;
    summary.rows.push_back({double(cell.width), double(cell.depth), cell.diag_mean, cell.diag_stderr,
                            cell.off_mean, cell.off_stderr, off, cell.empirical.rho_max, cell.empirical.rho_min,
                            cf_max, cf_min, cell.error_curve.back()});
    ok = ok && std::abs(cell.diag_mean - 1.0) <= 3 * cell.diag_stderr &&
         std::abs(cell.off_mean - off) <= 3 * cell.off_stderr;
    if (cell.expected.predicted)
      ok = ok && std::abs(cell.expected.rho_max - cf_max) <= 1e-10 && std::abs(cell.expected.rho_min - cf_min) <= 1e-10;

    const std::string tag = "w" + std::to_string(cell.width) + "_d" + std::to_string(cell.depth);
    curves.columns.push_back(tag);
    for (std::size_t t = 0; t <= c.steps; ++t) curves.rows[t].push_back(cell.error_curve[t]);

    Table spec{{"index", "empirical", "empirical_ecdf", "expected", "expected_ecdf"}, {}};
    for (std::size_t i = 0; i < cell.empirical.eigenvalues.size(); ++i)
      spec.rows.push_back({double(i), cell.empirical.eigenvalues[i], cell.empirical.ecdf[i],
                           cell.expected.eigenvalues.empty() ? NAN : cell.expected.eigenvalues[i],
                           cell.expected.ecdf.empty() ? NAN : cell.expected.ecdf[i]});
    write_csv(ctx.out / ("spectrum_" + tag + ".csv"), spec);
  }
  // Depth sweet spot: among three or more depths at one width, an interior depth converges fastest.
  for (std::size_t w : c.widths) {
    std::vector<const MemoCell*> row;
    for (const auto& cell : cells)
      if (cell.width == w) row.push_back(&cell);
    if (row.size() < 3) continue;
    std::sort(row.begin(), row.end(), [](auto* a, auto* b) { return a->depth < b->depth; });
    const auto best = std::min_element(row.begin(), row.end(), [](auto* a, auto* b) {
      return a->error_curve.back() < b->error_curve.back();
    });
    ok = ok && best != row.begin() && best + 1 != row.end();
  }
  write_csv(ctx.out / "memo_cells.csv", summary);
  write_csv(ctx.out / "error_curves.csv", curves);
  for (const auto& cell : cells)
    std::printf("w=%zu d=%zu  diag %.4f off %.5f  error at step %zu: %.4g\n", cell.width, cell.depth, cell.diag_mean,
                cell.off_mean, c.steps, cell.error_curve.back());
  return ok ? kExitOk : kExitFailed;
}

int cmd_train(const RunContext& ctx) {
  const auto& p = ctx.params;
  auto data = load_dataset(p);
  if (p.flag("normalize")) {
    data.x = normalize_rows(data.x);
    if (data.has_test()) data.test_x = normalize_rows(data.test_x);
  }
  const std::uint64_t seed = p.u64("seed");
  const Architecture arch{data.d_in(), p.count("width"), p.count("depth")};
  const auto regime_name = p.text("regime");

  TrainConfig c;
  const auto opt = p.text("optimizer");
  if (opt == "adam") c.optimizer = Optimizer::adam(p.real("step"));
  else if (opt == "sgd") c.optimizer = Optimizer::sgd(p.real("step"));
  else throw ConfigError("config key 'optimizer': expected adam or sgd, got '" + opt + "'");
  c.batch_size = p.count("batch");
  c.epochs = p.count("epochs");
  c.loss = parse_loss(p.text("loss"));
  c.seed = seed;
  c.track_switches = p.flag("track_switches");
  c.nu_every = p.count("nu_every");
  c.snapshot_every = p.count("snapshot_every");
  c.eval_every = p.count("eval_every");
  const std::size_t probe = std::min(p.count("probe"), data.size());
  c.probe_x.assign(data.x.begin(), data.x.begin() + probe);
  c.probe_y.assign(data.y.begin(), data.y.begin() + probe);

  Trajectory traj;
  double train_acc = 0.0, test_acc = NAN;
  DgnModel saved;
  if (regime_name == "relu") {
    ReluNet net{arch, init_weights(arch, init_of(p), derive_seed(seed, 100))};
    traj = train(net, data, c);
    train_acc = accuracy(net, data.x, data.y);
    if (data.has_test()) test_acc = accuracy(net, data.test_x, data.test_y);
    // A ReLU net is stored as a DGN whose two networks coincide.
    saved = DgnModel{arch, 1, Regime::FRNPF_DI, GateMode::hard(), net.weights, net.weights};
  } else {
    const auto regime = parse_regime(regime_name);
    const auto beta = beta_of(p);
    if (regime == Regime::DLNPF && !beta) throw ConfigError("regime dlnpf requires --beta");
    std::optional<Weights> donor;
    if (regime == Regime::FLNPF) {
      if (!p.has_value("donor")) throw ConfigError("regime flnpf requires a donor model (--donor PATH)");
      donor = read_dgn(p.text("donor")).feature;
    }
    auto m = build_dgn(arch, regime, beta, derive_seed(seed, 1), derive_seed(seed, 2), donor ? &*donor : nullptr,
                       init_of(p));
    traj = train(m, data, c);
    train_acc = accuracy(m, data.x, data.y);
    if (data.has_test()) test_acc = accuracy(m, data.test_x, data.test_y);
    saved = m;
  }

  write_csv(ctx.out / "trajectory.csv", trajectory_table(traj));
  Table epochs{{"epoch", "train_loss", "train_accuracy", "test_accuracy"}, {}};
  for (const auto& e : traj.epochs) epochs.rows.push_back({double(e.epoch), e.train_loss, e.train_accuracy, e.test_accuracy});
  write_csv(ctx.out / "epochs.csv", epochs);
  write_json(ctx.out / "trajectory.json", to_json(traj));
  if (saved.arch.d_out == 1) write_dgn(saved, ctx.out / "model.dgn");
  json s = {{"regime", regime_name},
            {"train_accuracy", train_acc},
            {"test_accuracy", std::isnan(test_acc) ? json(nullptr) : json(test_acc)},
            {"steps", traj.steps.size()},
            {"switch_instants", traj.switch_instants.size()}};
  write_json(ctx.out / "summary.json", s);
  std::printf("%s: train accuracy %.4f", regime_name.c_str(), train_acc);
  if (!std::isnan(test_acc)) std::printf(", test accuracy %.4f", test_acc);
  std::printf("\n");
  return kExitOk;
}

}  // namespace npl::cli
