#include "npl/studies.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "npl/data.hpp"
#include "npl/errors.hpp"
#include "npl/parallel.hpp"
#include "npl/paths.hpp"
#include "npl/rng.hpp"

namespace npl {

namespace {

std::uint64_t cell_seed(std::uint64_t master, std::size_t a, std::size_t b) {
  return derive_seed(derive_seed(master, a), b);
}

void check_frozen_hard(const DgnModel& m) {
  if (m.gates.is_soft() || m.feature_trainable())
    throw ParameterError("fixed-gate studies need hard gates and frozen features");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Unbiased sample variance.
double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

GatePattern memo_gates(const Architecture& arch, double mu, Rng& rng) {
  std::bernoulli_distribution on(mu);
  GatePattern g(arch.hidden_layers(), Vector(arch.width));
  for (auto& layer : g)
    for (double& v : layer) v = on(rng) ? 1.0 : 0.0;
  return g;
}

}  // namespace

McResult mc_expected_ntk(const DgnModel& gates_model, std::span<const Vector> xs, const McConfig& cfg) {
  check_frozen_hard(gates_model);
  if (cfg.trials < 2) throw ParameterError("mc_expected_ntk: trials must be >= 2");
  if (cfg.widths.empty()) throw ParameterError("mc_expected_ntk: no widths given");
  if (!(cfg.sigma_prime > 0)) throw ParameterError("mc_expected_ntk: sigma' must be positive");
  const std::size_t wf = gates_model.arch.width;
  const std::size_t d = gates_model.arch.depth;
  const std::size_t n = xs.size();

  std::vector<GatePattern> gates;
  for (const auto& x : xs) gates.push_back(dgn_forward(gates_model, x).gates);

  McResult out;
  for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
    const std::size_t width = cfg.widths[wi];
    if (width == 0 || width % wf != 0)
      throw ParameterError("mc_expected_ntk: width " + std::to_string(width) +
                           " is not a multiple of the feature width");
    McWidthResult row;
    row.width = width;
    row.pad = width / wf;
    row.sigma = cfg.sigma_prime / std::sqrt(double(width));

    std::vector<GatePattern> padded;
    for (const auto& g : gates) padded.push_back(expand_gates(g, row.pad));
    row.target = npk(xs, padded).values;
    const double scale = double(d) * std::pow(row.sigma, 2.0 * double(d - 1));
    for (double& v : row.target.values()) v *= scale;

    std::vector<Matrix> trial_kv(cfg.trials);
    const double sigma_base = cfg.sigma_prime / std::sqrt(double(wf));
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
      const auto model = pad_dgn(gates_model, row.pad, sigma_base, cell_seed(cfg.master_seed, wi, t));
      trial_kv[t] = dgn_kernels(model, xs).value.values;
    });
    row.mean_kv = Matrix(n, n);
    for (const auto& k : trial_kv)
      for (std::size_t i = 0; i < k.size(); ++i) row.mean_kv.values()[i] += k.values()[i];
    for (double& v : row.mean_kv.values()) v /= double(cfg.trials);

    row.frobenius_error = relative_frobenius_error(row.mean_kv, row.target);
    const double tmax = max_abs(row.target);
    row.max_entry_error = max_abs_diff(row.mean_kv, row.target) / (tmax > 0 ? tmax : 1.0);
    out.rows.push_back(std::move(row));
  }
  for (const auto& r : out.rows)
    out.target_spread = std::max(out.target_spread, max_abs_diff(r.target, out.rows.front().target));
  return out;
}

PathGradientMoments path_gradient_moments(const Architecture& arch, double sigma, std::size_t trials,
                                          std::uint64_t seed, std::size_t threads) {
  if (trials < 2) throw ParameterError("path_gradient_moments: trials must be >= 2");
  const auto paths = enumerate_paths(arch);
  const std::size_t P = paths.count();
  std::vector<double> same_lo(trials), same_hi(trials), cross(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t t) {
    const auto w = init_weights(arch, WeightInit::bernoulli(sigma), derive_seed(seed, t));
    const Matrix v = vtk(w, paths);
    double lo = v(0, 0), hi = v(0, 0), sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      lo = std::min(lo, v(p, p));
      hi = std::max(hi, v(p, p));
      for (std::size_t q = p + 1; q < P; ++q) sum += v(p, q);
    }
    same_lo[t] = lo;
    same_hi[t] = hi;
    if (P > 1) cross[t] = sum / (double(P) * double(P - 1) / 2.0);
  });
  PathGradientMoments m;
  m.trials = trials;
  m.expected_same = double(arch.depth) * std::pow(sigma, 2.0 * double(arch.depth - 1));
  m.same_min = *std::min_element(same_lo.begin(), same_lo.end());
  m.same_max = *std::max_element(same_hi.begin(), same_hi.end());
  m.cross_mean = mean_of(cross);
  m.cross_stderr = std::sqrt(variance_of(cross) / double(trials));
  return m;
}

VarianceResult variance_vs_width(const VarianceConfig& cfg) {
  if (cfg.widths.size() < 3) throw ParameterError("variance_vs_width: need at least 3 widths");
  if (cfg.trials < 2) throw ParameterError("variance_vs_width: trials must be >= 2");
  const Architecture farch{cfg.d_in, cfg.feature_width, cfg.depth};
  const auto model = build_dgn(farch, Regime::FRNPF_II, std::nullopt, cfg.feature_seed, cfg.feature_seed);

  VarianceResult out;
  Rng rng(derive_seed(cfg.feature_seed, 0x7));
  std::normal_distribution<double> g(0.0, 1.0);
  Vector x(cfg.d_in), noise(cfg.d_in);
  for (double& v : x) v = g(rng);
  for (double& v : noise) v = g(rng);
  Vector xp(cfg.d_in);
  for (std::size_t i = 0; i < cfg.d_in; ++i) xp[i] = x[i] + 0.5 * noise[i];
  const std::vector<Vector> raw = {x, xp};
  const auto xs = normalize_rows(raw);
  out.x = xs[0];
  out.x_prime = xs[1];

  const double sigma_base = cfg.sigma_prime / std::sqrt(double(cfg.feature_width));
  for (std::size_t wi = 0; wi < cfg.widths.size(); ++wi) {
    const std::size_t width = cfg.widths[wi];
    if (width == 0 || width % cfg.feature_width != 0)
      throw ParameterError("variance_vs_width: width " + std::to_string(width) +
                           " is not a multiple of the feature width");
    std::vector<double> entries(cfg.trials);
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
      const auto padded = pad_dgn(model, width / cfg.feature_width, sigma_base, cell_seed(cfg.master_seed, wi, t));
      entries[t] = dgn_kernels(padded, xs).value(0, 1);
    });
    out.rows.push_back({width, mean_of(entries), variance_of(entries), cfg.trials < 30});
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = double(out.rows.size());
  for (const auto& r : out.rows) {
    const double lx = std::log(double(r.width)), ly = std::log(r.variance);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return out;
}

GramMatrix expected_memo_kernel(std::size_t n, std::size_t depth, double mu) {
  if (n < 2) throw ParameterError("memo kernel: n must be >= 2");
  if (!(mu > 0 && mu < 1)) throw ParameterError("memo kernel: mu must lie in (0,1)");
  if (depth < 2) throw ParameterError("memo kernel: depth must be >= 2");
  const double off = std::pow(mu, double(depth - 1));
  Matrix k(n, n, off);
  for (std::size_t i = 0; i < n; ++i) k(i, i) = 1.0;
  return {GramKind::NTK, std::move(k)};
}

MemoClosedForm memo_spectrum_closed_form(std::size_t n, std::size_t depth, double mu) {
  if (n < 2) throw ParameterError("memo spectrum: n must be >= 2");
  if (!(mu > 0 && mu < 1)) throw ParameterError("memo spectrum: mu must lie in (0,1)");
  const double off = std::pow(mu, double(depth - 1));
  return {1.0 + double(n - 1) * off, 1.0 - off, n - 1};
}

SpectrumReport spectrum_report(const Matrix& k, std::optional<MemoClosedForm> predicted) {
  SpectrumReport r;
  r.eigenvalues = eig_sym(k).values;
  double acc = 0.0;
  for (double v : r.eigenvalues) r.ecdf.push_back(acc += v);
  r.rho_min = r.eigenvalues.front();
  r.rho_max = r.eigenvalues.back();
  r.predicted = predicted;
  return r;
}

MemoNet make_memo_net(std::size_t n, std::size_t width, std::size_t depth, double mu, std::uint64_t seed) {
  if (!(mu > 0 && mu <= 1)) throw ParameterError("memo net: mu must lie in (0,1]");
  MemoNet net;
  net.n = n;
  net.arch = Architecture{1, width, depth};
  net.arch.validate();
  net.mu = mu;
  Rng rng(derive_seed(seed, 1));
  for (std::size_t s = 0; s < n; ++s) net.gates.push_back(memo_gates(net.arch, mu, rng));
  net.weights = init_weights(net.arch, WeightInit::bernoulli(std::sqrt(1.0 / (mu * double(width)))),
                             derive_seed(seed, 2));
  return net;
}

namespace {
const double kOne[1] = {1.0};
}

Matrix memo_kernel(const MemoNet& net) {
  std::vector<ActivationRecord> recs;
  for (const auto& g : net.gates) recs.push_back(forward_gated(net.arch, net.weights, kOne, g));
  return tangent_gram_layerwise(net.weights, recs).values;
}

Vector memo_outputs(const MemoNet& net) {
  Vector y;
  for (const auto& g : net.gates) y.push_back(forward_gated(net.arch, net.weights, kOne, g).y_hat());
  return y;
}

Vector train_memo(MemoNet& net, std::span<const double> y, double alpha, std::size_t steps) {
  if (y.size() != net.n) throw DimensionError("train_memo: target count differs from n");
  Vector curve;
  double e0 = 0.0;
  for (std::size_t t = 0; t <= steps; ++t) {
    std::vector<ActivationRecord> recs;
    double sq = 0.0;
    Vector e(net.n);
    for (std::size_t s = 0; s < net.n; ++s) {
      recs.push_back(forward_gated(net.arch, net.weights, kOne, net.gates[s]));
      e[s] = recs.back().y_hat() - y[s];
      sq += e[s] * e[s];
    }
    if (!std::isfinite(sq) || 0.5 * sq > 1e12)
      throw DivergenceError("memorisation training diverged at step " + std::to_string(t));
    if (t == 0) e0 = sq;
    curve.push_back(e0 > 0 ? sq / e0 : 0.0);
    if (t == steps) break;
    Weights grad = Weights::zeros(net.arch);
    for (std::size_t s = 0; s < net.n; ++s) {
      const auto g = backprop(net.weights, recs[s], std::span<const double>(&e[s], 1));
      for (std::size_t k = 0; k < g.layers.size(); ++k) {
        auto a = grad.layers[k].values();
        auto b = g.layers[k].values();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      }
    }
    for (std::size_t k = 0; k < grad.layers.size(); ++k) {
      auto w = net.weights.layers[k].values();
      auto g = grad.layers[k].values();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= alpha * g[i];
    }
  }
  return curve;
}

std::vector<MemoCell> run_memo_study(const MemoStudyConfig& cfg) {
  if (cfg.kernel_seeds < 2) throw ParameterError("memo study: kernel_seeds must be >= 2");
  if (cfg.train_seeds < 1) throw ParameterError("memo study: train_seeds must be >= 1");
  std::vector<MemoCell> cells;
  for (std::size_t width : cfg.widths) {
    for (std::size_t depth : cfg.depths) {
      MemoCell cell;
      cell.width = width;
      cell.depth = depth;
      const std::uint64_t base = cell_seed(cfg.master_seed, width, depth);
      const std::size_t n = cfg.n;

      std::vector<Matrix> kernels(cfg.kernel_seeds);
      std::vector<double> diag(cfg.kernel_seeds), off(cfg.kernel_seeds);
      parallel_for(cfg.kernel_seeds, cfg.threads, [&](std::size_t k) {
        const auto net = make_memo_net(n, width, depth, cfg.mu, derive_seed(base, k));
        Matrix kk = memo_kernel(net);
        for (double& v : kk.values()) v /= double(depth);
        double ds = 0.0, os = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) (i == j ? ds : os) += kk(i, j);
        diag[k] = ds / double(n);
        off[k] = os / double(n * (n - 1));
        kernels[k] = std::move(kk);
      });
      Matrix mean(n, n);
      for (const auto& k : kernels)
        for (std::size_t i = 0; i < k.size(); ++i) mean.values()[i] += k.values()[i];
      for (double& v : mean.values()) v /= double(cfg.kernel_seeds);
      cell.diag_mean = mean_of(diag);
      cell.diag_stderr = std::sqrt(variance_of(diag) / double(diag.size()));
      cell.off_mean = mean_of(off);
      cell.off_stderr = std::sqrt(variance_of(off) / double(off.size()));
      cell.empirical = spectrum_report(mean);
      if (cfg.mu < 1.0) {
        const auto cf = memo_spectrum_closed_form(n, depth, cfg.mu);
        cell.expected = spectrum_report(expected_memo_kernel(n, depth, cfg.mu).values, cf);
      }

      std::vector<Vector> curves(cfg.train_seeds);
      parallel_for(cfg.train_seeds, cfg.threads, [&](std::size_t t) {
        const std::uint64_t seed = derive_seed(base, 0x100000000ULL + t);
        auto net = make_memo_net(n, width, depth, cfg.mu, seed);
        Rng rng(derive_seed(seed, 3));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Vector y(n);
        for (double& v : y) v = u(rng);
        const double rho = eig_sym(memo_kernel(net)).max();
        curves[t] = train_memo(net, y, cfg.alpha_scale / rho, cfg.steps);
      });
      cell.error_curve.assign(cfg.steps + 1, 0.0);
      for (const auto& c : curves)
        for (std::size_t i = 0; i < c.size(); ++i) cell.error_curve[i] += c[i] / double(cfg.train_seeds);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace npl
