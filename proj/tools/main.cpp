#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "npl/errors.hpp"

namespace fs = std::filesystem;
using namespace npl::cli;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string seed;
  std::string threads;
  std::vector<std::string> sets;
  bool force = false;
  // Subcommand-specific shortcuts for config keys.
  std::string max_width, beta, regime, donor;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "output directory (default results/<subcommand>)");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--threads", f.threads, "worker threads; results do not depend on it");
  sub->add_flag("--force", f.force, "write into an existing output directory");
  sub->add_option("--set", f.sets, "override a config key, e.g. --set trials=100")->take_all();
}

int run(const std::string& name, const CommonFlags& f, int (*fn)(const RunContext&)) {
  RunContext ctx{default_params(name), f.out.empty() ? fs::path("results") / name : fs::path(f.out)};
  if (!f.config.empty()) ctx.params.apply(load_config(f.config));
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    ctx.params.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!f.seed.empty()) ctx.params.set("seed", f.seed);
  if (!f.threads.empty()) ctx.params.set("threads", f.threads);
  if (!f.max_width.empty()) ctx.params.set("max_width", f.max_width);
  if (!f.beta.empty()) ctx.params.set("beta", f.beta);
  if (!f.regime.empty()) ctx.params.set("regime", f.regime);
  if (!f.donor.empty()) ctx.params.set("donor", f.donor);
  validate_params(ctx.params);

  if (fs::exists(ctx.out) && !f.force)
    throw ConfigError("output directory " + ctx.out.string() + " exists; pass --force to overwrite");
  fs::create_directories(ctx.out);
  write_manifest(ctx);
  return fn(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-view analysis of gated ReLU networks"};
  app.require_subcommand(1);
  CommonFlags flags;

  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const RunContext&);
  };
  const std::vector<Entry> entries = {
      {"verify", "check the exact path and kernel identities on random small nets", cmd_verify},
      {"kernel", "compute one Gram matrix and its spectrum on a dataset", cmd_kernel},
      {"mc-ntk", "Monte Carlo estimate of the fixed-gate value kernel against width", cmd_mc_ntk},
      {"variance", "variance of an off-diagonal value-kernel entry against width", cmd_variance},
      {"memorise", "memorisation network kernels, spectra and training curves", cmd_memorise},
      {"train", "train a ReLU net or a DGN regime and record its trajectory", cmd_train},
  };
  std::vector<std::pair<CLI::App*, const Entry*>> subs;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    add_common(sub, flags);
    if (std::string(e.name) == "verify") sub->add_option("--max-width", flags.max_width, "largest hidden width");
    if (std::string(e.name) == "train") {
      sub->add_option("--regime", flags.regime, "relu, frnpf_ii, frnpf_di, dlnpf or flnpf");
      sub->add_option("--beta", flags.beta, "soft-gate sharpness (dlnpf)");
      sub->add_option("--donor", flags.donor, "DGN model file supplying frozen gates (flnpf)");
    }
    if (std::string(e.name) == "kernel") sub->add_option("--beta", flags.beta, "soft-gate sharpness");
    subs.emplace_back(sub, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& [sub, e] : subs)
      if (sub->parsed()) return run(e->name, flags, e->fn);
  } catch (const npl::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
