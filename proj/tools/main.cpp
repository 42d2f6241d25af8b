// Command line front end: one subcommand per experiment mode. The config
// file carries every semantic parameter; --seed and --out override it.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "qpcsim/harness.hpp"

namespace {

struct ModeArgs {
  CLI::App* sub = nullptr;
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string out;
  CLI::Option* out_opt = nullptr;
  bool quiet = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-state detector statistics: simulation and verification"};
  app.require_subcommand(1);

  constexpr int kModes = 5;
  const char* names[kModes] = {"simulate", "verify-oracle", "verify-relation",
                               "noise-curve", "sweep"};
  const char* blurbs[kModes] = {
      "trajectory ensemble with transmission records and run-length stats",
      "closed-form count statistics against exhaustive enumeration",
      "measurement-noise vs decoherence-rate proportionality scan",
      "current variance vs averaging time, analytic and Monte Carlo",
      "cartesian parameter sweep of the closed-form statistics"};

  ModeArgs args[kModes];
  for (int i = 0; i < kModes; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], blurbs[i]);
    args[i].sub = sub;
    sub->add_option("--config", args[i].config, "JSON experiment description")
        ->required();
    args[i].seed_opt =
        sub->add_option("--seed", args[i].seed, "override the master seed");
    args[i].out_opt =
        sub->add_option("--out", args[i].out, "override the output directory");
    sub->add_flag("--quiet", args[i].quiet, "suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  int chosen = 0;
  for (int i = 0; i < kModes; ++i) {
    if (args[i].sub->parsed()) chosen = i;
  }

  try {
    qpcsim::ExperimentConfig cfg =
        qpcsim::load_config(args[chosen].config, names[chosen]);
    if (args[chosen].seed_opt->count() > 0) cfg.master_seed = args[chosen].seed;
    if (args[chosen].out_opt->count() > 0) cfg.out_dir = args[chosen].out;
    if (args[chosen].quiet) cfg.quiet = true;
    return qpcsim::run(cfg).exit_code;
  } catch (const qpcsim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
