#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace fraclab::cli;
  CLI::App app{"fraclab experiment runner"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  double tol_scale = 1.0;
  auto* o_config = app.add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "recorded in the manifest; runs are single-threaded")->check(CLI::PositiveNumber);
  auto* o_tol = app.add_option("--tol-scale", tol_scale, "multiplies every verification tolerance")
                    ->check(CLI::PositiveNumber);
  app.add_subcommand("spectrum", "cylinder eigensystem, Weyl slope, embedding singular values");
  app.add_subcommand("forward", "DtN maps, Gamma refinement metric, domination check");
  app.add_subcommand("instability", "epsilon sweep of constructed potential pairs");
  app.add_subcommand("verify", "operator cross-checks and config-hash consistency of earlier runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  RunContext ctx;
  ctx.threads = threads;
  ctx.log = &std::cerr;
  try {
    if (*o_config) ctx.config = load_config(config_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  }
  if (*o_out) ctx.config.output_dir = out_dir;
  if (*o_seed) ctx.config.seed = seed;
  if (*o_tol) ctx.config.tolerances.scale = tol_scale;
  return run_command(app.get_subcommands().front()->get_name(), ctx);
}
