#pragma once

#include "run_config.hpp"

#include "fraclab/instability.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace fraclab::cli {

enum ExitCode { kPass = 0, kCheckFailure = 1, kUsage = 2, kInternal = 3 };

struct RunContext {
  RunConfig config;
  int threads = 1;  ///< recorded in the manifest; computation is single-threaded
  std::ostream* log = nullptr;
};

/** @brief One row of the cmd_verify pass/fail matrix. */
struct CheckRow {
  std::string name;
  double value = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

ProblemGeometry make_geometry(const RunConfig& c);
Field make_qbar(const ProblemGeometry& g, const std::string& preset);
ConductivitySpec make_conductivity_spec(const ProblemGeometry& g, const ConductivitySection& c);
SweepConfig make_sweep_config(const ProblemGeometry& g, const RunConfig& c);

/// Relative L^2(Ω) gap between the kernel-form and multiplier-form solutions for a smooth datum on W.
double discretization_metric(const ProblemGeometry& g, const Field& qbar);

/// Reads the config_hash carried by an earlier output file (JSON field or "# config_hash:" CSV line).
std::string read_config_hash(const std::string& path);

std::vector<CheckRow> verify_checks(const RunConfig& c);

int cmd_spectrum(const RunContext& ctx);
int cmd_forward(const RunContext& ctx);
int cmd_instability(const RunContext& ctx);
int cmd_verify(const RunContext& ctx);

/// Dispatches by name and maps exceptions to exit codes with a diagnostic on ctx.log.
int run_command(const std::string& name, const RunContext& ctx);

}  // namespace fraclab::cli
