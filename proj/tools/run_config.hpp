#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fraclab::cli {

/// Bad command line or configuration document (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SweepSection {
  double eps0 = 0.1;
  int count = 6;
  double r0 = 1.0;
  int basis_size = 0;
};

struct SpectrumSection {
  std::vector<double> dims{1.0, 1.0};
  double R = 1.0;
  int count = 2000;
  double k_lo = 100;
  double k_hi = 2000;
};

struct ConductivitySection {
  std::string preset = "identity";  ///< identity | bump
  std::vector<double> centre{0.05, -0.05};
  double radius = 0.4;
  double amplitude = 0.4;
};

struct ForwardSection {
  int samples = 4;        ///< random potentials and data for the domination check
  double amplitude = 0.5;
};

struct Tolerances {
  double scale = 1.0;             ///< multiplies every tolerance below
  double reduction = 0.02;
  double reduction_exact = 1e-8;
  double heat_roundtrip = 1e-6;
  double kernel_multiplier = 0.02;
  double entropy = 0.15;
};

struct Faults {
  double heat_symbol_scale = 1.0;  ///< multiplies the (-Δ)^s symbol fed to the heat roundtrip
};

/** @brief Complete run description; serializes canonically with sorted keys. */
struct RunConfig {
  std::string geometry = "reference";  ///< path to a geometry document, or "reference"
  int pts_per_side = 48;               ///< reference geometry only
  double box_len = 3.0;                ///< reference geometry only
  double s = 0.5;
  double delta = 0.5;
  double p = 0;                        ///< 0 selects n / (2s)
  std::string qbar = "zero";           ///< zero | constant:<value>
  std::string variant = "schrodinger";
  std::string schrodinger_form = "multiplier";
  SweepSection sweep;
  SpectrumSection spectrum;
  ConductivitySection conductivity;
  ForwardSection forward;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  Tolerances tolerances;
  Faults faults;
  std::vector<std::string> inputs;     ///< earlier outputs whose config hashes cmd_verify cross-checks

  std::string to_json() const;
  /// FNV-1a of the canonical document without output_dir, so relocated runs share a hash.
  std::string hash() const;
};

/// Throws UsageError on malformed JSON, wrong types, unknown keys or an empty document.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// git-describe style string fixed at configure time.
std::string version_string();

}  // namespace fraclab::cli
