#include "run_config.hpp"

#include "fraclab/lattice.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#ifndef FRACLAB_VERSION
#define FRACLAB_VERSION "unknown"
#endif

namespace fraclab::cli {

using nlohmann::json;

namespace {

json sweep_json(const SweepSection& s) {
  return {{"eps0", s.eps0}, {"count", s.count}, {"r0", s.r0}, {"basis_size", s.basis_size}};
}

json spectrum_json(const SpectrumSection& s) {
  return {{"dims", s.dims}, {"R", s.R}, {"count", s.count}, {"k_lo", s.k_lo}, {"k_hi", s.k_hi}};
}

json conductivity_json(const ConductivitySection& c) {
  return {{"preset", c.preset}, {"centre", c.centre}, {"radius", c.radius}, {"amplitude", c.amplitude}};
}

json tolerances_json(const Tolerances& t) {
  return {{"scale", t.scale},
          {"reduction", t.reduction},
          {"reduction_exact", t.reduction_exact},
          {"heat_roundtrip", t.heat_roundtrip},
          {"kernel_multiplier", t.kernel_multiplier},
          {"entropy", t.entropy}};
}

json config_json(const RunConfig& c) {
  return {{"geometry", c.geometry},
          {"pts_per_side", c.pts_per_side},
          {"box_len", c.box_len},
          {"s", c.s},
          {"delta", c.delta},
          {"p", c.p},
          {"qbar", c.qbar},
          {"variant", c.variant},
          {"schrodinger_form", c.schrodinger_form},
          {"sweep", sweep_json(c.sweep)},
          {"spectrum", spectrum_json(c.spectrum)},
          {"conductivity", conductivity_json(c.conductivity)},
          {"forward", {{"samples", c.forward.samples}, {"amplitude", c.forward.amplitude}}},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"tolerances", tolerances_json(c.tolerances)},
          {"faults", {{"heat_symbol_scale", c.faults.heat_symbol_scale}}},
          {"inputs", c.inputs}};
}

// Rejects keys of `doc` absent from `known`, recursing into objects present in both.
void check_keys(const json& doc, const json& known, const std::string& path) {
  if (!doc.is_object()) throw UsageError("config: " + (path.empty() ? std::string("document") : path) + " must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw UsageError("config: unknown key '" + where + "'");
    if (known.at(it.key()).is_object()) check_keys(it.value(), known.at(it.key()), where);
  }
}

template <typename T>
void read(const json& doc, const char* key, T& out, const std::string& path) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: wrong type for '" + path + key + "'");
  }
}

}  // namespace

std::string RunConfig::to_json() const { return config_json(*this).dump(2) + "\n"; }

std::string RunConfig::hash() const {
  json doc = config_json(*this);
  doc.erase("output_dir");
  std::string t = doc.dump();
  return hex64(fnv1a(t.data(), t.size()));
}

RunConfig parse_config(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("config: empty document");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  RunConfig c;
  check_keys(doc, config_json(c), "");
  read(doc, "geometry", c.geometry, "");
  read(doc, "pts_per_side", c.pts_per_side, "");
  read(doc, "box_len", c.box_len, "");
  read(doc, "s", c.s, "");
  read(doc, "delta", c.delta, "");
  read(doc, "p", c.p, "");
  read(doc, "qbar", c.qbar, "");
  read(doc, "variant", c.variant, "");
  read(doc, "schrodinger_form", c.schrodinger_form, "");
  read(doc, "seed", c.seed, "");
  read(doc, "output_dir", c.output_dir, "");
  read(doc, "inputs", c.inputs, "");
  if (doc.contains("sweep")) {
    const json& d = doc["sweep"];
    read(d, "eps0", c.sweep.eps0, "sweep.");
    read(d, "count", c.sweep.count, "sweep.");
    read(d, "r0", c.sweep.r0, "sweep.");
    read(d, "basis_size", c.sweep.basis_size, "sweep.");
  }
  if (doc.contains("spectrum")) {
    const json& d = doc["spectrum"];
    read(d, "dims", c.spectrum.dims, "spectrum.");
    read(d, "R", c.spectrum.R, "spectrum.");
    read(d, "count", c.spectrum.count, "spectrum.");
    read(d, "k_lo", c.spectrum.k_lo, "spectrum.");
    read(d, "k_hi", c.spectrum.k_hi, "spectrum.");
  }
  if (doc.contains("conductivity")) {
    const json& d = doc["conductivity"];
    read(d, "preset", c.conductivity.preset, "conductivity.");
    read(d, "centre", c.conductivity.centre, "conductivity.");
    read(d, "radius", c.conductivity.radius, "conductivity.");
    read(d, "amplitude", c.conductivity.amplitude, "conductivity.");
  }
  if (doc.contains("forward")) {
    read(doc["forward"], "samples", c.forward.samples, "forward.");
    read(doc["forward"], "amplitude", c.forward.amplitude, "forward.");
  }
  if (doc.contains("tolerances")) {
    const json& d = doc["tolerances"];
    read(d, "scale", c.tolerances.scale, "tolerances.");
    read(d, "reduction", c.tolerances.reduction, "tolerances.");
    read(d, "reduction_exact", c.tolerances.reduction_exact, "tolerances.");
    read(d, "heat_roundtrip", c.tolerances.heat_roundtrip, "tolerances.");
    read(d, "kernel_multiplier", c.tolerances.kernel_multiplier, "tolerances.");
    read(d, "entropy", c.tolerances.entropy, "tolerances.");
  }
  if (doc.contains("faults")) read(doc["faults"], "heat_symbol_scale", c.faults.heat_symbol_scale, "faults.");

  if (!(c.s > 0 && c.s < 1)) throw UsageError("config: s must lie in (0, 1)");
  if (!(c.delta > 0)) throw UsageError("config: delta must be positive");
  if (c.p < 0) throw UsageError("config: p must be >= 0");
  if (c.sweep.count < 1) throw UsageError("config: sweep.count must be >= 1");
  if (!(c.sweep.eps0 > 0) || !(c.sweep.r0 > 0)) throw UsageError("config: sweep.eps0 and sweep.r0 must be positive");
  if (!(c.tolerances.scale > 0)) throw UsageError("config: tolerances.scale must be positive");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string version_string() { return FRACLAB_VERSION; }

}  // namespace fraclab::cli
