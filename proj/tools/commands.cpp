#include "commands.hpp"

#include "fraclab/entropy.hpp"
#include "fraclab/geometry_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace fraclab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fnv_text(const std::string& t) { return hex64(fnv1a(t.data(), t.size())); }

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/** @brief Writes the files of one command and the manifest that lists them. */
class OutputSet {
 public:
  OutputSet(const RunContext& ctx, std::string command)
      : ctx_(ctx), command_(std::move(command)), hash_(ctx.config.hash()), dir_(ctx.config.output_dir) {
    fs::create_directories(dir_);
  }

  std::string csv_preamble() const { return "# config_hash: " + hash_ + "\n# version: " + version_string() + "\n"; }

  void write_csv(const std::string& name, const std::string& body) { write(name, csv_preamble() + body); }

  void write_json(const std::string& name, json doc) {
    doc["config_hash"] = hash_;
    doc["version"] = version_string();
    write(name, doc.dump(2) + "\n");
  }

  int finish(int code) {
    json m;
    m["command"] = command_;
    m["config"] = json::parse(ctx_.config.to_json());
    m["config_hash"] = hash_;
    m["version"] = version_string();
    m["threads"] = ctx_.threads;
    m["exit_code"] = code;
    m["files"] = files_;
    std::ofstream(dir_ / "manifest.json") << m.dump(2) << "\n";
    return code;
  }

 private:
  void write(const std::string& name, const std::string& body) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << body;
    files_[name] = fnv_text(body);
  }

  const RunContext& ctx_;
  std::string command_;
  std::string hash_;
  fs::path dir_;
  json files_ = json::object();
};

void note(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << "\n";
}

Field smooth_bump_on(const RegionMask& region, double width) {
  const LatticeSpec& lat = region.lattice();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(lat.n());
  for (Index v : region.nodes()) c += lat.position(v);
  c /= static_cast<double>(region.size());
  Eigen::VectorXd vals(region.size());
  for (Index k = 0; k < region.size(); ++k)
    vals(k) = std::exp(-(lat.position(region.nodes()[k]) - c).squaredNorm() / (2 * width * width));
  return field_from_region(region, vals);
}

std::vector<Field> sample_potentials(const ProblemGeometry& g, const Field& qbar, int count, double amplitude,
                                     std::mt19937_64& rng) {
  PerturbationBasis B = dirichlet_basis(g.omega_prime, 6);
  std::normal_distribution<double> nd;
  std::vector<Field> qs{qbar};
  for (int i = 0; i < count; ++i) {
    Eigen::VectorXd c(B.count());
    for (Index j = 0; j < c.size(); ++j) c(j) = nd(rng);
    Field d = B.direction(c);
    d.values *= amplitude / d.values.cwiseAbs().maxCoeff();
    qs.emplace_back(g.lattice, qbar.values + d.values);
  }
  return qs;
}

}  // namespace

ProblemGeometry make_geometry(const RunConfig& c) {
  if (c.geometry == "reference") return ProblemGeometry::reference(c.s, c.pts_per_side, c.box_len);
  return ProblemGeometry::from_description(load_geometry(c.geometry), c.s);
}

Field make_qbar(const ProblemGeometry& g, const std::string& preset) {
  Field q(g.lattice);
  if (preset == "zero") return q;
  const std::string tag = "constant:";
  if (preset.rfind(tag, 0) == 0) {
    double v = 0;
    try {
      v = std::stod(preset.substr(tag.size()));
    } catch (const std::exception&) {
      throw UsageError("config: bad qbar preset '" + preset + "'");
    }
    for (Index x : g.omega.nodes()) q.values(x) = v;
    return q;
  }
  throw UsageError("config: unknown qbar preset '" + preset + "'");
}

ConductivitySpec make_conductivity_spec(const ProblemGeometry& g, const ConductivitySection& c) {
  if (c.preset == "identity")
    return make_conductivity(Field(g.lattice, Eigen::VectorXd::Ones(g.lattice.size())), g.omega, 0.0, "identity");
  if (c.preset == "bump") {
    if (static_cast<int>(c.centre.size()) != g.lattice.n()) throw UsageError("config: conductivity.centre has wrong length");
    BumpPreset b{Eigen::Map<const Eigen::VectorXd>(c.centre.data(), c.centre.size()), c.radius, c.amplitude};
    return bump_conductivity(g.lattice, g.omega, b);
  }
  throw UsageError("config: unknown conductivity preset '" + c.preset + "'");
}

SweepConfig make_sweep_config(const ProblemGeometry& g, const RunConfig& c) {
  SweepConfig sc;
  try {
    sc.variant = parse_variant(c.variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  sc.pair.delta = c.delta;
  sc.pair.p = c.p;
  sc.pair.r0 = c.sweep.r0;
  sc.eps = halving_grid(c.sweep.eps0, c.sweep.count);
  sc.basis_size = c.sweep.basis_size;
  sc.seed = c.seed;
  if (c.schrodinger_form == "multiplier")
    sc.schrodinger_form = FormKind::Multiplier;
  else if (c.schrodinger_form == "kernel")
    sc.schrodinger_form = FormKind::Kernel;
  else
    throw UsageError("config: schrodinger_form must be multiplier or kernel");
  if (sc.variant == Variant::Conductivity) sc.conductivity = make_conductivity_spec(g, c.conductivity);
  return sc;
}

double discretization_metric(const ProblemGeometry& g, const Field& qbar) {
  Field f = smooth_bump_on(g.w, 0.15);
  Field um = solve_exterior(g, fractional_form(g), qbar, f);
  FormMatrix Fk = kernel_form(g, make_kernel_op(g.lattice, g.s), Eigen::VectorXd::Ones(g.lattice.size()));
  Field uk = solve_exterior(g, Fk, qbar, f);
  return (uk.on(g.omega) - um.on(g.omega)).norm() / um.on(g.omega).norm();
}

std::string read_config_hash(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("verify: cannot open input " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const std::string tag = "# config_hash: ";
  auto pos = text.find(tag);
  if (pos != std::string::npos) return text.substr(pos + tag.size(), text.find('\n', pos) - pos - tag.size());
  try {
    json doc = json::parse(text);
    if (doc.contains("config_hash")) return doc["config_hash"].get<std::string>();
  } catch (const json::exception&) {
  }
  throw UsageError("verify: input " + path + " carries no config hash");
}

int cmd_spectrum(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  const SpectrumSection& sp = c.spectrum;
  if (sp.count < 1) throw UsageError("spectrum: count must be >= 1");
  OutputSet out(ctx, "spectrum");
  CylinderEigenSystem sys = build_eigensystem(sp.dims, c.s, sp.R, sp.count);
  out.write_csv("eigensystem.csv", sys.to_csv());
  json doc;
  doc["count"] = sys.count();
  doc["dims"] = sp.dims;
  doc["s"] = c.s;
  doc["R"] = sp.R;
  const double lo = std::min(sp.k_lo, std::max(1.0, std::floor(0.1 * sys.count())));
  const double hi = std::min(sp.k_hi, double(sys.count()));
  doc["fit_range"] = {lo, hi};
  try {
    doc["weyl_slope"] = weyl_slope(sys, lo, hi);
    doc["weyl_target"] = 2.0 / (sp.dims.size() + 1);
  } catch (const std::exception& e) {
    doc["weyl_slope"] = nullptr;
    doc["weyl_error"] = e.what();
  }
  const double N = sys.pairs.back().lambda;
  WeylBand band = weyl_band(sys, N);
  doc["weyl_band"] = {{"N", N}, {"count", band.count}, {"lower", band.lower}, {"upper", band.upper},
                      {"a", band.a}, {"b", band.b}};
  try {
    EmbeddingSpectrum emb = embedding_singular_values(sys, sys.count(), lo, hi);
    doc["embedding_fit"] = json::parse(emb.fit.to_json());
    doc["embedding_exponent"] = -emb.fit.alpha;
    doc["embedding_target"] = -1.0 / (sp.dims.size() + 1);
    doc["normalization"] = emb.normalization;
  } catch (const std::exception& e) {
    doc["embedding_exponent"] = nullptr;
    doc["embedding_error"] = e.what();
  }
  out.write_json("spectrum.json", doc);
  return out.finish(kPass);
}

int cmd_forward(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  ProblemGeometry g = make_geometry(c);
  Field qbar = make_qbar(g, c.qbar);
  SweepConfig sc = make_sweep_config(g, c);
  FormMatrix form = variant_form(g, sc);
  OutputSet out(ctx, "forward");

  auto gram = dtn_gram(g);
  ExteriorSolver base(g, form, qbar);
  DtnMatrix D = assemble_dtn(base, g, form, qbar, gram, c.qbar);
  out.write_json("dtn.json", json::parse(D.to_json()));

  std::mt19937_64 rng(c.seed);
  std::vector<Field> qs = sample_potentials(g, qbar, c.forward.samples, c.forward.amplitude, rng);
  std::normal_distribution<double> nd;
  std::vector<Eigen::VectorXd> fws;
  for (int i = 0; i < c.forward.samples; ++i) {
    Eigen::VectorXd f(g.n_w());
    for (Index k = 0; k < f.size(); ++k) f(k) = nd(rng);
    fws.push_back(f);
  }
  std::ostringstream gamma_csv;
  gamma_csv << "sample,q_hash,gamma_norm\n";
  for (std::size_t i = 0; i < qs.size(); ++i) {
    ExteriorSolver si(g, form, qs[i]);
    DtnMatrix G = gamma_diff_identity(g, si, qs[i], base, qbar, gram);
    gamma_csv << i << ',' << hex64(hash_field(qs[i])) << ',' << g17(G.norm()) << '\n';
  }
  out.write_csv("gamma.csv", gamma_csv.str());

  DominationReport dom = domination_check(g, form, qbar, qs, fws);
  const double metric = discretization_metric(g, qbar);
  json doc;
  doc["form"] = form.descriptor;
  doc["geometry_hash"] = g.hash;
  doc["c_max"] = std::isfinite(dom.c_max) ? json(dom.c_max) : json(nullptr);
  doc["violations"] = dom.violations;
  doc["ratios"] = json::array();
  for (double r : dom.ratios) doc["ratios"].push_back(std::isfinite(r) ? json(r) : json(nullptr));
  doc["discretization_metric"] = metric;
  doc["discretization_metric_definition"] =
      "relative L2(Omega) difference of kernel-form and multiplier-form solutions for a Gaussian datum on W";
  out.write_json("domination.json", doc);
  const bool ok = dom.violations == 0 && std::isfinite(dom.c_max);
  note(ctx, "forward: c_max " + g17(dom.c_max) + ", discretization metric " + g17(metric));
  return out.finish(ok ? kPass : kCheckFailure);
}

int cmd_instability(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  ProblemGeometry g = make_geometry(c);
  Field qbar = make_qbar(g, c.qbar);
  SweepConfig sc = make_sweep_config(g, c);
  OutputSet out(ctx, "instability");
  SweepResult res = run_sweep(g, qbar, sc);
  out.write_csv("sweep.csv", res.to_csv());
  out.write_json("sweep.json", json::parse(res.to_json()));
  if (!res.completed) {
    note(ctx, "instability: sweep aborted: " + res.error);
    out.finish(kInternal);
    return kInternal;
  }
  note(ctx, "instability: fitted slope " + g17(res.fit_slope) + " (target exponent " + g17(res.target) +
                "), stretched-exp preferred: " + (res.superpolynomial ? "yes" : "no"));
  return out.finish(res.monotone && res.superpolynomial ? kPass : kCheckFailure);
}

std::vector<CheckRow> verify_checks(const RunConfig& c) {
  const double sc = c.tolerances.scale;
  std::vector<CheckRow> rows;
  auto add = [&](std::string name, double value, double tol, std::string detail = "") {
    rows.push_back({std::move(name), value, tol, value <= tol, std::move(detail)});
  };

  {
    LatticeSpec lat(2, 4.0, 64);
    Field u = Field::sample(lat, [](const Eigen::VectorXd& p) { return std::exp(-4.0 * p.squaredNorm()); });
    Field a = frac_laplacian_kernel(u, make_kernel_op(lat, c.s));
    Field b = frac_laplacian_fourier(u, homogeneous_multiplier(lat, c.s));
    add("kernel_vs_multiplier", (a.values - b.values).norm() / b.values.norm(), c.tolerances.kernel_multiplier * sc,
        "Gaussian bump, 64^2 lattice");
  }
  {
    LatticeSpec lat(2, 4.0, 64);
    Field u = Field::sample(lat, [](const Eigen::VectorXd& p) {
      const double w = 2 * M_PI / 4.0;
      return std::cos(w * p(0)) + 0.5 * std::sin(2 * w * p(1)) + 0.25 * std::cos(3 * w * (p(0) + p(1)));
    });
    MultiplierOp op = homogeneous_multiplier(lat, c.s);
    op.symbol *= c.faults.heat_symbol_scale;
    Field w = heat_transform(frac_laplacian_fourier(u, op), make_heat_transform(lat, c.s));
    add("heat_roundtrip", (w.values - u.values).norm() / u.values.norm(), c.tolerances.heat_roundtrip * sc,
        "band-limited field, symbol scale " + g17(c.faults.heat_symbol_scale));
  }
  ProblemGeometry g = make_geometry(c);
  {
    Field u = Field::sample(g.lattice, [](const Eigen::VectorXd& p) { return std::exp(-2.0 * p.squaredNorm()); });
    Field one(g.lattice, Eigen::VectorXd::Ones(g.lattice.size()));
    ConductivityForm F = make_conductivity_form(one, Field(g.lattice), g.omega, g.s);
    const double b = conductivity_bilinear(u, u, F);
    const double ref = frac_laplacian_kernel(u, make_kernel_op(g.lattice, g.s)).values.dot(u.values) *
                       g.lattice.cell_volume();
    add("conductivity_gamma_one", std::abs(b - ref) / std::abs(ref), c.tolerances.reduction_exact * sc);
  }
  {
    std::mt19937_64 rng(c.seed);
    std::vector<Field> qs = sample_potentials(g, Field(g.lattice, Eigen::VectorXd::Constant(g.lattice.size(), 1.0)),
                                              2, 0.5, rng);
    ConductivitySpec id = make_conductivity_spec(g, ConductivitySection{});
    ReductionReport r0 = verify_reduction_identity(g, id, qs[1], qs[2]);
    add("reduction_identity_gamma_one", r0.mismatch, c.tolerances.reduction_exact * sc);
    ConductivitySection bump;
    bump.preset = "bump";
    ReductionReport r1 = verify_reduction_identity(g, make_conductivity_spec(g, bump), qs[1], qs[2]);
    add("reduction_identity_bump", r1.mismatch, c.tolerances.reduction * sc);
    add("reduction_identity_bump_multiplier", r1.after_baseline, c.tolerances.reduction * sc,
        "multiplier route after subtracting the gamma = 1 baseline " + g17(r1.baseline));
  }
  {
    CylinderGrid grid = make_cylinder_grid(g.lattice, g.s, 4 * g.lattice.h(), 48, {}, 0, 200.0);
    Field f(g.lattice);
    for (Index x : g.w.nodes()) f.values(x) = std::sin(3 * g.lattice.position(x)(1)) + 1;
    Field q(g.lattice);
    for (Index x : g.omega.nodes()) q.values(x) = 1.0;
    ExtensionSolution sol = solve_extension_fd(grid, f, q, g.omega, calibrate_cs(g.s));
    double worst = 0;
    bool finite = true;
    for (double r1 : {0.15, 0.2}) {
      CaccioppoliReport rep = caccioppoli_verify(sol, Eigen::VectorXd::Zero(g.lattice.n() + 1), r1, 0.4, g.omega, 1.0);
      finite = finite && std::isfinite(rep.constant) && rep.constant > 0;
      worst = std::max(worst, rep.constant);
    }
    rows.push_back({"caccioppoli_finite", worst, std::numeric_limits<double>::infinity(), finite,
                    "largest empirical constant over r1 in {0.15, 0.2}, r2 = 0.4"});
  }
  {
    double worst = 0;
    for (double mu : {1.0 / 3.0, 0.5, 1.0}) {
      const int N = std::min(20000, static_cast<int>(std::pow(700.0, 1.0 / mu)));
      std::vector<double> s(N);
      for (int k = 1; k <= N; ++k) s[k - 1] = std::exp(-std::pow(double(k), mu));
      EntropyBand band = diag_entropy_numbers(DiagonalSeqOp(s), std::min(2000, N));
      DecayFit fit = fit_decay(band.estimate, DecayModel::StretchedExp);
      const double target = exponent_convert(mu);
      worst = std::max(worst, std::abs(fit.mu - target) / target);
    }
    add("entropy_exponent", worst, c.tolerances.entropy * sc, "mu in {1/3, 1/2, 1}");
  }
  return rows;
}

int cmd_verify(const RunContext& ctx) {
  const RunConfig& c = ctx.config;
  if (!c.inputs.empty()) {
    const std::string first = read_config_hash(c.inputs.front());
    for (const auto& p : c.inputs)
      if (read_config_hash(p) != first) throw UsageError("verify: inputs carry mixed config hashes");
  }
  OutputSet out(ctx, "verify");
  std::vector<CheckRow> rows = verify_checks(c);
  std::ostringstream csv;
  csv << "check,value,tolerance,pass\n";
  json doc;
  doc["checks"] = json::array();
  bool all = true;
  for (const auto& r : rows) {
    csv << r.name << ',' << g17(r.value) << ',' << g17(r.tolerance) << ',' << (r.pass ? "pass" : "fail") << '\n';
    doc["checks"].push_back({{"name", r.name},
                             {"value", r.value},
                             {"tolerance", std::isfinite(r.tolerance) ? json(r.tolerance) : json(nullptr)},
                             {"pass", r.pass},
                             {"detail", r.detail}});
    all = all && r.pass;
    note(ctx, (r.pass ? "pass " : "FAIL ") + r.name + " " + g17(r.value));
  }
  doc["all_pass"] = all;
  out.write_csv("verify.csv", csv.str());
  out.write_json("verify.json", doc);
  return out.finish(all ? kPass : kCheckFailure);
}

int run_command(const std::string& name, const RunContext& ctx) {
  std::ostream& err = ctx.log ? *ctx.log : std::cerr;
  try {
    if (name == "spectrum") return cmd_spectrum(ctx);
    if (name == "forward") return cmd_forward(ctx);
    if (name == "instability") return cmd_instability(ctx);
    if (name == "verify") return cmd_verify(ctx);
    err << "error: unknown command '" << name << "'\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace fraclab::cli
