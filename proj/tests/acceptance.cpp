// Acceptance battery: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "commands.hpp"

#include "fraclab/extension.hpp"
#include "fraclab/instability.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace fraclab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Field gaussian(const LatticeSpec& lat, double width) {
  return Field::sample(lat, [&](const Eigen::VectorXd& p) { return std::exp(-p.squaredNorm() / (2 * width * width)); });
}

Outcome weyl_law() {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 2000);
  const double slope = weyl_slope(sys, 100, 2000);
  return {slope >= 0.60 && slope <= 0.73, "slope " + fmt("%.4f", slope) + " in [0.60, 0.73]"};
}

Outcome embedding() {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 2000);
  auto emb = embedding_singular_values(sys, 2000, 100, 2000);
  const double e = -emb.fit.alpha, target = -1.0 / 3.0;
  return {std::abs(e - target) <= 0.1 / 3.0, "exponent " + fmt("%.4f", e) + ", target -1/3 +- 10%"};
}

Outcome bessel() {
  double worst_half = 0, worst_res = 0, worst_ratio = 0, worst_phase = 0;
  auto half = bessel_zeros(BesselOrder::from_s(0.5), 50);
  for (int m = 1; m <= 50; ++m) worst_half = std::max(worst_half, std::abs(half[m - 1] - (m - 0.5) * M_PI));
  for (double s : {0.25, 0.75}) {
    auto order = BesselOrder::from_s(s);
    auto z = bessel_zeros(order, 50);
    for (double j : z) worst_res = std::max(worst_res, std::abs(bessel_j(order, j)));
    worst_ratio = std::max(worst_ratio, std::abs(z[49] / (50 * M_PI) - 1));
    worst_phase = std::max(worst_phase, std::abs(z[49] / ((50 - s / 2 - 0.25) * M_PI) - 1));
  }
  const bool ok = worst_half <= 1e-9 && worst_res <= 1e-10 && worst_ratio <= 0.01;
  return {ok, "zero error " + fmt("%.2e", worst_half) + " (<= 1e-9), |J(j)| " + fmt("%.2e", worst_res) +
                  " (<= 1e-10), McMahon ratio dev " + fmt("%.4f", worst_ratio) + " (<= 0.01), vs McMahon phase " + fmt("%.1e", worst_phase)};
}

Outcome operator_checks() {
  LatticeSpec lat(2, 4.0, 64);
  Field u = gaussian(lat, 0.3);
  Field k = frac_laplacian_kernel(u, make_kernel_op(lat, 0.5));
  Field m = frac_laplacian_fourier(u, homogeneous_multiplier(lat, 0.5));
  const double km = (k.values - m.values).norm() / m.values.norm();

  LatticeSpec hl(2, 3.0, 32);
  Field band(hl);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int a = -5; a <= 5; ++a)
    for (int b = -5; b <= 5; ++b) {
      if (a == 0 && b == 0) continue;
      const double c = nd(rng), ph = nd(rng);
      for (Index v = 0; v < hl.size(); ++v) {
        auto p = hl.position(v);
        band.values(v) += c * std::cos(2 * M_PI * (a * p(0) + b * p(1)) / hl.box_len() + ph);
      }
    }
  Field back = heat_transform(frac_laplacian_fourier(band, homogeneous_multiplier(hl, 0.5)), make_heat_transform(hl, 0.5));
  const double heat = (back.values - band.values).norm() / band.values.norm();

  Field one(lat, Eigen::VectorXd::Ones(lat.size()));
  RegionMask omega = RegionMask::ball(lat, {0, 0}, 0.5);
  auto form = make_conductivity_form(one, Field(lat), omega, 0.5);
  const double B = conductivity_bilinear(u, u, form);
  const double ref = frac_laplacian_kernel(u, form.kernel).values.dot(u.values) * lat.cell_volume();
  const double cond = std::abs(B - ref) / std::abs(ref);

  const bool ok = km <= 0.02 && heat <= 1e-6 && cond <= 1e-8;
  return {ok, "kernel/multiplier " + fmt("%.2e", km) + " (<= 0.02), heat roundtrip " + fmt("%.2e", heat) +
                  " (<= 1e-6), conductivity form " + fmt("%.2e", cond) + " (<= 1e-8)"};
}

Outcome reduction_chain() {
  auto g = ProblemGeometry::reference(0.5, 48, 3.0);
  BumpPreset b{Eigen::Vector2d(0.05, -0.05), 0.4, 0.4};
  ConductivitySpec bump = bump_conductivity(g.lattice, g.omega, b);
  ConductivitySpec id = make_conductivity(Field(g.lattice, Eigen::VectorXd::Ones(g.lattice.size())), g.omega);
  PerturbationBasis basis = dirichlet_basis(g.omega_prime, 6);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  auto sample = [&] {
    Eigen::VectorXd c(basis.count());
    for (auto& v : c) v = nd(rng);
    Field d = basis.direction(c);
    Field q(g.lattice);
    for (Index x : g.omega.nodes()) q.values(x) = 1.0;
    q.values += 0.5 / d.values.cwiseAbs().maxCoeff() * d.values;
    return q;
  };
  double worst_after = 0, worst_exact = 0, worst_id = 0, worst_mm = 0, worst_base = 0;
  for (int t = 0; t < 20; ++t) {
    Field q1 = sample(), q2 = sample();
    ReductionReport r = verify_reduction_identity(g, bump, q1, q2);
    worst_after = std::max(worst_after, r.after_baseline);
    worst_exact = std::max(worst_exact, r.mismatch);
    worst_mm = std::max(worst_mm, r.mismatch_multiplier);
    worst_base = std::max(worst_base, r.baseline);
    if (t < 3) worst_id = std::max(worst_id, verify_reduction_identity(g, id, q1, q2).mismatch);
  }
  const bool ok = worst_exact <= 0.02 && worst_id <= 1e-8;
  return {ok, "three-term chain " + fmt("%.2e", worst_exact) + " (<= 0.02), gamma = 1 " + fmt("%.2e", worst_id) +
                  " (<= 1e-8); multiplier route " + fmt("%.3f", worst_mm) + ", baseline " + fmt("%.3f", worst_base) +
                  ", after baseline " + fmt("%.3f", worst_after)};
}

Outcome comparison_compression() {
  auto g = ProblemGeometry::reference(0.5, 48, 3.0);
  auto A = comparison_operator(g, fractional_form(g), Field(g.lattice));
  Eigen::VectorXd sv = A.singular_values();
  std::vector<double> vals;
  for (Index k = 0; k < sv.size() && sv(k) > 1e-13 * sv(0); ++k) vals.push_back(sv(k));
  FitOptions fixed;
  fixed.fixed_mu = 0.5;
  DecayFit st = fit_decay(vals, DecayModel::StretchedExp, fixed);
  DecayFit pw = fit_decay(vals, DecayModel::Power);
  DecayFit free_mu = fit_decay(vals, DecayModel::StretchedExp);
  const bool ok = st.c > 0 && st.residual < 0.3 && pw.residual >= 2 * st.residual;
  return {ok, "c " + fmt("%.3f", st.c) + " (> 0), residual " + fmt("%.4f", st.residual) + " (< 0.3), power residual " +
                  fmt("%.4f", pw.residual) + " (>= 2x), free mu " + fmt("%.2f", free_mu.mu) + " residual " +
                  fmt("%.4f", free_mu.residual) + ", " + std::to_string(vals.size()) + " values"};
}

Outcome compression_optimizer() {
  std::vector<long> ks;
  for (int e = 8; e <= 16; ++e) ks.push_back(1L << e);
  auto sw = compression_sweep(1.5, 8.0, 2, ks);
  const bool ok = sw.ratio_spread < 0.25 && std::abs(sw.fit.mu - 0.25) <= 0.15 * 0.25;
  return {ok, "N_opt/k^(1/4) spread " + fmt("%.3f", sw.ratio_spread) + " (< 0.25), fitted mu " + fmt("%.4f", sw.fit.mu) +
                  " (0.25 +- 15%)"};
}

SweepResult reference_sweep() {
  auto g = ProblemGeometry::reference(0.5, 48, 3.0);
  SweepConfig cfg;
  cfg.eps = halving_grid(0.1, 6);
  cfg.pair.delta = 0.5;
  cfg.pair.p = 0;
  cfg.pair.r0 = 1.0;
  return run_sweep(g, Field(g.lattice), cfg);
}

Outcome instability_sweep() {
  SweepResult r = reference_sweep();
  bool strict = r.completed && r.rows.size() == 6;
  for (std::size_t i = 1; strict && i < r.rows.size(); ++i) strict = r.rows[i].gap < r.rows[i - 1].gap;
  std::string gaps;
  for (const auto& row : r.rows) gaps += fmt(" %.2e", row.gap);
  return {strict && r.superpolynomial,
          std::string("strictly decreasing ") + (strict ? "yes" : "no") + ", stretched-exp preferred " +
              (r.superpolynomial ? "yes" : "no") + " (residuals " + fmt("%.4f", r.stretched.residual) + " vs power " +
              fmt("%.4f", r.power.residual) + "), fitted slope " + fmt("%.4f", r.fit_slope) + ", target " +
              fmt("%.4f", r.target) + ", gaps" + gaps};
}

Outcome caccioppoli() {
  auto battery = [](int M, bool& finite) {
    auto g = ProblemGeometry::reference(0.5, M, 3.0);
    auto grid = make_cylinder_grid(g.lattice, g.s, 4 * g.lattice.h(), 48, {}, 0, 200.0);
    const double cs = calibrate_cs(g.s);
    Field q(g.lattice);
    for (Index x : g.omega.nodes()) q.values(x) = 1.0;
    double worst = 0;
    for (int b = 0; b < 10; ++b) {
      Field f(g.lattice);
      for (Index x : g.w.nodes()) f.values(x) = std::sin((1 + b) * g.lattice.position(x)(1)) + 0.5 * (b % 3);
      auto sol = solve_extension_fd(grid, f, q, g.omega, cs);
      auto rep = caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.2, 0.4, g.omega, 1.0);
      finite = finite && std::isfinite(rep.constant) && rep.lhs >= 0 && rep.rhs > 0;
      worst = std::max(worst, rep.constant);
    }
    return worst;
  };
  bool finite = true;
  const double coarse = battery(24, finite), fine = battery(48, finite);
  const double dev = std::abs(fine - coarse) / fine;
  return {finite && dev <= 0.2, "max constant M=24 " + fmt("%.4f", coarse) + ", M=48 " + fmt("%.4f", fine) +
                                    ", change " + fmt("%.3f", dev) + " (<= 0.2), all finite " + (finite ? "yes" : "no")};
}

Outcome entropy() {
  double worst = 0;
  for (double mu : {1.0 / 3.0, 0.5, 1.0}) {
    const int N = std::min(20000, static_cast<int>(std::pow(700.0, 1.0 / mu)));
    std::vector<double> s(N);
    for (int k = 1; k <= N; ++k) s[k - 1] = std::exp(-std::pow(double(k), mu));
    EntropyBand band = diag_entropy_numbers(DiagonalSeqOp(s), std::min(2000, N));
    DecayFit fit = fit_decay(band.estimate, DecayModel::StretchedExp);
    worst = std::max(worst, std::abs(fit.mu - exponent_convert(mu)) / exponent_convert(mu));
  }
  return {worst <= 0.15, "worst relative exponent error " + fmt("%.4f", worst) + " (<= 0.15)"};
}

Outcome determinism() {
  using namespace fraclab::cli;
  const fs::path root = fs::temp_directory_path() / ("fraclab_acceptance_" + std::to_string(::getpid()));
  std::string csv[2];
  int codes[2];
  for (int i = 0; i < 2; ++i) {
    RunContext ctx;
    ctx.config.seed = 17;
    ctx.config.output_dir = (root / std::to_string(i)).string();
    codes[i] = run_command("instability", ctx);
    std::ifstream in(root / std::to_string(i) / "sweep.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    csv[i] = ss.str();
  }
  fs::remove_all(root);
  const bool ok = !csv[0].empty() && csv[0] == csv[1] && codes[0] == codes[1];
  return {ok, std::string("sweep.csv identical ") + (csv[0] == csv[1] ? "yes" : "no") + ", " +
                  std::to_string(csv[0].size()) + " bytes"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "weyl_law", 30, weyl_law},
      {2, "embedding_singular_values", 10, embedding},
      {3, "bessel_machinery", 5, bessel},
      {4, "operator_cross_checks", 60, operator_checks},
      {5, "reduction_identities", 300, reduction_chain},
      {6, "comparison_operator_compression", 120, comparison_compression},
      {7, "iterated_compression_optimizer", 10, compression_optimizer},
      {8, "instability_sweep", 1200, instability_sweep},
      {9, "caccioppoli_battery", 300, caccioppoli},
      {10, "entropy_calculus", 10, entropy},
      {11, "determinism", 1200, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = out.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %s: %s; %.1f s (< %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), secs,
                c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
