#include "fraclab/liouville.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fraclab {

ConductivitySpec make_conductivity(const Field& gamma, const RegionMask& omega, double gamma_lower,
                                   const std::string& descriptor) {
  if (gamma.lattice != omega.lattice()) throw std::invalid_argument("conductivity: lattice mismatch");
  ConductivitySpec spec;
  spec.gamma = gamma;
  spec.descriptor = descriptor;
  const double gmin = gamma.values.minCoeff();
  spec.gamma_lower = gamma_lower > 0 ? gamma_lower : gmin;
  if (!(gmin > 0) || gmin < spec.gamma_lower) throw std::invalid_argument("conductivity: gamma below its lower bound");
  for (Index x = 0; x < gamma.values.size(); ++x)
    if (!omega.contains(x) && gamma.values(x) != 1.0)
      throw std::invalid_argument("conductivity: gamma^{1/2} - 1 must be supported in Omega");
  spec.support_check = true;
  return spec;
}

ConductivitySpec bump_conductivity(const LatticeSpec& lat, const RegionMask& omega, const BumpPreset& preset) {
  if (preset.centre.size() != lat.n()) throw std::invalid_argument("bump preset: centre has the wrong dimension");
  if (!(preset.radius > 0) || !(preset.amplitude > -1)) throw std::invalid_argument("bump preset: invalid parameters");
  Field gamma(lat);
  for (Index x = 0; x < lat.size(); ++x) {
    double r = (lat.position(x) - preset.centre).norm() / preset.radius;
    double a = 1.0;
    if (r < 1.0) a += preset.amplitude * std::exp(1.0 - 1.0 / (1.0 - r * r));
    gamma.values(x) = a * a;
  }
  std::ostringstream d;
  d << "bump(centre=" << preset.centre.transpose() << ", radius=" << preset.radius << ", amplitude=" << preset.amplitude
    << ")";
  return make_conductivity(gamma, omega, 0, d.str());
}

ReducedPotential reduce(const ConductivitySpec& spec, const Field& q, double s) {
  const LatticeSpec& lat = spec.gamma.lattice;
  if (q.lattice != lat) throw std::invalid_argument("reduce: lattice mismatch");
  Eigen::VectorXd a = spec.sqrt_gamma();
  Field am1(lat, a.array() - 1.0);
  ReducedPotential r;
  Field lf = frac_laplacian_fourier(am1, homogeneous_multiplier(lat, s));
  Field lk = frac_laplacian_kernel(am1, make_kernel_op(lat, s));
  r.q_gamma = Field(lat, -(lf.values.array() / a.array()).matrix());
  r.q_gamma_kernel = Field(lat, -(lk.values.array() / a.array()).matrix());
  Eigen::VectorXd qg = q.values.array() / spec.gamma.values.array();
  r.Q = Field(lat, r.q_gamma.values + qg);
  r.Q_kernel = Field(lat, r.q_gamma_kernel.values + qg);
  r.gamma_hash = hex64(hash_field(spec.gamma));
  r.q_hash = hex64(hash_field(q));
  return r;
}

FormMatrix conductivity_form_matrix(const ProblemGeometry& g, const ConductivitySpec& spec) {
  if (spec.gamma.lattice != g.lattice) throw std::invalid_argument("conductivity form: lattice mismatch");
  FormMatrix F = kernel_form(g, make_kernel_op(g.lattice, g.s), spec.sqrt_gamma());
  F.descriptor = "conductivity pair form, s=" + std::to_string(g.s) + ", gamma=" + spec.descriptor;
  return F;
}

DtnMatrix conductivity_dtn(const ProblemGeometry& g, const ConductivitySpec& spec, const Field& q,
                           std::shared_ptr<const SobolevGram> gram) {
  FormMatrix F = conductivity_form_matrix(g, spec);
  return assemble_dtn(g, F, q, std::move(gram), "conductivity " + spec.descriptor);
}

namespace {

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double scale) { return (a - b).norm() / scale; }

}  // namespace

ReductionReport verify_reduction_identity(const ProblemGeometry& g, const ConductivitySpec& spec, const Field& q1,
                                          const Field& q2) {
  auto gram = dtn_gram(g);
  ReducedPotential r1 = reduce(spec, q1, g.s), r2 = reduce(spec, q2, g.s);

  FormMatrix Fc = conductivity_form_matrix(g, spec);
  ExteriorSolver c1(g, Fc, q1), c2(g, Fc, q2);
  Eigen::MatrixXd T3 = assemble_dtn(c1, g, Fc, q1, gram).entries - assemble_dtn(c2, g, Fc, q2, gram).entries;
  Eigen::MatrixXd T2 = gamma_diff_identity(g, c1, q1, c2, q2, gram).entries;

  FormMatrix Fk = kernel_form(g, make_kernel_op(g.lattice, g.s), Eigen::VectorXd::Ones(g.lattice.size()));
  ExteriorSolver k1(g, Fk, r1.Q_kernel), k2(g, Fk, r2.Q_kernel);
  Eigen::MatrixXd T1 =
      assemble_dtn(k1, g, Fk, r1.Q_kernel, gram).entries - assemble_dtn(k2, g, Fk, r2.Q_kernel, gram).entries;

  FormMatrix Fm = fractional_form(g);
  ExteriorSolver m1(g, Fm, r1.Q), m2(g, Fm, r2.Q);
  Eigen::MatrixXd T1m = assemble_dtn(m1, g, Fm, r1.Q, gram).entries - assemble_dtn(m2, g, Fm, r2.Q, gram).entries;

  ReductionReport rep;
  rep.schroedinger_norm = T1.norm();
  rep.interior_norm = T2.norm();
  rep.conductivity_norm = T3.norm();
  const double scale = std::max({T1.norm(), T2.norm(), T3.norm(), std::numeric_limits<double>::min()});
  rep.mismatch = std::max({rel(T1, T2, scale), rel(T2, T3, scale), rel(T1, T3, scale)});
  rep.mismatch_multiplier = std::max(rel(T1m, T3, scale), rel(T1m, T2, scale));

  // γ ≡ 1: kernel and multiplier maps for the same potentials
  ExteriorSolver b1(g, Fm, q1), b2(g, Fm, q2), bk1(g, Fk, q1), bk2(g, Fk, q2);
  Eigen::MatrixXd Dm = assemble_dtn(b1, g, Fm, q1, gram).entries - assemble_dtn(b2, g, Fm, q2, gram).entries;
  Eigen::MatrixXd Dk = assemble_dtn(bk1, g, Fk, q1, gram).entries - assemble_dtn(bk2, g, Fk, q2, gram).entries;
  rep.baseline = (Dm - Dk).norm() / std::max(Dk.norm(), std::numeric_limits<double>::min());
  rep.after_baseline = std::max(0.0, rep.mismatch_multiplier - rep.baseline);
  return rep;
}

CorrespondenceReport liouville_correspondence(const ConductivitySpec& spec, const RegionMask& omega, const Field& q,
                                              const Field& u, double s) {
  const LatticeSpec& lat = spec.gamma.lattice;
  KernelOp op = make_kernel_op(lat, s);
  Eigen::VectorXd a = spec.sqrt_gamma();
  ReducedPotential r = reduce(spec, q, s);
  Field cu = pair_operator(u, a, op);
  Field w(lat, a.cwiseProduct(u.values));
  Field kw = frac_laplacian_kernel(w, op);
  CorrespondenceReport rep;
  double rc = 0, rs = 0;
  for (Index x : omega.nodes()) {
    double c = cu.values(x) + q.values(x) * u.values(x);
    double sres = kw.values(x) + r.Q_kernel.values(x) * w.values(x);
    rc += c * c;
    rs += sres * sres;
  }
  rep.conductivity_residual = std::sqrt(rc * lat.cell_volume());
  rep.schroedinger_residual = std::sqrt(rs * lat.cell_volume());
  return rep;
}

double sobolev_multiplier_bound(const Field& phi, const FractionalSobolevParams& prm) {
  const LatticeSpec& lat = phi.lattice;
  const auto& nodes = prm.region.nodes();
  double sup = 0, worst = 0;
  const double expo = -(lat.n() + prm.delta * prm.p);
  for (Index y : nodes) {
    sup = std::max(sup, std::abs(phi.values(y)));
    double acc = 0;
    for (Index x : nodes) {
      if (x == y) continue;
      acc += std::pow(std::abs(phi.values(x) - phi.values(y)), prm.p) * std::pow(lat.torus_distance(x, y), expo);
    }
    worst = std::max(worst, acc * lat.cell_volume());
  }
  return sup + std::pow(worst, 1.0 / prm.p);
}

NormEquivalenceReport norm_equivalences(const ProblemGeometry& g, const ConductivitySpec& spec,
                                        const std::vector<std::pair<Field, Field>>& pairs,
                                        const FractionalSobolevParams& prm) {
  NormEquivalenceReport rep;
  const LatticeSpec& lat = g.lattice;
  Field inv_gamma(lat, spec.gamma.values.cwiseInverse());
  rep.multiplier_constant = std::max(sobolev_multiplier_bound(spec.gamma, prm), sobolev_multiplier_bound(inv_gamma, prm));
  auto gram = dtn_gram(g);
  FormMatrix Fc = conductivity_form_matrix(g, spec);
  FormMatrix Fk = kernel_form(g, make_kernel_op(lat, g.s), Eigen::VectorXd::Ones(lat.size()));
  for (const auto& [q1, q2] : pairs) {
    Field dq(lat, q1.values - q2.values);
    Field dQ(lat, dq.values.cwiseProduct(inv_gamma.values));
    rep.potential_ratios.push_back(gagliardo_norm(dq, prm) / gagliardo_norm(dQ, prm));
    ReducedPotential r1 = reduce(spec, q1, g.s), r2 = reduce(spec, q2, g.s);
    ExteriorSolver c1(g, Fc, q1), c2(g, Fc, q2), k1(g, Fk, r1.Q_kernel), k2(g, Fk, r2.Q_kernel);
    double num = op_norm(gamma_diff_identity(g, c1, q1, c2, q2, gram).entries, *gram);
    double den = op_norm(gamma_diff_identity(g, k1, r1.Q_kernel, k2, r2.Q_kernel, gram).entries, *gram);
    rep.dtn_ratios.push_back(num / den);
  }
  auto band = [](const std::vector<double>& v, double& lo, double& hi) {
    lo = v.empty() ? 0 : *std::min_element(v.begin(), v.end());
    hi = v.empty() ? 0 : *std::max_element(v.begin(), v.end());
  };
  band(rep.potential_ratios, rep.potential_lo, rep.potential_hi);
  band(rep.dtn_ratios, rep.dtn_lo, rep.dtn_hi);
  return rep;
}

}  // namespace fraclab
