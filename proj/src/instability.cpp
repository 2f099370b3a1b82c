#include "fraclab/instability.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fraclab {

Field PerturbationBasis::direction(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() > modes.cols()) throw std::invalid_argument("direction: too many coefficients");
  Eigen::VectorXd v = modes.leftCols(coeffs.size()) * coeffs;
  return field_from_region(support, v);
}

PerturbationBasis dirichlet_basis(const RegionMask& region, int count) {
  const LatticeSpec& lat = region.lattice();
  const Index m = region.size();
  const double h2 = lat.h() * lat.h();
  Eigen::MatrixXd Lap = Eigen::MatrixXd::Zero(m, m);
  std::vector<int> idx(lat.n());
  for (Index k = 0; k < m; ++k) {
    Lap(k, k) = 2.0 * lat.n() / h2;
    lat.multi_index(region.nodes()[k], idx.data());
    for (int a = 0; a < lat.n(); ++a)
      for (int step : {-1, 1}) {
        std::vector<int> nb = idx;
        nb[a] += step;
        Index j = region.position_of(lat.linear(nb));
        if (j >= 0) Lap(k, j) = -1.0 / h2;
      }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lap);
  const int keep = count > 0 ? std::min<int>(count, static_cast<int>(m)) : static_cast<int>(m);
  PerturbationBasis B{region, es.eigenvectors().leftCols(keep) / std::sqrt(lat.cell_volume()),
                      es.eigenvalues().head(keep)};
  for (int j = 0; j < keep; ++j) {
    auto col = B.modes.col(j);
    Index lead = 0;
    const double big = col.cwiseAbs().maxCoeff();
    while (std::abs(col(lead)) < 1e-8 * big) ++lead;
    if (col(lead) < 0) col *= -1.0;
  }
  return B;
}

Eigen::MatrixXd BornOperator::apply(const Eigen::VectorXd& coeffs) const {
  Eigen::VectorXd d = basis.modes.leftCols(coeffs.size()) * coeffs;
  Eigen::MatrixXd M = response.transpose() * (geometry.lattice.cell_volume() * d).asDiagonal() * response;
  return 0.5 * (M + M.transpose());
}

Eigen::MatrixXd BornOperator::apply(const Field& d) const {
  Eigen::VectorXd v = d.on(basis.support);
  Eigen::MatrixXd M = response.transpose() * (geometry.lattice.cell_volume() * v).asDiagonal() * response;
  return 0.5 * (M + M.transpose());
}

double BornOperator::norm(const Eigen::VectorXd& coeffs) const { return op_norm(apply(coeffs), *gram); }

BornOperator build_born(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar, int basis_size,
                        std::shared_ptr<const SobolevGram> gram) {
  AqCertificate aq = check_aq(g, form, qbar, 0.0);
  if (!aq.verdict) throw std::runtime_error("build_born: (Aq) fails at qbar, margin " + std::to_string(aq.margin));
  BornOperator B;
  B.geometry = g;
  B.qbar = qbar;
  B.form = form;
  B.basis = dirichlet_basis(g.omega_prime, basis_size);
  B.solver = std::make_shared<const ExteriorSolver>(g, form, qbar);
  B.gram = gram ? gram : dtn_gram(g);
  const Index mp = g.omega_prime.size();
  B.response.resize(mp, g.n_w());
  for (Index r = 0; r < mp; ++r)
    B.response.row(r) = B.solver->response().row(g.omega.position_of(g.omega_prime.nodes()[r]));
  Eigen::MatrixXd wr = B.gram->chol.matrixL().solve(B.response.transpose());
  B.response_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(wr).singularValues()(0);
  const Index nw = g.n_w();
  B.matrix.resize(nw * nw, B.basis.count());
  for (int j = 0; j < B.basis.count(); ++j) {
    Eigen::MatrixXd W = whiten(B.apply(Eigen::VectorXd::Unit(B.basis.count(), j)), *B.gram);
    B.matrix.col(j) = Eigen::Map<const Eigen::VectorXd>(W.data(), W.size());
  }
  return B;
}

BornFdCheck born_fd_check(const BornOperator& born, int mode, const std::vector<double>& ts) {
  if (mode < 0 || mode >= born.basis.count()) throw std::invalid_argument("born_fd_check: mode out of range");
  const ProblemGeometry& g = born.geometry;
  Eigen::VectorXd e = Eigen::VectorXd::Unit(born.basis.count(), mode);
  Field d = born.basis.direction(e);
  DtnMatrix base = assemble_dtn(*born.solver, g, born.form, born.qbar, born.gram);
  Eigen::MatrixXd lin = born.apply(e);
  BornFdCheck out;
  for (double t : ts) {
    Field q(born.qbar.lattice, born.qbar.values + t * d.values);
    DtnMatrix moved = assemble_dtn(g, born.form, q, born.gram);
    // Λ_{q̄+td} - Λ_{q̄} = t Born(d) + O(t^2)
    Eigen::MatrixXd err = gamma_diff(moved, base).entries - t * lin;
    out.t.push_back(t);
    out.error.push_back(op_norm(err, *born.gram));
  }
  for (std::size_t i = 1; i < out.t.size(); ++i) {
    out.ratio.push_back(out.error[i - 1] / out.error[i]);
  }
  return out;
}

namespace {

double resolve_p(const ProblemGeometry& g, const PairOptions& opts) {
  return opts.p > 0 ? opts.p : g.lattice.n() / (2.0 * g.s);
}

FractionalSobolevParams sobolev_params(const ProblemGeometry& g, const PairOptions& opts) {
  return {opts.delta, resolve_p(g, opts), g.omega};
}

Field shifted(const Field& q, const Field& d) { return Field(q.lattice, q.values + d.values); }

struct GapEval {
  double gap = 0;
  DtnMatrix difference;
};

GapEval evaluate_gap(const BornOperator& born, const ExteriorSolver& s2, const Field& q2) {
  GapEval ev;
  ev.difference = gamma_diff_identity(born.geometry, *born.solver, born.qbar, s2, q2, born.gram);
  ev.gap = op_norm(ev.difference.entries, *born.gram);
  return ev;
}

}  // namespace

double pair_gap(const BornOperator& born, const Field& d) {
  Field q2 = shifted(born.qbar, d);
  ExteriorSolver s2(born.geometry, born.form, q2);
  return evaluate_gap(born, s2, q2).gap;
}

InstabilityPair construct_pair(const BornOperator& born, double eps, const PairOptions& opts) {
  if (!(eps > 0)) throw std::invalid_argument("construct_pair: eps must be positive");
  if (!(opts.r0 > 0)) throw std::invalid_argument("construct_pair: r0 must be positive");
  const ProblemGeometry& g = born.geometry;
  const FractionalSobolevParams prm = sobolev_params(g, opts);
  const int K = born.basis.count();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(born.matrix);
  Eigen::MatrixXd R = qr.matrixQR().topRows(K).triangularView<Eigen::Upper>();

  bool budget_met = false;
  std::string last_failure;
  for (int k = K; k >= 1; --k) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R.topLeftCorner(k, k), Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    for (int r = 0; r <= opts.retries && r < k; ++r) {
      Eigen::VectorXd coeffs = svd.matrixV().col(k - 1 - r);
      const Index lead = [&] {
        Index i = 0;
        coeffs.cwiseAbs().maxCoeff(&i);
        return i;
      }();
      if (coeffs(lead) < 0) coeffs = -coeffs;
      Field d = born.basis.direction(coeffs);
      const double scale = eps / lp_norm(d, prm.p, g.omega);
      coeffs *= scale;
      d.values *= scale;
      const double budget = gagliardo_norm(d, prm);
      if (budget > opts.r0) break;  // later singular vectors of this prefix are no smoother in general
      budget_met = true;
      Field q2 = shifted(born.qbar, d);
      AqCertificate aq = check_aq(g, born.form, q2, 0.0);
      if (!aq.verdict) {
        last_failure = "(Aq) violated at q2, margin " + std::to_string(aq.margin);
        continue;
      }
      std::unique_ptr<ExteriorSolver> s2;
      try {
        s2 = std::make_unique<ExteriorSolver>(g, born.form, q2);
      } catch (const std::runtime_error& e) {
        last_failure = e.what();
        continue;
      }
      GapEval ev = evaluate_gap(born, *s2, q2);
      InstabilityPair P;
      P.q1 = born.qbar;
      P.q2 = q2;
      P.eps = lp_norm(Field(g.lattice, P.q1.values - P.q2.values), prm.p, g.omega);
      P.budget1 = 0;
      P.budget2 = budget;
      P.gap = ev.gap;
      P.gap_linear = born.norm(coeffs);
      const double dmax = g.lattice.cell_volume() * d.values.cwiseAbs().maxCoeff();
      P.remainder_bound = born.response_norm * born.response_norm * dmax * dmax / (g.lattice.cell_volume() * aq.margin);
      P.born_sigma = sv(k - 1 - r);
      P.prefix = k;
      P.singular_index = r;
      P.difference = std::move(ev.difference);
      P.metadata["q1_hash"] = hex64(hash_field(P.q1));
      P.metadata["q2_hash"] = hex64(hash_field(P.q2));
      P.metadata["form"] = born.form.descriptor;
      P.metadata["geometry_hash"] = g.hash;
      return P;
    }
    if (budget_met) break;
  }
  if (!budget_met) {
    std::ostringstream msg;
    msg << "construct_pair: budget infeasible, no basis prefix reaches W^{delta,p} norm <= " << opts.r0
        << " at eps = " << eps;
    throw std::runtime_error(msg.str());
  }
  throw std::runtime_error("construct_pair: " + last_failure);
}

std::vector<double> random_pair_gaps(const BornOperator& born, double eps, double p, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const ProblemGeometry& g = born.geometry;
  const double pp = p > 0 ? p : g.lattice.n() / (2.0 * g.s);
  std::vector<double> out;
  out.reserve(count);
  for (int t = 0; t < count; ++t) {
    Eigen::VectorXd c(born.basis.count());
    for (Index i = 0; i < c.size(); ++i) c(i) = nd(rng);
    Field d = born.basis.direction(c);
    d.values *= eps / lp_norm(d, pp, g.omega);
    out.push_back(pair_gap(born, d));
  }
  return out;
}

MembershipReport verify_membership(const InstabilityPair& pair, const BornOperator& born, const PairOptions& opts) {
  const ProblemGeometry& g = born.geometry;
  const FractionalSobolevParams prm = sobolev_params(g, opts);
  MembershipReport rep;
  Field diff(g.lattice, pair.q2.values - pair.q1.values);
  rep.eps = lp_norm(diff, prm.p, g.omega);
  rep.eps_positive = rep.eps > 0;
  rep.support_ok = true;
  for (Index v = 0; v < g.lattice.size(); ++v)
    if (diff.values(v) != 0 && !g.omega_prime.contains(v)) rep.support_ok = false;
  rep.budget1 = gagliardo_norm(Field(g.lattice, pair.q1.values - born.qbar.values), prm);
  rep.budget2 = gagliardo_norm(Field(g.lattice, pair.q2.values - born.qbar.values), prm);
  rep.budget_ok = rep.budget1 <= opts.r0 && rep.budget2 <= opts.r0;
  return rep;
}

double single_measurement(const InstabilityPair& pair, const Field& f) {
  const ProblemGeometry& g = pair.difference.geometry;
  if (f.lattice != g.lattice) throw std::invalid_argument("single_measurement: f on a different lattice");
  for (Index v = 0; v < g.lattice.size(); ++v)
    if (f.values(v) != 0 && !g.w.contains(v)) throw std::invalid_argument("single_measurement: f must be supported in W");
  Eigen::VectorXd fw = f.on(g.w);
  const SobolevGram& G = *pair.difference.gram;
  double val = dual_norm(pair.difference.entries * fw, G);
  double bound = pair.gap * gram_norm(fw, G) + 1e-10;
  if (val > bound) throw std::logic_error("single_measurement: exceeds the operator-norm bound");
  return val;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Schrodinger: return "schrodinger";
    case Variant::VariableA: return "variable-a";
    default: return "conductivity";
  }
}

Variant parse_variant(const std::string& name) {
  if (name == "schrodinger") return Variant::Schrodinger;
  if (name == "variable-a") return Variant::VariableA;
  if (name == "conductivity") return Variant::Conductivity;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

std::vector<double> halving_grid(double eps0, int count) {
  if (!(eps0 > 0) || count < 1) throw std::invalid_argument("halving_grid: need eps0 > 0 and count >= 1");
  std::vector<double> e(count);
  for (int i = 0; i < count; ++i) e[i] = std::ldexp(eps0, -i);
  return e;
}

FormMatrix variant_form(const ProblemGeometry& g, const SweepConfig& cfg) {
  const int n = g.lattice.n();
  switch (cfg.variant) {
    case Variant::Schrodinger:
      if (cfg.schrodinger_form == FormKind::Kernel) {
        FormMatrix F = kernel_form(g, make_kernel_op(g.lattice, g.s), Eigen::VectorXd::Ones(g.lattice.size()));
        F.descriptor = "kernel pair form, s=" + std::to_string(g.s);
        return F;
      }
      if (cfg.schrodinger_form != FormKind::Multiplier)
        throw std::invalid_argument("variant_form: schrodinger form must be multiplier or kernel");
      return fractional_form(g);
    case Variant::VariableA: {
      Eigen::MatrixXd a = cfg.metric;
      if (a.size() == 0) {
        a = Eigen::MatrixXd::Identity(n, n);
        a(0, 0) = 2.0;
      }
      const double h = g.lattice.h();
      CylinderGrid grid = make_cylinder_grid(g.lattice, g.s, 4.0 * h, 48, {a}, 0.0, 200.0);
      return extension_form(g, grid, calibrate_cs(g.s));
    }
    case Variant::Conductivity: {
      ConductivitySpec spec = cfg.conductivity
                                  ? *cfg.conductivity
                                  : make_conductivity(Field(g.lattice, Eigen::VectorXd::Ones(g.lattice.size())),
                                                      g.omega, 0.0, "identity");
      return conductivity_form_matrix(g, spec);
    }
  }
  throw std::logic_error("variant_form: unreachable");
}

double target_exponent(Variant v, int n, double delta) {
  const double k = v == Variant::VariableA ? 5.0 : 1.0;
  return 1.0 / (delta * (2.0 + k / n));
}

void fit_sweep(SweepResult& res) {
  res.monotone = res.rows.size() >= 2;
  for (std::size_t i = 1; i < res.rows.size(); ++i)
    if (!(res.rows[i].gap < res.rows[i - 1].gap)) res.monotone = false;
  std::vector<double> ks, gaps;
  for (const auto& r : res.rows) {
    ks.push_back(1.0 / r.eps);
    gaps.push_back(r.gap);
  }
  FitOptions fo;
  fo.drop_front = 0;
  fo.drop_back = 0;
  fo.min_points = 5;
  res.superpolynomial = false;
  res.fit_slope = std::numeric_limits<double>::quiet_NaN();
  if (static_cast<int>(ks.size()) < fo.min_points) return;
  res.stretched = fit_decay(ks, gaps, DecayModel::StretchedExp, fo);
  res.power = fit_decay(ks, gaps, DecayModel::Power, fo);
  res.superpolynomial = res.power.residual >= 2.0 * res.stretched.residual;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!(gaps[i] > 0 && gaps[i] < 1)) return;
    double x = std::log(ks[i]), y = std::log(-std::log(gaps[i]));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++m;
  }
  res.fit_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

SweepResult run_sweep(const ProblemGeometry& g, const Field& qbar, const SweepConfig& cfg) {
  SweepResult res;
  res.variant = cfg.variant;
  res.n = g.lattice.n();
  res.s = g.s;
  res.delta = cfg.pair.delta;
  res.p = resolve_p(g, cfg.pair);
  res.seed = cfg.seed;
  res.geometry_hash = g.hash;
  res.target = target_exponent(cfg.variant, res.n, cfg.pair.delta);
  for (std::size_t i = 1; i < cfg.eps.size(); ++i)
    if (!(cfg.eps[i] < cfg.eps[i - 1])) throw std::invalid_argument("run_sweep: eps grid must be strictly decreasing");
  if (cfg.eps.empty()) throw std::invalid_argument("run_sweep: empty eps grid");
  try {
    FormMatrix form = variant_form(g, cfg);
    BornOperator born = build_born(g, form, qbar, cfg.basis_size);
    for (double eps : cfg.eps) {
      InstabilityPair P = construct_pair(born, eps, cfg.pair);
      MembershipReport m = verify_membership(P, born, cfg.pair);
      if (!m.ok()) throw std::runtime_error("run_sweep: emitted pair fails the membership re-check");
      SweepRow row;
      row.eps = P.eps;
      row.gap = P.gap;
      row.gap_linear = P.gap_linear;
      row.remainder_bound = P.remainder_bound;
      row.budget = m.budget2;
      row.prefix = P.prefix;
      row.q1_hash = P.metadata["q1_hash"];
      row.q2_hash = P.metadata["q2_hash"];
      res.rows.push_back(row);
    }
    res.completed = true;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  fit_sweep(res);
  return res;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string SweepResult::to_csv() const {
  std::ostringstream o;
  o << "variant,n,s,delta,p,eps,gap,gap_linear,fit_slope,target_exponent,seed,geometry_hash\n";
  for (const auto& r : rows)
    o << to_string(variant) << ',' << n << ',' << g17(s) << ',' << g17(delta) << ',' << g17(p) << ',' << g17(r.eps)
      << ',' << g17(r.gap) << ',' << g17(r.gap_linear) << ',' << g17(fit_slope) << ',' << g17(target) << ','
      << seed << ',' << geometry_hash << '\n';
  return o.str();
}

std::string SweepResult::to_json() const {
  nlohmann::json j;
  j["variant"] = to_string(variant);
  j["n"] = n;
  j["s"] = s;
  j["delta"] = delta;
  j["p"] = p;
  j["seed"] = seed;
  j["geometry_hash"] = geometry_hash;
  j["completed"] = completed;
  if (!error.empty()) j["error"] = error;
  j["monotone"] = monotone;
  j["superpolynomial"] = superpolynomial;
  j["fit_slope"] = std::isfinite(fit_slope) ? nlohmann::json(fit_slope) : nlohmann::json(nullptr);
  j["target_exponent"] = target;
  if (stretched.points > 0) {
    j["stretched_fit"] = nlohmann::json::parse(stretched.to_json());
    j["power_fit"] = nlohmann::json::parse(power.to_json());
  }
  nlohmann::json rws = nlohmann::json::array();
  for (const auto& r : rows)
    rws.push_back({{"eps", r.eps}, {"gap", r.gap}, {"gap_linear", r.gap_linear},
                   {"remainder_bound", r.remainder_bound}, {"budget", r.budget}, {"prefix", r.prefix},
                   {"q1_hash", r.q1_hash}, {"q2_hash", r.q2_hash}});
  j["rows"] = rws;
  return j.dump(2);
}

}  // namespace fraclab
