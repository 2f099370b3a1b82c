#include "fraclab/forward.hpp"

#include <json.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fraclab {

using json = nlohmann::json;

ProblemGeometry::ProblemGeometry(RegionMask om, RegionMask omp, RegionMask ww, double s_)
    : lattice(om.lattice()), omega(std::move(om)), omega_prime(std::move(omp)), w(std::move(ww)), s(s_) {
  if (!(s > 0 && s < 1)) throw std::invalid_argument("geometry: s must lie in (0, 1)");
  if (omega_prime.lattice() != lattice || w.lattice() != lattice)
    throw std::invalid_argument("geometry: regions live on different lattices");
  if (!omega_prime.subset_of(omega)) throw std::invalid_argument("geometry: Omega' must be contained in Omega");
  if (!omega.disjoint_from(w)) throw std::invalid_argument("geometry: W must not meet Omega");
  nodes = omega.nodes();
  nodes.insert(nodes.end(), w.nodes().begin(), w.nodes().end());
  std::uint64_t h = fnv1a(&s, sizeof s);
  int n = lattice.n(), M = lattice.M();
  double L = lattice.box_len();
  h = fnv1a(&n, sizeof n, h);
  h = fnv1a(&M, sizeof M, h);
  h = fnv1a(&L, sizeof L, h);
  for (const RegionMask* r : {&omega, &omega_prime, &w}) {
    Index sz = r->size();
    h = fnv1a(&sz, sizeof sz, h);
    h = fnv1a(r->nodes().data(), r->nodes().size() * sizeof(Index), h);
  }
  hash = hex64(h);
}

ProblemGeometry ProblemGeometry::from_description(const GeometryDescription& desc, double s) {
  return ProblemGeometry(desc.region("Omega"), desc.region("OmegaPrime"), desc.region("W"), s);
}

ProblemGeometry ProblemGeometry::reference(double s, int pts_per_side, double box_len) {
  return from_description(parse_geometry(reference_geometry_json(pts_per_side, box_len)), s);
}

Field ProblemGeometry::field_on_w(const Eigen::VectorXd& fw) const {
  if (fw.size() != n_w()) throw std::invalid_argument("field_on_w: size mismatch");
  Field f(lattice);
  for (Index k = 0; k < n_w(); ++k) f.values(w.nodes()[k]) = fw(k);
  return f;
}

std::string to_string(FormKind k) {
  switch (k) {
    case FormKind::Multiplier: return "multiplier";
    case FormKind::Kernel: return "kernel";
    case FormKind::Extension: return "extension";
  }
  return "unknown";
}

FormMatrix multiplier_form(const ProblemGeometry& g, const Eigen::VectorXd& symbol, const std::string& descriptor) {
  if (symbol.size() != g.lattice.size()) throw std::invalid_argument("multiplier_form: symbol size mismatch");
  Eigen::VectorXd ker = symbol_kernel(g.lattice, symbol);
  const Index m = static_cast<Index>(g.nodes.size());
  const double hn = g.lattice.cell_volume();
  FormMatrix F;
  F.kind = FormKind::Multiplier;
  F.descriptor = descriptor;
  F.E.resize(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) F.E(a, b) = hn * ker(g.lattice.offset_index(g.nodes[a], g.nodes[b]));
  F.E = 0.5 * (F.E + F.E.transpose()).eval();
  return F;
}

FormMatrix fractional_form(const ProblemGeometry& g) {
  std::ostringstream d;
  d << "multiplier |xi|^(2s), s=" << g.s;
  return multiplier_form(g, homogeneous_multiplier(g.lattice, g.s).symbol, d.str());
}

FormMatrix kernel_form(const ProblemGeometry& g, const KernelOp& op, const Eigen::VectorXd& a) {
  const LatticeSpec& lat = g.lattice;
  if (op.lattice != lat || a.size() != lat.size()) throw std::invalid_argument("kernel_form: lattice mismatch");
  const Index m = static_cast<Index>(g.nodes.size());
  const Index N = lat.size();
  const int n = lat.n();
  const double hn = lat.cell_volume(), h2 = lat.h() * lat.h();
  const double edge = op.near_diag / (2.0 * n) / h2;
  FormMatrix F;
  F.kind = FormKind::Kernel;
  std::ostringstream d;
  d << "kernel pair form, s=" << op.s << (a.isOnes(0) ? "" : ", weighted");
  F.descriptor = d.str();
  F.E = Eigen::MatrixXd::Zero(m, m);
  std::vector<Index> unit_offsets;
  {
    std::vector<int> e(n, 0);
    for (int ax = 0; ax < n; ++ax)
      for (int sg : {-1, 1}) {
        e[ax] = sg;
        unit_offsets.push_back(lat.linear(e));
        e[ax] = 0;
      }
  }
  for (Index r = 0; r < m; ++r) {
    Index x = g.nodes[r];
    double sum_w = 0;
    for (Index y = 0; y < N; ++y)
      if (y != x) sum_w += op.weights(lat.offset_index(x, y)) * a(y);
    double nb_sum = 0;
    for (Index off : unit_offsets) nb_sum += a(lat.offset_index(x, off));
    F.E(r, r) = hn * op.c_ns * a(x) * (hn * sum_w + edge * nb_sum);
    for (Index c = 0; c < m; ++c) {
      if (c == r) continue;
      Index y = g.nodes[c];
      Index off = lat.offset_index(x, y);
      double v = -hn * op.c_ns * a(x) * a(y) * hn * op.weights(off);
      if (std::find(unit_offsets.begin(), unit_offsets.end(), off) != unit_offsets.end())
        v -= hn * op.c_ns * edge * a(x) * a(y);
      F.E(r, c) = v;
    }
  }
  F.E = 0.5 * (F.E + F.E.transpose()).eval();
  return F;
}

FormMatrix extension_form(const ProblemGeometry& g, const CylinderGrid& grid, double c_s) {
  if (grid.lateral != g.lattice) throw std::invalid_argument("extension_form: lateral lattice mismatch");
  if (std::abs(grid.s - g.s) > 1e-14) throw std::invalid_argument("extension_form: order mismatch");
  FormMatrix F;
  F.kind = FormKind::Extension;
  std::ostringstream d;
  d << "extension Schur form, s=" << g.s << ", K=" << grid.K() << ", Z=" << grid.z.back()
    << (grid.metric.size() == 1 && grid.metric[0].isIdentity(0) ? "" : ", variable metric");
  F.descriptor = d.str();
  F.E = extension_form_matrix(grid, g.nodes, c_s);
  return F;
}

RestrictedOperator restricted_operator(const ProblemGeometry& g, const FormMatrix& form, const Field& q) {
  if (q.lattice != g.lattice) throw std::invalid_argument("restricted_operator: q on a different lattice");
  RestrictedOperator R;
  R.geometry = g;
  R.q = q;
  const Index m = g.n_omega();
  R.matrix = form.omega_block(g) / g.lattice.cell_volume();
  for (Index k = 0; k < m; ++k) R.matrix(k, k) += q.values(g.omega.nodes()[k]);
  return R;
}

ExteriorSolver::ExteriorSolver(const ProblemGeometry& g, const FormMatrix& form, const Field& q,
                               double pivot_threshold)
    : geom_(g) {
  if (q.lattice != g.lattice) throw std::invalid_argument("ExteriorSolver: q on a different lattice");
  const Index m = g.n_omega();
  const double hn = g.lattice.cell_volume();
  A_ = form.omega_block(g);
  for (Index k = 0; k < m; ++k) A_(k, k) += hn * q.values(g.omega.nodes()[k]);
  B_ = form.coupling_block(g);
  lu_.compute(A_);
  rcond_ = lu_.rcond();
  if (!(rcond_ > pivot_threshold)) {
    std::ostringstream msg;
    msg << "Dirichlet eigenvalue hit: reciprocal condition " << rcond_ << " below " << pivot_threshold;
    throw std::runtime_error(msg.str());
  }
  Eigen::MatrixXd rhs = -B_;
  response_ = lu_.solve(rhs);
  for (int it = 0; it < 2; ++it) response_ += lu_.solve(rhs - A_ * response_);
}

Eigen::VectorXd ExteriorSolver::solve_omega(const Eigen::VectorXd& fw) const {
  if (fw.size() != geom_.n_w()) throw std::invalid_argument("solve_omega: data size mismatch");
  Eigen::VectorXd rhs = -B_ * fw;
  Eigen::VectorXd u = lu_.solve(rhs);
  for (int it = 0; it < 2; ++it) u += lu_.solve(rhs - A_ * u);
  return u;
}

Field ExteriorSolver::solve(const Field& f) const {
  if (f.lattice != geom_.lattice) throw std::invalid_argument("solve: data on a different lattice");
  Eigen::VectorXd fw(geom_.n_w());
  for (Index k = 0; k < geom_.n_w(); ++k) fw(k) = f.values(geom_.w.nodes()[k]);
  for (Index v = 0; v < geom_.lattice.size(); ++v)
    if (!geom_.w.contains(v) && f.values(v) != 0) throw std::invalid_argument("solve: exterior data must be supported in W");
  Eigen::VectorXd uo = solve_omega(fw);
  Field u = geom_.field_on_w(fw);
  for (Index k = 0; k < geom_.n_omega(); ++k) u.values(geom_.omega.nodes()[k]) = uo(k);
  return u;
}

Field solve_exterior(const ProblemGeometry& g, const FormMatrix& form, const Field& q, const Field& f) {
  return ExteriorSolver(g, form, q).solve(f);
}

std::string hash_matrix(const Eigen::MatrixXd& m) {
  Index r = m.rows(), c = m.cols();
  std::uint64_t h = fnv1a(&r, sizeof r);
  h = fnv1a(&c, sizeof c, h);
  h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
  return hex64(h);
}

std::string DtnMatrix::gram_hash() const { return gram ? hash_matrix(gram->matrix) : "none"; }

std::string DtnMatrix::to_json() const {
  json doc;
  doc["geometry_hash"] = geometry.hash;
  doc["q_hash"] = q_hash;
  doc["q_descriptor"] = q_descriptor;
  doc["gram_hash"] = gram_hash();
  doc["form"] = form_descriptor;
  doc["s"] = geometry.s;
  doc["w_nodes"] = geometry.w.nodes();
  json rows = json::array();
  for (Index i = 0; i < entries.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < entries.cols(); ++j) row.push_back(entries(i, j));
    rows.push_back(row);
  }
  doc["entries"] = rows;
  return doc.dump();
}

std::shared_ptr<const SobolevGram> dtn_gram(const ProblemGeometry& g) {
  return std::make_shared<const SobolevGram>(build_gram(g.w, g.s));
}

DtnMatrix assemble_dtn(const ExteriorSolver& solver, const ProblemGeometry& g, const FormMatrix& form, const Field& q,
                       std::shared_ptr<const SobolevGram> gram, const std::string& q_descriptor) {
  DtnMatrix D;
  D.geometry = g;
  D.gram = gram ? gram : dtn_gram(g);
  D.q_descriptor = q_descriptor;
  D.q_hash = hex64(hash_field(q.restricted(g.omega)));
  D.form_descriptor = form.descriptor;
  D.entries = form.w_block(g) + form.coupling_block(g).transpose() * solver.response();
  D.entries = 0.5 * (D.entries + D.entries.transpose()).eval();
  return D;
}

DtnMatrix assemble_dtn(const ProblemGeometry& g, const FormMatrix& form, const Field& q,
                       std::shared_ptr<const SobolevGram> gram, const std::string& q_descriptor) {
  ExteriorSolver solver(g, form, q);
  return assemble_dtn(solver, g, form, q, std::move(gram), q_descriptor);
}

DtnMatrix gamma_diff(const DtnMatrix& a, const DtnMatrix& b) {
  if (a.geometry.hash != b.geometry.hash) throw std::invalid_argument("gamma_diff: mismatched geometry");
  if (a.gram_hash() != b.gram_hash()) throw std::invalid_argument("gamma_diff: mismatched Gram matrices");
  DtnMatrix D = a;
  D.entries = a.entries - b.entries;
  D.q_descriptor = "difference(" + a.q_descriptor + ", " + b.q_descriptor + ")";
  D.q_hash = a.q_hash + "-" + b.q_hash;
  return D;
}

DtnMatrix gamma_diff_identity(const ProblemGeometry& g, const ExteriorSolver& s1, const Field& q1,
                              const ExteriorSolver& s2, const Field& q2, std::shared_ptr<const SobolevGram> gram) {
  const Index m = g.n_omega();
  const double hn = g.lattice.cell_volume();
  Eigen::VectorXd dq(m);
  for (Index k = 0; k < m; ++k) dq(k) = hn * (q1.values(g.omega.nodes()[k]) - q2.values(g.omega.nodes()[k]));
  DtnMatrix D;
  D.geometry = g;
  D.gram = gram ? gram : dtn_gram(g);
  D.q_descriptor = "identity difference";
  D.q_hash = hex64(hash_field(q1.restricted(g.omega))) + "-" + hex64(hash_field(q2.restricted(g.omega)));
  D.entries = s1.response().transpose() * dq.asDiagonal() * s2.response();
  D.entries = 0.5 * (D.entries + D.entries.transpose()).eval();
  return D;
}

Eigen::VectorXd ComparisonOperator::singular_values() const {
  // ‖A f‖_{Ω'} / ‖f‖_W for f = L_W^{-T} g equals |L_T^T A L_W^{-T} g|
  Eigen::MatrixXd left = gram_target->chol.matrixU() * matrix;
  Eigen::MatrixXd whitened = gram_w->chol.matrixU().transpose().solve(left.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(whitened);
  return svd.singularValues();
}

double ComparisonOperator::norm_of_image(const Eigen::VectorXd& fw) const {
  return gram_norm(matrix * fw, *gram_target);
}

ComparisonOperator comparison_operator(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar) {
  ExteriorSolver solver(g, form, qbar);
  ComparisonOperator A;
  const Index mp = g.omega_prime.size();
  A.matrix.resize(mp, g.n_w());
  for (Index r = 0; r < mp; ++r) A.matrix.row(r) = solver.response().row(g.omega.position_of(g.omega_prime.nodes()[r]));
  A.gram_w = dtn_gram(g);
  A.gram_target = std::make_shared<const SobolevGram>(build_gram(g.omega_prime, g.s));
  return A;
}

DominationReport domination_check(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar,
                                  const std::vector<Field>& qs, const std::vector<Eigen::VectorXd>& fs) {
  ComparisonOperator A = comparison_operator(g, form, qbar);
  ExteriorSolver base(g, form, qbar);
  DominationReport rep;
  for (const Field& q : qs) {
    for (Index v = 0; v < g.lattice.size(); ++v)
      if (!g.omega_prime.contains(v) && std::abs(q.values(v) - qbar.values(v)) > 1e-12 && g.omega.contains(v))
        throw std::invalid_argument("domination_check: q - qbar must be supported in Omega'");
    ExteriorSolver sq(g, form, q);
    DtnMatrix G = gamma_diff_identity(g, sq, q, base, qbar, A.gram_w);
    for (const auto& f : fs) {
      double num = dual_norm(G.entries * f, *A.gram_w);
      double den = A.norm_of_image(f);
      if (den <= 1e-14 * f.norm()) {
        if (num > 1e-14 * f.norm()) ++rep.violations;
        rep.ratios.push_back(num > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        continue;
      }
      rep.ratios.push_back(num / den);
    }
  }
  for (double r : rep.ratios) rep.c_max = std::max(rep.c_max, r);
  return rep;
}

AqCertificate check_aq(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar, double r0, double kappa) {
  if (r0 < 0) throw std::invalid_argument("check_aq: r0 must be nonnegative");
  AqCertificate cert;
  cert.qbar = qbar;
  cert.r0 = r0;
  cert.kappa = kappa;
  RestrictedOperator R = restricted_operator(g, form, qbar);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R.matrix, Eigen::EigenvaluesOnly);
  cert.margin = es.eigenvalues().cwiseAbs().minCoeff();
  const double p = g.lattice.n() / (2.0 * g.s);
  cert.embedding_constant = std::pow(g.lattice.cell_volume(), -1.0 / p);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  bool invertible = cert.margin > 1e-12 * scale;
  cert.verdict = invertible && cert.margin > kappa * r0 * cert.embedding_constant;
  return cert;
}

}  // namespace fraclab
