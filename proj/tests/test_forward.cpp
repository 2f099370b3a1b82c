#include <doctest.h>

#include "fraclab/forward.hpp"

#include <cmath>
#include <random>

using namespace fraclab;
using doctest::Approx;

namespace {

ProblemGeometry small_geometry(double s = 0.5, int M = 24) { return ProblemGeometry::reference(s, M, 3.0); }

Field on_omega_prime(const ProblemGeometry& g, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Field q(g.lattice);
  for (Index x : g.omega_prime.nodes()) q.values(x) = u(rng);
  return q;
}

Eigen::VectorXd random_vec(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("geometry invariants") {
  auto g = small_geometry();
  CHECK(g.n_omega() == 64);
  CHECK(g.omega_prime.size() == 16);
  CHECK(g.n_w() == 16);
  CHECK(g.omega_prime.subset_of(g.omega));
  CHECK(g.omega.disjoint_from(g.w));
  CHECK_THROWS_AS(ProblemGeometry(g.omega, g.omega_prime, g.omega, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(ProblemGeometry(g.omega_prime, g.omega, g.w, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(ProblemGeometry(g.omega, g.omega_prime, g.w, 1.0), std::invalid_argument);
}

TEST_CASE("restricted operator and forms are symmetric") {
  auto g = small_geometry();
  Field q(g.lattice);
  std::mt19937_64 rng(1);
  q = on_omega_prime(g, rng, 0, 2);
  for (const FormMatrix& form :
       {fractional_form(g), kernel_form(g, make_kernel_op(g.lattice, g.s), Eigen::VectorXd::Ones(g.lattice.size()))}) {
    CHECK(max_rel(form.E, form.E.transpose()) <= 1e-12);
    auto R = restricted_operator(g, form, q);
    CHECK(max_rel(R.matrix, R.matrix.transpose()) <= 1e-10);
  }
}

TEST_CASE("exterior solve") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  Field q0(g.lattice);
  std::mt19937_64 rng(2);
  Field q = on_omega_prime(g, rng, 0, 3);

  SUBCASE("zero data gives zero") {
    CHECK(solve_exterior(g, form, q, Field(g.lattice)).values.norm() == 0.0);
  }
  SUBCASE("exterior values, interior residual and linearity") {
    Eigen::VectorXd f1 = random_vec(g.n_w(), rng), f2 = random_vec(g.n_w(), rng);
    ExteriorSolver solver(g, form, q);
    Field u = solver.solve(g.field_on_w(f1));
    for (Index k = 0; k < g.n_w(); ++k) CHECK(u.values(g.w.nodes()[k]) == f1(k));
    // R_Ω(L + q)u = 0: rows of E over Ω applied to (u_Ω, f) plus q u h^n
    Eigen::VectorXd full(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) full(i) = u.values(g.nodes[i]);
    Eigen::VectorXd res = form.E.topRows(g.n_omega()) * full;
    for (Index k = 0; k < g.n_omega(); ++k)
      res(k) += q.values(g.omega.nodes()[k]) * full(k) * g.lattice.cell_volume();
    CHECK(res.norm() <= 1e-9 * f1.norm() * form.E.cwiseAbs().maxCoeff());

    const double a = 1.7, b = -0.4;
    Eigen::VectorXd lin = solver.solve_omega(a * f1 + b * f2);
    Eigen::VectorXd sep = a * solver.solve_omega(f1) + b * solver.solve_omega(f2);
    CHECK((lin - sep).norm() <= 1e-9 * sep.norm());
  }
  SUBCASE("energy is nonnegative for q = 0") {
    auto dtn = assemble_dtn(g, form, q0);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd f = random_vec(g.n_w(), rng);
      CHECK(f.dot(dtn.entries * f) >= 0);
    }
  }
  SUBCASE("Dirichlet eigenvalue is reported") {
    auto R = restricted_operator(g, form, q0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R.matrix);
    const double lam = es.eigenvalues()(0);
    Field shift(g.lattice);
    for (Index x : g.omega.nodes()) shift.values(x) = -lam;
    CHECK_THROWS_WITH_AS(ExteriorSolver(g, form, shift), doctest::Contains("Dirichlet eigenvalue hit"),
                         std::runtime_error);
    auto cert = check_aq(g, form, shift, 0.0);
    CHECK_FALSE(cert.verdict);
  }
}

TEST_CASE("DtN matrix") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  auto gram = dtn_gram(g);
  std::mt19937_64 rng(3);
  Field q1 = on_omega_prime(g, rng, 0, 2), q2 = on_omega_prime(g, rng, 0, 2);

  auto d1 = assemble_dtn(g, form, q1, gram);
  CHECK(max_rel(d1.entries, d1.entries.transpose()) <= 1e-9);

  SUBCASE("values outside Omega do not enter") {
    Field qx = q1;
    for (Index k = 0; k < g.n_w(); ++k) qx.values(g.w.nodes()[k]) = 5.0;
    qx.values(0) = -3.0;
    CHECK(assemble_dtn(g, form, qx, gram).entries == d1.entries);
  }
  SUBCASE("difference identity") {
    auto d2 = assemble_dtn(g, form, q2, gram);
    ExteriorSolver s1(g, form, q1), s2(g, form, q2);
    auto direct = gamma_diff(d1, d2);
    auto ident = gamma_diff_identity(g, s1, q1, s2, q2, gram);
    CHECK(max_rel(ident.entries, direct.entries) <= 1e-8);
    // brute force for one pair of indicators
    Eigen::VectorXd u1 = s1.response().col(2), u2 = s2.response().col(5);
    double sum = 0;
    for (Index k = 0; k < g.n_omega(); ++k) {
      const Index x = g.omega.nodes()[k];
      sum += (q1.values(x) - q2.values(x)) * u1(k) * u2(k) * g.lattice.cell_volume();
    }
    CHECK(sum == Approx(direct.entries(2, 5)).scale(0).epsilon(1e-8).scale(direct.entries.cwiseAbs().maxCoeff()));
  }
  SUBCASE("gamma_diff basics") {
    auto zero = gamma_diff(d1, d1);
    CHECK(zero.entries.norm() == 0.0);
    auto d0 = assemble_dtn(g, form, Field(g.lattice), gram);
    CHECK(gamma_diff(d1, d0).norm() <= d1.norm() + d0.norm());
    auto other = assemble_dtn(small_geometry(0.5, 32), fractional_form(small_geometry(0.5, 32)), Field(small_geometry(0.5, 32).lattice));
    CHECK_THROWS_AS(gamma_diff(d1, other), std::invalid_argument);
  }
  SUBCASE("first order in the perturbation size") {
    Field d = on_omega_prime(g, rng, -1, 1);
    auto d0 = assemble_dtn(g, form, Field(g.lattice), gram);
    ExteriorSolver s0(g, form, Field(g.lattice));
    std::vector<double> norms;
    for (double t : {1e-2, 1e-3}) {
      Field qt(g.lattice, t * d.values);
      ExteriorSolver st(g, form, qt);
      norms.push_back(gamma_diff_identity(g, st, qt, s0, Field(g.lattice), gram).norm());
    }
    CHECK(norms[0] / norms[1] == Approx(10.0).scale(0).epsilon(0.01));
  }
}

TEST_CASE("DtN monotone in the potential") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  auto gram = dtn_gram(g);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    Field q1 = on_omega_prime(g, rng, 0, 2);
    Field bump = on_omega_prime(g, rng, 0, 1);
    Field q2(g.lattice, q1.values + bump.values);
    auto diff = gamma_diff(assemble_dtn(g, form, q2, gram), assemble_dtn(g, form, q1, gram));
    Eigen::MatrixXd sym = 0.5 * (diff.entries + diff.entries.transpose());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues()(0) >= -1e-8);
  }
}

namespace {

double gamma_norm_at(int M) {
  auto g = small_geometry(0.5, M);
  Field q = Field::sample(g.lattice, [](const Eigen::VectorXd& p) {
    return (std::abs(p(0)) <= 0.25 && std::abs(p(1)) <= 0.25) ? 1.0 : 0.0;
  });
  auto form = fractional_form(g);
  auto gram = dtn_gram(g);
  ExteriorSolver s1(g, form, q), s0(g, form, Field(g.lattice));
  return gamma_diff_identity(g, s1, q, s0, Field(g.lattice), gram).norm();
}

}  // namespace

TEST_CASE("gamma norm differences contract under refinement") {
  const double n24 = gamma_norm_at(24), n48 = gamma_norm_at(48), n96 = gamma_norm_at(96);
  CHECK(std::abs(n96 - n48) < 0.5 * std::abs(n48 - n24));
  CHECK(n96 < n48);
  CHECK(n48 < n24);
}

// Reference configuration is M = 48.
TEST_CASE("gamma norm Cauchy under refinement" * doctest::test_suite("resolution_limited")) {
  const double n48 = gamma_norm_at(48), n96 = gamma_norm_at(96);
  MESSAGE("op_norm(Gamma): M=48 " << n48 << ", M=96 " << n96);
  CHECK(std::abs(n96 - n48) / n96 < 0.05);
}

TEST_CASE("comparison operator") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  Field q0(g.lattice);
  auto A = comparison_operator(g, form, q0);
  CHECK(A.matrix.rows() == g.omega_prime.size());
  CHECK(A.matrix.cols() == g.n_w());
  CHECK(A.norm_of_image(Eigen::VectorXd::Zero(g.n_w())) == 0.0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.matrix);
  CHECK(svd.rank() <= std::min(A.matrix.rows(), A.matrix.cols()));

  SUBCASE("moving W away shrinks the columns") {
    const auto& lat = g.lattice;
    RegionMask far = RegionMask::rect(lat, {1.0, -0.25}, {1.45, 0.25}, RegionLabel::W);
    ProblemGeometry gf(g.omega, g.omega_prime, far, g.s);
    auto Af = comparison_operator(gf, fractional_form(gf), q0);
    CHECK(Af.matrix.norm() < A.matrix.norm());
  }
  SUBCASE("singular values decay") {
    auto g48 = small_geometry(0.5, 48);
    auto A48 = comparison_operator(g48, fractional_form(g48), Field(g48.lattice));
    Eigen::VectorXd sv = A48.singular_values();
    std::vector<double> vals;
    for (Index k = 0; k < sv.size() && sv(k) > 1e-13 * sv(0); ++k) vals.push_back(sv(k));
    REQUIRE(vals.size() >= 10);
    FitOptions opts;
    opts.fixed_mu = 0.5;
    DecayFit fit = fit_decay(vals, DecayModel::StretchedExp, opts);
    CHECK(fit.c > 0);
    MESSAGE("comparison singular values: c = " << fit.c << ", residual = " << fit.residual);
  }
}

TEST_CASE("domination check") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  Field qbar(g.lattice);
  auto sample = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Field> qs;
    std::vector<Eigen::VectorXd> fs;
    for (int i = 0; i < 20; ++i) {
      qs.push_back(on_omega_prime(g, rng, 0, 1));
      fs.push_back(random_vec(g.n_w(), rng));
    }
    return std::make_pair(qs, fs);
  };
  auto [qs, fs] = sample(10);
  auto rep = domination_check(g, form, qbar, qs, fs);
  CHECK(rep.violations == 0);
  CHECK(std::isfinite(rep.c_max));

  auto [qs2, fs2] = sample(20);
  auto rep2 = domination_check(g, form, qbar, qs2, fs2);
  CHECK(std::abs(rep2.c_max - rep.c_max) <= 0.1 * rep.c_max);

  std::vector<Eigen::VectorXd> doubled;
  for (auto& f : fs) doubled.push_back(2 * f);
  auto rep3 = domination_check(g, form, qbar, qs, doubled);
  for (std::size_t i = 0; i < rep.ratios.size(); ++i) CHECK(rep3.ratios[i] == Approx(rep.ratios[i]).scale(0).epsilon(1e-10));

  auto same = domination_check(g, form, qbar, {qbar}, {fs[0]});
  CHECK(same.ratios[0] == 0.0);
}

TEST_CASE("condition Aq") {
  auto g = small_geometry();
  auto form = fractional_form(g);
  Field qpos(g.lattice);
  for (Index x : g.omega.nodes()) qpos.values(x) = 0.5;
  auto cert = check_aq(g, form, qpos, 1e-3);
  CHECK(cert.verdict);
  CHECK(cert.margin > 0);
  CHECK(cert.embedding_constant == Approx(std::pow(g.lattice.cell_volume(), -1.0 / (2.0 / (2 * g.s)))));
  auto plain = check_aq(g, form, qpos, 0.0);
  CHECK(plain.verdict);
  // huge radius defeats the certificate
  CHECK_FALSE(check_aq(g, form, qpos, 1e6).verdict);
  CHECK_THROWS_AS(check_aq(g, form, qpos, -1.0), std::invalid_argument);
}
