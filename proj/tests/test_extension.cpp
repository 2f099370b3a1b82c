#include <doctest.h>

#include "fraclab/extension.hpp"
#include "fraclab/forward.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <random>

using namespace fraclab;
using doctest::Approx;

TEST_CASE("Bessel J against closed form and Boost") {
  for (double x : {1.0, 2.0, 3.0})
    CHECK(std::abs(bessel_j(-0.5, x) - std::sqrt(2.0 / (M_PI * x)) * std::cos(x)) <= 1e-10);
  for (double s : {0.1, 0.25, 0.5, 0.75, 0.9})
    for (double x : {0.01, 0.5, 2.0, 7.5, 9.99, 10.01, 17.3, 31.0, 49.9}) {
      const double ref = boost::math::cyl_bessel_j(-s, x);
      CHECK(std::abs(bessel_j(BesselOrder::from_s(s), x) - ref) <= 1e-10);
    }
  CHECK_THROWS_AS(bessel_j(-0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bessel_j(-0.5, -1.0), std::invalid_argument);
}

TEST_CASE("Bessel J small-argument behaviour and recurrence") {
  for (double s : {0.25, 0.5, 0.75}) {
    const double x = 1e-4;
    const double lead = std::pow(x / 2, -s) / std::tgamma(1 - s);
    CHECK(bessel_j(-s, x) / lead == Approx(1.0).scale(0).epsilon(1e-6));
    for (double y : {0.3, 4.0, 12.0, 40.0}) {
      const double nu = 1 - s;
      const double res = bessel_j(nu - 1, y) + bessel_j(nu + 1, y) - 2 * nu / y * bessel_j(nu, y);
      CHECK(std::abs(res) <= 1e-8);
    }
  }
}

TEST_CASE("Bessel zeros") {
  auto half = bessel_zeros(BesselOrder::from_s(0.5), 40);
  for (int m = 1; m <= 40; ++m) CHECK(half[m - 1] == Approx((m - 0.5) * M_PI).scale(0).epsilon(1e-12));
  for (double s : {0.2, 0.5, 0.8}) {
    auto order = BesselOrder::from_s(s);
    auto z = bessel_zeros(order, 50);
    for (int m = 0; m < 50; ++m) {
      CHECK(std::abs(bessel_j(order, z[m])) <= 1e-10);
      if (m > 0) CHECK(z[m] > z[m - 1]);
    }
    // McMahon: j_m = (m - s/2 - 1/4)π + O(1/m)
    CHECK(std::abs(z[49] / ((50 - s / 2 - 0.25) * M_PI) - 1) <= 1e-4);
    if (s < 0.5) CHECK(std::abs(z[49] / (50 * M_PI) - 1) <= 0.01);
    // Boost locates zeros independently
    for (int m : {1, 2, 10, 50}) CHECK(z[m - 1] == Approx(boost::math::cyl_bessel_j_zero(-s, m)).scale(0).epsilon(1e-10));
  }
  CHECK_THROWS_AS(bessel_zeros(BesselOrder::from_s(0.5), 0), std::invalid_argument);
}

TEST_CASE("cylinder eigensystem on the unit square") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 400);
  REQUIRE(sys.count() == 400);
  const auto& first = sys.pairs[0];
  CHECK(first.l == std::vector<int>{1, 1});
  CHECK(first.m == 1);
  CHECK(first.mu == Approx(2 * M_PI * M_PI));
  CHECK(first.lambda == Approx(2 * M_PI * M_PI + M_PI * M_PI / 4).scale(0).epsilon(1e-12));
  for (int k = 0; k < sys.count(); ++k) {
    const auto& p = sys.pairs[k];
    CHECK(p.lambda == p.mu + p.j * p.j / (sys.R * sys.R));
    CHECK(p.mu == Approx(M_PI * M_PI * (p.l[0] * p.l[0] + p.l[1] * p.l[1])).scale(0).epsilon(1e-12));
    if (k > 0) CHECK(p.lambda >= sys.pairs[k - 1].lambda);
  }
  CHECK_THROWS(build_eigensystem({1.0, 1.0}, 0.5, 1.0, 0));
}

TEST_CASE("normalizers by adaptive quadrature") {
  // tanh-sinh copes with the z^{1-2s} endpoint behaviour
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double s : {0.25, 0.5, 0.75})
    for (double R : {1.0, 2.0}) {
      auto sys = build_eigensystem({1.0}, s, R, 30);
      for (const auto& p : sys.pairs) {
        auto integrand = [&](double z) {
          const double J = boost::math::cyl_bessel_j(-s, p.j * z / R);
          return J == 0 ? 0.0 : std::exp(std::log(z) + 2 * std::log(std::abs(J)));
        };
        const double I = ts.integrate(integrand, 0.0, R);
        CHECK(std::abs(p.gamma * p.gamma * I - 1.0) <= 1e-8);
      }
    }
}

TEST_CASE("eigenfunctions are orthonormal in the weighted product") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 50);
  Eigen::MatrixXd G(50, 50);
  for (int j = 0; j < 50; ++j) {
    auto col = project_onto_eigensystem(
        sys, [&](const Eigen::VectorXd& x, double z) { return eigenfunction_value(sys, j, x, z); }, 50, 24, 64);
    for (int k = 0; k < 50; ++k) G(k, j) = col[k];
  }
  CHECK((G - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("eigenfunction weak residual shrinks under refinement") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 10);
  for (int k : {0, 3, 7}) {
    const double coarse = eigenfunction_residual(sys, k, 16, 32);
    const double fine = eigenfunction_residual(sys, k, 32, 64);
    CHECK(fine < coarse);
    CHECK(fine < 0.05);
  }
}

TEST_CASE("Weyl counting") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 2000);
  CHECK(weyl_count(sys, 0.5 * sys.pairs[0].lambda) == 0);
  for (double N : {50.0, 100.0, 200.0}) {
    WeylBand band = weyl_band(sys, N);
    // brute-force enumeration of μ_l + j_m^2 <= N
    auto z = bessel_zeros(BesselOrder::from_s(0.5), 20);
    long brute = 0;
    for (int p = 1; p < 10; ++p)
      for (int q = 1; q < 10; ++q)
        for (double j : z)
          if (M_PI * M_PI * (p * p + q * q) + j * j <= N) ++brute;
    CHECK(band.count == brute);
    const double ratio = band.count / std::pow(N, 1.5);
    CHECK(ratio >= band.lower);
    CHECK(ratio <= band.upper);
  }
}

TEST_CASE("eigenvalue growth and embedding singular values") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 2000);
  const double slope = weyl_slope(sys, 100, 1000);
  CHECK(slope >= 0.9 * 2.0 / 3.0);
  CHECK(slope <= 1.1 * 2.0 / 3.0);

  auto emb = embedding_singular_values(sys, 2000, 100, 2000);
  for (std::size_t k = 0; k < emb.sigmas.size(); ++k) {
    CHECK(emb.sigmas[k] == 1.0 / std::sqrt(1.0 + sys.pairs[k].lambda));
    if (k > 0) CHECK(emb.sigmas[k] <= emb.sigmas[k - 1]);
  }
  CHECK(emb.fit.model == DecayModel::Power);
  CHECK(std::abs(emb.fit.alpha - 1.0 / 3.0) <= 0.1 / 3.0);

  auto tall = build_eigensystem({1.0, 1.0}, 0.5, 2.0, 2000);
  auto emb2 = embedding_singular_values(tall, 2000, 100, 2000);
  CHECK(tall.pairs[0].lambda < sys.pairs[0].lambda);
  CHECK(std::abs(emb2.fit.alpha - emb.fit.alpha) < 0.02);
}

TEST_CASE("eigensystem CSV export") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 5);
  const std::string csv = sys.to_csv();
  CHECK(csv.rfind("k,l1,l2,m,mu,j,gamma,lambda\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("h1 sequence norm of a smooth field converges") {
  auto sys = build_eigensystem({1.0, 1.0}, 0.5, 1.0, 400);
  auto coeffs = project_onto_eigensystem(
      sys,
      [](const Eigen::VectorXd& x, double z) {
        return x(0) * (1 - x(0)) * x(1) * (1 - x(1)) * (1 - z) * (1 - z);
      },
      400, 32, 96);
  std::vector<double> partial;
  double acc = 0;
  for (int k = 0; k < 400; ++k) {
    acc += std::pow(k + 1.0, 2.0 / 3.0) * coeffs[k] * coeffs[k];
    partial.push_back(acc);
  }
  CHECK(partial[399] - partial[199] <= 0.05 * partial[399]);
  CHECK(partial[399] - partial[299] <= partial[299] - partial[99]);
}

TEST_CASE("c_s calibration and the single-mode flux") {
  for (double s : {0.25, 0.5, 0.75}) {
    const double cs = calibrate_cs(s);
    CHECK(cs == Approx(cs_constant_closed_form(s)).scale(0).epsilon(0.02));
    // geometric mesh from 1e-9 to 40
    std::vector<double> z(3001);
    for (int j = 1; j <= 3000; ++j) z[j] = 1e-9 * std::pow(40.0 / 1e-9, (j - 1) / 2999.0);
    for (double xi : {0.5, 2.0, 4.0})
      CHECK(cs * extension_mode_flux(z, s, xi * xi) == Approx(std::pow(xi, 2 * s)).scale(0).epsilon(0.02));
  }
  // s = 1/2: Γ(1/2) / Γ(1/2) = 1
  CHECK(cs_constant_closed_form(0.5) == Approx(1.0).scale(0).epsilon(1e-14));
}

TEST_CASE("cylinder grid") {
  LatticeSpec lat(2, 3.0, 16);
  auto z = graded_heights(1.0, 20, 0.5, 50.0);
  CHECK(z.front() == 0.0);
  for (std::size_t j = 1; j < z.size(); ++j) CHECK(z[j] > z[j - 1]);
  CHECK(z.back() >= 50.0);
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(make_cylinder_grid(lat, 0.5, 1.0, 20, {bad}), std::invalid_argument);
  Eigen::MatrixXd stretched = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  CHECK_THROWS_AS(make_cylinder_grid(lat, 0.5, 1.0, 20, {stretched}, 0.5), std::invalid_argument);
  auto grid = make_cylinder_grid(lat, 0.5, 1.0, 20, {stretched}, 0.25);
  CHECK(grid.constant_metric());
}

namespace {

struct ExtensionSetup {
  ProblemGeometry g;
  CylinderGrid grid;
  double cs;
  ExtensionSetup(int M, double s = 0.5)
      : g(ProblemGeometry::reference(s, M, 3.0)),
        grid(make_cylinder_grid(g.lattice, s, 4 * g.lattice.h(), 48, {}, 0, 200.0)),
        cs(calibrate_cs(s)) {}
};

Field w_data(const ProblemGeometry& g, int k, double shift) {
  Field f(g.lattice);
  for (Index x : g.w.nodes()) f.values(x) = std::sin(k * g.lattice.position(x)(1)) + shift;
  return f;
}

}  // namespace

TEST_CASE("FD extension: zero data and energy minimality") {
  ExtensionSetup e(24);
  Field q(e.g.lattice);
  auto zero = solve_extension_fd(e.grid, Field(e.g.lattice), q, e.g.omega, e.cs);
  CHECK(zero.values.norm() == 0.0);

  for (Index x : e.g.omega.nodes()) q.values(x) = 0.7;
  auto sol = solve_extension_fd(e.grid, w_data(e.g, 3, 1.0), q, e.g.omega, e.cs);
  const double E0 = extension_energy(e.grid, sol.values, q, e.g.omega, e.cs);
  CHECK(E0 == Approx(sol.energy).scale(0).epsilon(1e-10));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const Index N = e.g.lattice.size();
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd v = sol.values;
    for (int j = 1; j < e.grid.K(); ++j)
      for (Index x = 0; x < N; ++x) v(j * N + x) += 1e-2 * nd(rng);
    for (Index x : e.g.omega.nodes()) v(x) += 1e-2 * nd(rng);
    CHECK(extension_energy(e.grid, v, q, e.g.omega, e.cs) >= E0);
  }
}

TEST_CASE("FD extension reproduces the fractional DtN map on a 32^2 grid" * doctest::test_suite("resolution_limited")) {
  ExtensionSetup e(32);
  auto gram = dtn_gram(e.g);
  Field q0(e.g.lattice);
  auto spectral = assemble_dtn(e.g, fractional_form(e.g), q0, gram);
  auto ext = assemble_dtn(e.g, extension_form(e.g, e.grid, e.cs), q0, gram);
  const double rel = gamma_diff(ext, spectral).norm() / spectral.norm();
  MESSAGE("extension vs multiplier DtN in op_norm: " << rel);
  CHECK(rel <= 0.05);
}

TEST_CASE("FD extension DtN against the lattice Laplacian symbol") {
  ExtensionSetup e(32);
  auto gram = dtn_gram(e.g);
  Field q0(e.g.lattice);
  auto ext = assemble_dtn(e.g, extension_form(e.g, e.grid, e.cs), q0, gram);
  auto lattice = assemble_dtn(
      e.g, multiplier_form(e.g, lattice_laplacian_multiplier(e.g.lattice, e.g.s).symbol, "lattice"), q0, gram);
  CHECK(gamma_diff(ext, lattice).norm() / lattice.norm() <= 0.01);
}

TEST_CASE("FD extension bilinear form on smooth exterior data" * doctest::test_suite("resolution_limited")) {
  ExtensionSetup e(32);
  auto gram = dtn_gram(e.g);
  Field q0(e.g.lattice);
  auto ext = assemble_dtn(e.g, extension_form(e.g, e.grid, e.cs), q0, gram);
  auto spectral = assemble_dtn(e.g, fractional_form(e.g), q0, gram);
  Eigen::VectorXd f(e.g.n_w());
  for (Index k = 0; k < e.g.n_w(); ++k) {
    auto p = e.g.lattice.position(e.g.w.nodes()[k]);
    f(k) = std::cos(M_PI * (p(0) - 1.0)) * std::cos(M_PI * p(1));
  }
  MESSAGE("smooth-data bilinear: extension " << f.dot(ext.entries * f) << ", multiplier " << f.dot(spectral.entries * f));
  CHECK(f.dot(ext.entries * f) == Approx(f.dot(spectral.entries * f)).scale(0).epsilon(0.05));
}

TEST_CASE("FD extension symbol matches |xi|^{2s} at low frequency") {
  LatticeSpec lat(2, 3.0, 32);
  for (double s : {0.25, 0.5, 0.75}) {
    auto grid = make_cylinder_grid(lat, s, 4 * lat.h(), 48, {}, 0, 200.0);
    Eigen::VectorXd sym = extension_symbol(grid, calibrate_cs(s));
    Eigen::VectorXd xi2 = lat.xi_squared();
    for (Index i = 1; i < lat.size(); ++i)
      if (xi2(i) <= 25.0) CHECK(sym(i) == Approx(std::pow(xi2(i), s)).scale(0).epsilon(0.05));
  }
}

TEST_CASE("Caccioppoli verifier") {
  SUBCASE("constant extension has no gradient energy") {
    ExtensionSetup e(24);
    ExtensionSolution sol;
    sol.grid = e.grid;
    sol.values = Eigen::VectorXd::Constant((e.grid.K() + 1) * e.g.lattice.size(), 2.0);
    auto rep = caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.2, 0.4, e.g.omega, 1.0);
    CHECK(rep.lhs == Approx(0.0).scale(1.0));
    CHECK(rep.rhs > 0);
    CHECK(rep.constant == Approx(0.0).scale(1.0));
  }
  SUBCASE("geometry violations") {
    ExtensionSetup e(24);
    auto sol = solve_extension_fd(e.grid, w_data(e.g, 1, 1.0), Field(e.g.lattice), e.g.omega, e.cs);
    CHECK_THROWS_AS(caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.3, 0.2, e.g.omega, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.2, 0.7, e.g.omega, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(caccioppoli_verify(sol, Eigen::VectorXd::Zero(2), 0.2, 0.4, e.g.omega, 1.0), std::invalid_argument);
  }
  SUBCASE("battery is stable under refinement") {
    auto battery_max = [](int M) {
      ExtensionSetup e(M);
      Field q(e.g.lattice);
      for (Index x : e.g.omega.nodes()) q.values(x) = 1.0;
      double worst = 0;
      for (int b = 0; b < 10; ++b) {
        auto sol = solve_extension_fd(e.grid, w_data(e.g, 1 + b, 0.5 * (b % 3)), q, e.g.omega, e.cs);
        auto rep = caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.2, 0.4, e.g.omega, 1.0);
        CHECK(rep.lhs >= 0);
        CHECK(rep.rhs >= 0);
        worst = std::max(worst, rep.constant);
      }
      return worst;
    };
    const double coarse = battery_max(24), fine = battery_max(48);
    MESSAGE("Caccioppoli battery: M=24 " << coarse << ", M=48 " << fine);
    CHECK(std::abs(fine - coarse) <= 0.2 * fine);
  }
  SUBCASE("halving the annulus width") {
    ExtensionSetup e(48);
    Field q(e.g.lattice);
    auto sol = solve_extension_fd(e.grid, w_data(e.g, 3, 1.0), q, e.g.omega, e.cs);
    auto wide = caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.2, 0.4, e.g.omega, 1.0);
    auto narrow = caccioppoli_verify(sol, Eigen::VectorXd::Zero(3), 0.3, 0.4, e.g.omega, 1.0);
    MESSAGE("annulus 0.2: " << wide.constant << ", annulus 0.1: " << narrow.constant);
    CHECK(std::isfinite(narrow.constant));
    CHECK(narrow.constant <= 4 * wide.constant);
  }
}
