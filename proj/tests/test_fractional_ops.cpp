#include <doctest.h>

#include "fraclab/fractional_ops.hpp"
#include "fraclab/norms.hpp"

#include <cmath>
#include <random>

using namespace fraclab;
using doctest::Approx;

namespace {

Field random_field(const LatticeSpec& lat, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(lat.size());
  for (Index i = 0; i < v.size(); ++i) v(i) = nd(rng);
  return Field(lat, v);
}

Field mean_zero(Field u) {
  u.values.array() -= u.values.mean();
  return u;
}

double dot(const Field& a, const Field& b) { return a.values.dot(b.values) * a.lattice.cell_volume(); }

double rel_l2(const Field& a, const Field& b) { return (a.values - b.values).norm() / b.values.norm(); }

Field gaussian(const LatticeSpec& lat, double width, double cx = 0, double cy = 0) {
  return Field::sample(lat, [&](const Eigen::VectorXd& p) {
    double r2 = (p(0) - cx) * (p(0) - cx) + (p(1) - cy) * (p(1) - cy);
    return std::exp(-r2 / (2 * width * width));
  });
}

}  // namespace

TEST_CASE("fractional constant closed form") {
  for (double s : {0.1, 0.25, 0.5, 0.75, 0.9})
    for (int n : {1, 2, 3}) {
      const double ref = std::pow(4.0, s) * std::tgamma(n / 2.0 + s) / (std::pow(M_PI, n / 2.0) * std::abs(std::tgamma(-s)));
      CHECK(fractional_constant(n, s) == Approx(ref).scale(0).epsilon(1e-12));
    }
  // n = 1, s = 1/2 gives 1/π.
  CHECK(fractional_constant(1, 0.5) == Approx(1.0 / M_PI).scale(0).epsilon(1e-12));
}

TEST_CASE("multiplier symbols") {
  LatticeSpec lat(2, 4.0, 16);
  auto hom = homogeneous_multiplier(lat, 0.3);
  CHECK(hom.symbol(0) == 0.0);
  CHECK(hom.symbol.minCoeff() >= 0.0);
  CHECK(homogeneous_multiplier(lat, -0.3).symbol(0) == 0.0);
  auto inh = inhomogeneous_multiplier(lat, 0.3);
  CHECK(inh.symbol(0) == 1.0);
  auto lap = lattice_laplacian_multiplier(lat, 1.0);
  // axis-0 index 1: (2/h)^2 sin^2(ξ h / 2).
  const double xi = lat.frequency(1), h = lat.h();
  CHECK(lap.symbol(1) == Approx(4 / (h * h) * std::pow(std::sin(xi * h / 2), 2)));
}

TEST_CASE("multiplier: constant is annihilated") {
  LatticeSpec lat(2, 3.0, 32);
  Field c(lat, Eigen::VectorXd::Constant(lat.size(), 2.5));
  for (double s : {0.25, 0.5, 0.75}) CHECK(frac_laplacian_fourier(c, homogeneous_multiplier(lat, s)).values.norm() < 1e-10);
}

TEST_CASE("multiplier: Fourier mode is an eigenfunction") {
  LatticeSpec lat(2, 3.0, 32);
  const int k0 = 3, k1 = -2;
  Field u = Field::sample(lat, [&](const Eigen::VectorXd& p) {
    return std::cos(2 * M_PI * (k0 * p(0) + k1 * p(1)) / lat.box_len());
  });
  for (double s : {0.25, 0.5, 0.8}) {
    const double lam = std::pow(2 * M_PI * std::sqrt(double(k0 * k0 + k1 * k1)) / lat.box_len(), 2 * s);
    Field Lu = frac_laplacian_fourier(u, homogeneous_multiplier(lat, s));
    CHECK((Lu.values - lam * u.values).norm() <= 1e-10 * lam * u.values.norm());
  }
}

TEST_CASE("multiplier: s then -s recovers the mean-zero part") {
  LatticeSpec lat(2, 3.0, 32);
  std::mt19937_64 rng(7);
  Field u = random_field(lat, rng);
  Field mz = mean_zero(u);
  for (double s : {0.3, 0.5, 0.9}) {
    Field back = frac_laplacian_fourier(frac_laplacian_fourier(u, homogeneous_multiplier(lat, s)),
                                        homogeneous_multiplier(lat, -s));
    CHECK((back.values - mz.values).norm() <= 1e-9 * mz.values.norm());
  }
}

TEST_CASE("multiplier: self-adjoint and semigroup on random fields") {
  LatticeSpec lat(2, 3.0, 24);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Field u = random_field(lat, rng), v = random_field(lat, rng);
    auto op = homogeneous_multiplier(lat, 0.37);
    const double lhs = dot(frac_laplacian_fourier(u, op), v), rhs = dot(u, frac_laplacian_fourier(v, op));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::sqrt(dot(u, u) * dot(v, v)) * op.symbol.maxCoeff());

    Field two = frac_laplacian_fourier(frac_laplacian_fourier(u, homogeneous_multiplier(lat, 0.2)),
                                       homogeneous_multiplier(lat, 0.35));
    Field one = frac_laplacian_fourier(u, homogeneous_multiplier(lat, 0.55));
    CHECK((two.values - one.values).norm() <= 1e-10 * one.values.norm());
  }
}

TEST_CASE("kernel: constant maps to zero and odd maps to odd") {
  LatticeSpec lat(2, 3.0, 24);
  auto op = make_kernel_op(lat, 0.5);
  CHECK(op.c_ns == Approx(fractional_constant(2, 0.5)).scale(0).epsilon(1e-12));
  CHECK(op.weights(0) == 0.0);
  Field c(lat, Eigen::VectorXd::Constant(lat.size(), -1.25));
  CHECK(frac_laplacian_kernel(c, op).values.cwiseAbs().maxCoeff() < 1e-10);

  std::mt19937_64 rng(3);
  Field r = random_field(lat, rng);
  // antisymmetrize under x -> -x; node i mirrors to M-1-i because nodes sit at cell centres
  Eigen::VectorXd odd(lat.size());
  auto mirror = [&](Index v) {
    auto idx = lat.multi_index(v);
    for (int& i : idx) i = lat.M() - 1 - i;
    return lat.linear(idx);
  };
  for (Index v = 0; v < lat.size(); ++v) odd(v) = r.values(v) - r.values(mirror(v));
  Field Lu = frac_laplacian_kernel(Field(lat, odd), op);
  double err = 0;
  for (Index v = 0; v < lat.size(); ++v) err = std::max(err, std::abs(Lu.values(v) + Lu.values(mirror(v))));
  CHECK(err <= 1e-10 * Lu.values.cwiseAbs().maxCoeff());
}

TEST_CASE("kernel: smooth bump agrees with the multiplier on a 64^2 grid") {
  LatticeSpec lat(2, 4.0, 64);
  Field u = gaussian(lat, 0.3);
  for (double s : {0.25, 0.5}) {
    Field k = frac_laplacian_kernel(u, make_kernel_op(lat, s));
    Field m = frac_laplacian_fourier(u, homogeneous_multiplier(lat, s));
    CHECK(rel_l2(k, m) <= 0.02);
  }
}

TEST_CASE("kernel: error shrinks under refinement") {
  double prev = 1;
  for (int M : {16, 32, 64}) {
    LatticeSpec lat(2, 4.0, M);
    Field u = gaussian(lat, 0.3);
    const double e = rel_l2(frac_laplacian_kernel(u, make_kernel_op(lat, 0.5)),
                            frac_laplacian_fourier(u, homogeneous_multiplier(lat, 0.5)));
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("heat transform") {
  LatticeSpec lat(2, 3.0, 32);
  auto op = make_heat_transform(lat, 0.5);
  CHECK(op.weights.minCoeff() > 0);
  CHECK(std::isfinite(op.t_max));
  CHECK(op.t_max > 1.0);
  CHECK(op.tail_bound < 1e-6);

  SUBCASE("zero maps to zero") {
    CHECK(heat_transform(Field(lat), op).values.norm() == 0.0);
  }
  SUBCASE("single mode scales by |xi|^{-2s}") {
    for (double s : {0.25, 0.5, 0.75}) {
      auto hop = make_heat_transform(lat, s);
      const int k0 = 2, k1 = 1;
      Field g = Field::sample(lat, [&](const Eigen::VectorXd& p) {
        return std::sin(2 * M_PI * (k0 * p(0) + k1 * p(1)) / lat.box_len());
      });
      const double factor = std::pow(2 * M_PI * std::sqrt(5.0) / lat.box_len(), -2 * s);
      CHECK(rel_l2(heat_transform(g, hop), Field(lat, factor * g.values)) <= 1e-6);
    }
  }
  SUBCASE("round trip on a band-limited mean-zero field") {
    Field u(lat);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int a = -4; a <= 4; ++a)
      for (int b = -4; b <= 4; ++b) {
        if (a == 0 && b == 0) continue;
        const double c = nd(rng), phase = nd(rng);
        for (Index v = 0; v < lat.size(); ++v) {
          auto p = lat.position(v);
          u.values(v) += c * std::cos(2 * M_PI * (a * p(0) + b * p(1)) / lat.box_len() + phase);
        }
      }
    Field g = frac_laplacian_fourier(u, homogeneous_multiplier(lat, 0.5));
    CHECK(rel_l2(heat_transform(g, op), u) <= 1e-6);
  }
  SUBCASE("nonzero mean rejected") {
    Field one(lat, Eigen::VectorXd::Ones(lat.size()));
    CHECK_THROWS_AS(heat_transform(one, op), std::invalid_argument);
  }
}

TEST_CASE("tangential decay") {
  LatticeSpec lat(2, 3.0, 48);
  RegionMask box = RegionMask::rect(lat, {-0.6, -0.6}, {0.6, 0.6});
  SUBCASE("restricted Gaussian decays") {
    DecayFit fit = tangential_coefficient_decay(gaussian(lat, 0.5, 0.1, -0.05), box);
    CHECK(fit.c > 0);
    CHECK(fit.residual < 0.2);
  }
  SUBCASE("white noise shows no decay") {
    std::mt19937_64 rng(13);
    Field noise = random_field(lat, rng);
    bool degenerate = false;
    double rho = 0;
    try {
      rho = tangential_coefficient_decay(noise, box).c;
    } catch (const std::runtime_error&) {
      degenerate = true;
    }
    // a flat spectrum fits with a rate far below the Gaussian one
    const double smooth = tangential_coefficient_decay(gaussian(lat, 0.5), box).c;
    CHECK((degenerate || std::abs(rho) < 0.1 * smooth));
  }
  SUBCASE("too few modes is an error") {
    RegionMask tiny = RegionMask::rect(lat, {-0.1, -0.1}, {0.1, 0.1});
    CHECK_THROWS_AS(tangential_coefficient_decay(gaussian(lat, 0.5), tiny), std::runtime_error);
  }
}

TEST_CASE("conductivity form") {
  LatticeSpec lat(2, 3.0, 24);
  RegionMask omega = RegionMask::ball(lat, {0, 0}, 0.6, RegionLabel::Omega);
  std::mt19937_64 rng(17);
  Field one(lat, Eigen::VectorXd::Ones(lat.size()));
  Field zero(lat);

  SUBCASE("gamma = 1 matches the kernel Laplacian") {
    auto form = make_conductivity_form(one, zero, omega, 0.5);
    Field u = random_field(lat, rng);
    const double B = conductivity_bilinear(u, u, form);
    const double ref = dot(frac_laplacian_kernel(u, form.kernel), u);
    CHECK(B == Approx(ref).scale(0).epsilon(1e-8));
  }
  SUBCASE("constant, symmetric, positive semidefinite") {
    Field gamma = one, q(lat);
    for (Index x : omega.nodes()) {
      gamma.values(x) = 1.0 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
      q.values(x) = std::uniform_real_distribution<double>(0, 2)(rng);
    }
    auto form = make_conductivity_form(gamma, zero, omega, 0.4);
    Field c(lat, Eigen::VectorXd::Constant(lat.size(), 3.0));
    CHECK(std::abs(conductivity_bilinear(c, c, form)) < 1e-10);

    auto qform = make_conductivity_form(gamma, q, omega, 0.4);
    Field u = random_field(lat, rng), v = random_field(lat, rng);
    CHECK(conductivity_bilinear(u, v, qform) == conductivity_bilinear(v, u, qform));
    int negative = 0;
    for (int t = 0; t < 100; ++t) {
      Field w = random_field(lat, rng);
      if (conductivity_bilinear(w, w, qform) < 0) ++negative;
    }
    CHECK(negative == 0);
  }
  SUBCASE("invalid gamma rejected") {
    Field outside = one;
    for (Index v = 0; v < lat.size(); ++v)
      if (!omega.contains(v)) {
        outside.values(v) = 2.0;
        break;
      }
    CHECK_THROWS_AS(make_conductivity_form(outside, zero, omega, 0.5), std::invalid_argument);
    Field neg = one;
    neg.values(omega.nodes().front()) = -0.5;
    CHECK_THROWS_AS(make_conductivity_form(neg, zero, omega, 0.5), std::invalid_argument);
  }
}
