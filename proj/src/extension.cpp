#include "fraclab/extension.hpp"

#include "fraclab/quadrature.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fraclab {

BesselOrder BesselOrder::from_s(double s) {
  if (!(s > 0 && s < 1)) throw std::invalid_argument("BesselOrder: s must lie in (0, 1)");
  BesselOrder o;
  o.nu = -s;
  return o;
}

namespace {

double bessel_series(double nu, double x) {
  double half = 0.5 * x;
  double term = std::pow(half, nu) / std::tgamma(nu + 1.0);
  double sum = term;
  double q = -half * half;
  for (int k = 1; k < 300; ++k) {
    term *= q / (k * (k + nu));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum) && k > x) break;
  }
  return sum;
}

// Miller's backward recurrence normalized by (x/2)^ν = Σ_k (ν+2k) Γ(ν+k)/k! J_{ν+2k}(x).
double bessel_miller(double nu, double x) {
  int N = 2 * static_cast<int>(std::ceil((1.2 * x + 40.0) / 2.0));
  double f_next = 0.0, f = 1e-30;
  double norm = 0.0;
  // coefficients c_i for the even orders, computed upward then consumed downward
  std::vector<double> c(N / 2 + 1);
  c[0] = std::tgamma(nu + 1.0);
  double r = std::tgamma(nu + 1.0);  // Γ(ν+i)/i! at i = 1
  for (int i = 1; i <= N / 2; ++i) {
    if (i > 1) r *= (nu + i - 1.0) / i;
    c[i] = (nu + 2.0 * i) * r;
  }
  for (int k = N; k >= 1; --k) {
    if (k % 2 == 0) norm += c[k / 2] * f;
    double f_prev = 2.0 * (nu + k) / x * f - f_next;
    f_next = f;
    f = f_prev;
    if (std::abs(f) > 1e200) {
      f *= 1e-200;
      f_next *= 1e-200;
      norm *= 1e-200;
    }
  }
  norm += c[0] * f;
  return f * std::pow(0.5 * x, nu) / norm;
}

}  // namespace

double bessel_j(double nu, double x) {
  if (!(x > 0)) throw std::invalid_argument("bessel_j: x must be positive");
  if (!(nu > -1)) throw std::invalid_argument("bessel_j: order must exceed -1");
  return x < 10.0 ? bessel_series(nu, x) : bessel_miller(nu, x);
}

double bessel_j(const BesselOrder& order, double x) {
  if (!(x > 0)) throw std::invalid_argument("bessel_j: x must be positive");
  return x < order.series_switch ? bessel_series(order.nu, x) : bessel_miller(order.nu, x);
}

double mcmahon_zero(double nu, int m) {
  double beta = (m + 0.5 * nu - 0.25) * M_PI;
  double mu = 4.0 * nu * nu;
  double b8 = 8.0 * beta;
  return beta - (mu - 1.0) / b8 - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * std::pow(b8, 3));
}

std::vector<double> bessel_zeros(const BesselOrder& order, int count) {
  if (count < 1) throw std::invalid_argument("bessel_zeros: count must be >= 1");
  auto J = [&](double x) { return bessel_j(order, x); };
  std::vector<double> zeros;
  zeros.reserve(count);
  double prev = 0.0;
  for (int m = 1; m <= count; ++m) {
    double g = mcmahon_zero(order.nu, m);
    double a = std::max(prev + 1e-6, g - 1.0), b = g + 1.0;
    double fa = J(a), fb = J(b);
    for (int tries = 0; fa * fb > 0 && tries < 16; ++tries) {
      a = std::max(prev + 1e-6, a - 0.25);
      b += 0.25;
      fa = J(a);
      fb = J(b);
    }
    if (fa * fb > 0) {
      std::ostringstream msg;
      msg << "bessel_zeros: no sign change bracketing zero " << m << " of J_" << order.nu << " near " << g;
      throw std::runtime_error(msg.str());
    }
    for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
      double mid = 0.5 * (a + b);
      double fm = J(mid);
      if (fm == 0) { a = b = mid; break; }
      if ((fm < 0) == (fa < 0)) { a = mid; fa = fm; } else { b = mid; }
    }
    double z = 0.5 * (a + b);
    if (!zeros.empty() && z < prev + 1.0) throw std::runtime_error("bessel_zeros: zeros out of order");
    zeros.push_back(z);
    prev = z;
  }
  return zeros;
}

namespace {

struct LateralMode {
  std::vector<int> l;
  double mu;
};

void finish_pairs(CylinderEigenSystem& sys, std::vector<LateralMode> lateral, double Lambda, int count) {
  std::sort(lateral.begin(), lateral.end(), [](const LateralMode& a, const LateralMode& b) {
    return a.mu != b.mu ? a.mu < b.mu : a.l < b.l;
  });
  BesselOrder order = BesselOrder::from_s(sys.s);
  int m_max = static_cast<int>(std::ceil(std::sqrt(Lambda) * sys.R / M_PI)) + 2;
  auto zeros = bessel_zeros(order, m_max);
  std::vector<double> gammas(m_max);
  for (int m = 0; m < m_max; ++m) gammas[m] = std::sqrt(2.0) / (sys.R * std::abs(bessel_j(1.0 - sys.s, zeros[m])));
  sys.pairs.clear();
  for (std::size_t r = 0; r < lateral.size(); ++r) {
    for (int m = 0; m < m_max; ++m) {
      double lam = lateral[r].mu + zeros[m] * zeros[m] / (sys.R * sys.R);
      if (lam > Lambda) break;
      EigenPair p;
      p.l = lateral[r].l;
      p.l_rank = static_cast<long>(r) + 1;
      p.m = m + 1;
      p.mu = lateral[r].mu;
      p.j = zeros[m];
      p.gamma = gammas[m];
      p.lambda = lam;
      sys.pairs.push_back(p);
    }
  }
  std::sort(sys.pairs.begin(), sys.pairs.end(), [](const EigenPair& a, const EigenPair& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    if (a.l_rank != b.l_rank) return a.l_rank < b.l_rank;
    return a.m < b.m;
  });
  if (static_cast<int>(sys.pairs.size()) > count) sys.pairs.resize(count);
}

long count_below(const std::vector<double>& mus, double R, double first_zero, double Lambda) {
  // cheap lower estimate used only to grow Lambda: zeros are spaced by at least ~π
  long c = 0;
  for (double mu : mus) {
    double rem = Lambda - mu - first_zero * first_zero / (R * R);
    if (rem < 0) continue;
    c += 1 + static_cast<long>(std::floor(std::sqrt(rem) * R / M_PI * 0.5));
  }
  return c;
}

}  // namespace

CylinderEigenSystem build_eigensystem(const std::vector<double>& dims, double s, double R, int count) {
  if (dims.empty()) throw std::invalid_argument("build_eigensystem: empty rectangle");
  for (double a : dims)
    if (!(a > 0)) throw std::invalid_argument("build_eigensystem: rectangle sides must be positive");
  if (!(R > 0)) throw std::invalid_argument("build_eigensystem: R must be positive");
  if (count < 1) throw std::invalid_argument("build_eigensystem: count must be >= 1");
  CylinderEigenSystem sys;
  sys.rectangle = true;
  sys.dims = dims;
  sys.s = s;
  sys.R = R;
  const int n = static_cast<int>(dims.size());
  double j1 = bessel_zeros(BesselOrder::from_s(s), 1)[0];

  double Lambda = 50.0;
  for (int grow = 0; grow < 200; ++grow) {
    std::vector<LateralMode> lateral;
    std::vector<int> pmax(n);
    long box = 1;
    for (int i = 0; i < n; ++i) {
      pmax[i] = std::max(1, static_cast<int>(std::floor(dims[i] * std::sqrt(Lambda) / M_PI)));
      box *= pmax[i];
    }
    std::vector<int> p(n);
    for (long r = 0; r < box; ++r) {
      long rem = r;
      double mu = 0;
      for (int i = 0; i < n; ++i) {
        p[i] = 1 + static_cast<int>(rem % pmax[i]);
        rem /= pmax[i];
        mu += std::pow(M_PI * p[i] / dims[i], 2);
      }
      if (mu <= Lambda) lateral.push_back({p, mu});
    }
    std::vector<double> mus;
    for (auto& m : lateral) mus.push_back(m.mu);
    if (count_below(mus, R, j1, Lambda) >= count || grow == 199) {
      finish_pairs(sys, lateral, Lambda, count);
      if (sys.count() >= count) return sys;
    }
    Lambda *= 1.3;
  }
  throw std::runtime_error("build_eigensystem: could not reach requested count");
}

CylinderEigenSystem build_eigensystem_mask(const RegionMask& omega, double s, double R, int count) {
  if (!(R > 0)) throw std::invalid_argument("build_eigensystem_mask: R must be positive");
  const LatticeSpec& lat = omega.lattice();
  const Index m = omega.size();
  const int n = lat.n();
  const double h = lat.h();
  Eigen::MatrixXd Lap = Eigen::MatrixXd::Zero(m, m);
  std::vector<int> idx(n);
  for (Index r = 0; r < m; ++r) {
    Index v = omega.nodes()[r];
    Lap(r, r) = 2.0 * n / (h * h);
    lat.multi_index(v, idx.data());
    for (int a = 0; a < n; ++a) {
      for (int d : {-1, 1}) {
        auto nb = idx;
        nb[a] += d;
        if (nb[a] < 0 || nb[a] >= lat.M()) continue;  // Dirichlet outside the box as well
        Index c = omega.position_of(lat.linear(nb));
        if (c >= 0) Lap(r, c) = -1.0 / (h * h);
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lap);
  CylinderEigenSystem sys;
  sys.rectangle = false;
  sys.omega = omega;
  sys.s = s;
  sys.R = R;
  sys.lateral_modes = es.eigenvectors() / std::sqrt(lat.cell_volume());
  const Eigen::VectorXd& mu = es.eigenvalues();
  double mu_max = mu(m - 1);
  double Lambda = 50.0;
  double j1 = bessel_zeros(BesselOrder::from_s(s), 1)[0];
  std::vector<double> mus(mu.data(), mu.data() + m);
  for (int grow = 0; grow < 200; ++grow) {
    if (count_below(mus, R, j1, Lambda) >= count) {
      if (Lambda > mu_max)
        throw std::runtime_error("build_eigensystem_mask: count exceeds the available discrete lateral modes");
      std::vector<LateralMode> lateral;
      for (Index r = 0; r < m; ++r)
        if (mu(r) <= Lambda) lateral.push_back({{static_cast<int>(r) + 1}, mu(r)});
      finish_pairs(sys, lateral, Lambda, count);
      if (sys.count() >= count) return sys;
    }
    Lambda *= 1.3;
  }
  throw std::runtime_error("build_eigensystem_mask: could not reach requested count");
}

std::string CylinderEigenSystem::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "k,l1,l2,m,mu,j,gamma,lambda\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    os << k + 1 << ',' << p.l[0] << ',' << (p.l.size() > 1 ? p.l[1] : 0) << ',' << p.m << ',' << p.mu << ','
       << p.j << ',' << p.gamma << ',' << p.lambda << '\n';
  }
  return os.str();
}

double eigenfunction_value(const CylinderEigenSystem& sys, int k, const Eigen::VectorXd& x, double z) {
  if (k < 0 || k >= sys.count()) throw std::out_of_range("eigenfunction_value: k out of range");
  const EigenPair& p = sys.pairs[k];
  double lateral = 1.0;
  if (sys.rectangle) {
    for (std::size_t i = 0; i < sys.dims.size(); ++i)
      lateral *= std::sqrt(2.0 / sys.dims[i]) * std::sin(p.l[i] * M_PI * x(i) / sys.dims[i]);
  } else {
    const LatticeSpec& lat = sys.omega->lattice();
    std::vector<int> idx(lat.n());
    for (int a = 0; a < lat.n(); ++a)
      idx[a] = static_cast<int>(std::lround((x(a) + 0.5 * lat.box_len()) / lat.h() - 0.5));
    Index r = sys.omega->position_of(lat.linear(idx));
    if (r < 0) return 0.0;
    lateral = sys.lateral_modes(r, p.l[0] - 1);
  }
  double zpart;
  if (z <= 0) {
    zpart = p.gamma * std::pow(p.j / (2.0 * sys.R), -sys.s) / std::tgamma(1.0 - sys.s);
  } else {
    zpart = p.gamma * std::pow(z, sys.s) * bessel_j(-sys.s, p.j * z / sys.R);
  }
  return lateral * zpart;
}

long weyl_count(const CylinderEigenSystem& sys, double N) {
  if (sys.pairs.empty() || sys.pairs.back().lambda < N)
    throw std::runtime_error("weyl_count: system too small for the requested level");
  return static_cast<long>(std::upper_bound(sys.pairs.begin(), sys.pairs.end(), N,
                                            [](double v, const EigenPair& p) { return v < p.lambda; }) -
                           sys.pairs.begin());
}

namespace {

// #{(l, m) ∈ ℕ^2 : l^{2/n} + m^2 <= X}
long lm_count(double X, int n) {
  long c = 0;
  for (long m = 1; m * m < X; ++m) c += static_cast<long>(std::floor(std::pow(X - double(m * m), 0.5 * n)));
  return c;
}

}  // namespace

WeylBand weyl_band(const CylinderEigenSystem& sys, double N) {
  WeylBand band;
  band.count = weyl_count(sys, N);
  int n = sys.rectangle ? static_cast<int>(sys.dims.size()) : sys.omega->lattice().n();
  band.a = std::numeric_limits<double>::infinity();
  band.b = 0;
  for (const auto& p : sys.pairs) {
    double r = p.lambda / (std::pow(double(p.l_rank), 2.0 / n) + double(p.m) * p.m);
    band.a = std::min(band.a, r);
    band.b = std::max(band.b, r);
  }
  double scale = std::pow(N, 0.5 * (n + 1));
  band.lower = lm_count(N / band.b, n) / scale;
  band.upper = lm_count(N / band.a, n) / scale;
  return band;
}

EmbeddingSpectrum embedding_singular_values(const CylinderEigenSystem& sys, int count, double k_lo, double k_hi) {
  if (count > sys.count()) throw std::invalid_argument("embedding_singular_values: count exceeds system size");
  EmbeddingSpectrum out;
  out.sigmas.resize(count);
  for (int k = 0; k < count; ++k) out.sigmas[k] = 1.0 / std::sqrt(1.0 + sys.pairs[k].lambda);
  std::vector<double> ks, vs;
  for (int k = 1; k <= count; ++k)
    if (k >= k_lo && k <= k_hi) {
      ks.push_back(k);
      vs.push_back(out.sigmas[k - 1]);
    }
  FitOptions opts;
  opts.drop_front = 0;
  opts.drop_back = 0;
  out.fit = fit_decay(ks, vs, DecayModel::Power, opts);
  return out;
}

double weyl_slope(const CylinderEigenSystem& sys, double k_lo, double k_hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int k = 1; k <= sys.count(); ++k) {
    if (k < k_lo || k > k_hi) continue;
    double x = std::log(double(k)), y = std::log(sys.pairs[k - 1].lambda);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++cnt;
  }
  if (cnt < 2) throw std::invalid_argument("weyl_slope: fewer than two indices in range");
  return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

namespace {

// Vertical face weights ∫_{z_j}^{z_{j+1}} z^{1-2s} dz / Δz^2 and dual masses ∫_{dual j} z^{1-2s} dz.
void vertical_weights(const std::vector<double>& z, double s, std::vector<double>& w, std::vector<double>& mass) {
  const int K = static_cast<int>(z.size()) - 1;
  const double e = 2.0 - 2.0 * s;
  auto prim = [&](double t) { return std::pow(t, e) / e; };
  w.assign(K, 0.0);
  mass.assign(K + 1, 0.0);
  for (int j = 0; j < K; ++j) {
    double dz = z[j + 1] - z[j];
    w[j] = (prim(z[j + 1]) - prim(z[j])) / (dz * dz);
    double mid = 0.5 * (z[j] + z[j + 1]);
    mass[j] += prim(mid) - prim(z[j]);
    mass[j + 1] += prim(z[j + 1]) - prim(mid);
  }
}

}  // namespace

double eigenfunction_residual(const CylinderEigenSystem& sys, int k, int P, int K) {
  if (!sys.rectangle) throw std::invalid_argument("eigenfunction_residual: rectangle mode only");
  if (k < 0 || k >= sys.count()) throw std::out_of_range("eigenfunction_residual: k out of range");
  const EigenPair& p = sys.pairs[k];
  double mu_h = 0;
  for (std::size_t i = 0; i < sys.dims.size(); ++i) {
    double h = sys.dims[i] / (P + 1);
    mu_h += 4.0 / (h * h) * std::pow(std::sin(p.l[i] * M_PI * h / (2.0 * sys.dims[i])), 2);
  }
  auto z = graded_heights(sys.R, K, sys.s);
  std::vector<double> w, mass;
  vertical_weights(z, sys.s, w, mass);
  std::vector<double> phi(K + 1);
  for (int j = 0; j <= K; ++j) {
    phi[j] = j == 0 ? p.gamma * std::pow(p.j / (2.0 * sys.R), -sys.s) / std::tgamma(1.0 - sys.s)
                    : p.gamma * std::pow(z[j], sys.s) * bessel_j(-sys.s, p.j * z[j] / sys.R);
  }
  phi[K] = 0.0;
  double num = 0, den = 0;
  for (int j = 0; j < K; ++j) {
    double Aphi = w[j] * (phi[j] - phi[j + 1]);
    if (j > 0) Aphi += w[j - 1] * (phi[j] - phi[j - 1]);
    double r = (mu_h - p.lambda) * mass[j] * phi[j] + Aphi;
    num += r * r / mass[j];
    den += mass[j] * phi[j] * phi[j];
  }
  return std::sqrt(num) / (p.lambda * std::sqrt(den));
}

std::vector<double> project_onto_eigensystem(const CylinderEigenSystem& sys,
                                             const std::function<double(const Eigen::VectorXd&, double)>& u,
                                             int count, int lateral_order, int z_order) {
  if (!sys.rectangle) throw std::invalid_argument("project_onto_eigensystem: rectangle mode only");
  if (count > sys.count()) throw std::invalid_argument("project_onto_eigensystem: count exceeds system size");
  const int n = static_cast<int>(sys.dims.size());
  const double s = sys.s, R = sys.R;
  // z = R t^{1/(1-s)} turns z^{1-2s} dz into R^{2-2s} t dt / (1-s)
  GaussRule zr = gauss_legendre(z_order, 0.0, 1.0);
  std::vector<double> zn(z_order), zw(z_order);
  for (int q = 0; q < z_order; ++q) {
    double t = zr.nodes(q);
    zn[q] = R * std::pow(t, 1.0 / (1.0 - s));
    zw[q] = zr.weights(q) * std::pow(R, 2.0 - 2.0 * s) * t / (1.0 - s);
  }
  std::vector<GaussRule> xr;
  for (int i = 0; i < n; ++i) xr.push_back(gauss_legendre(lateral_order, 0.0, sys.dims[i]));
  Index nx = 1;
  for (int i = 0; i < n; ++i) nx *= lateral_order;
  std::vector<Eigen::VectorXd> xpts(nx);
  Eigen::VectorXd xw(nx);
  for (Index r = 0; r < nx; ++r) {
    Eigen::VectorXd x(n);
    double wt = 1.0;
    Index rem = r;
    for (int i = 0; i < n; ++i) {
      int qi = static_cast<int>(rem % lateral_order);
      rem /= lateral_order;
      x(i) = xr[i].nodes(qi);
      wt *= xr[i].weights(qi);
    }
    xpts[r] = x;
    xw(r) = wt;
  }
  Eigen::MatrixXd U(nx, z_order);
  for (Index r = 0; r < nx; ++r)
    for (int q = 0; q < z_order; ++q) U(r, q) = xw(r) * zw[q] * u(xpts[r], zn[q]);

  std::map<std::vector<int>, Eigen::VectorXd> lateral_cache;  // Σ_x U(x, z) e_l(x)
  std::map<int, Eigen::VectorXd> z_cache;
  std::vector<double> out(count);
  for (int k = 0; k < count; ++k) {
    const EigenPair& p = sys.pairs[k];
    auto it = lateral_cache.find(p.l);
    if (it == lateral_cache.end()) {
      Eigen::VectorXd e(nx);
      for (Index r = 0; r < nx; ++r) {
        double v = 1.0;
        for (int i = 0; i < n; ++i)
          v *= std::sqrt(2.0 / sys.dims[i]) * std::sin(p.l[i] * M_PI * xpts[r](i) / sys.dims[i]);
        e(r) = v;
      }
      it = lateral_cache.emplace(p.l, U.transpose() * e).first;
    }
    auto zt = z_cache.find(p.m);
    if (zt == z_cache.end()) {
      Eigen::VectorXd phi(z_order);
      for (int q = 0; q < z_order; ++q) phi(q) = p.gamma * std::pow(zn[q], s) * bessel_j(-s, p.j * zn[q] / R);
      zt = z_cache.emplace(p.m, phi).first;
    }
    out[k] = it->second.dot(zt->second);
  }
  return out;
}

std::vector<double> graded_heights(double Z, int K, double s, double Z_far, double growth) {
  if (!(Z > 0) || K < 1) throw std::invalid_argument("graded_heights: need Z > 0 and K >= 1");
  std::vector<double> z(K + 1);
  double p = 1.0 / (1.0 - s + 0.1);
  for (int j = 0; j <= K; ++j) z[j] = Z * std::pow(double(j) / K, p);
  z[K] = Z;
  if (Z_far > Z) {
    if (!(growth > 1)) throw std::invalid_argument("graded_heights: growth factor must exceed 1");
    double dz = z[K] - z[K - 1];
    while (z.back() < Z_far) {
      dz *= growth;
      z.push_back(std::min(Z_far, z.back() + dz));
      if (Z_far - z.back() < 0.5 * dz) z.back() = Z_far;
    }
  }
  return z;
}

CylinderGrid make_cylinder_grid(const LatticeSpec& lateral, double s, double Z, int K,
                                const std::vector<Eigen::MatrixXd>& metric, double ellipticity, double Z_far) {
  if (!(s > 0 && s < 1)) throw std::invalid_argument("cylinder grid: s must lie in (0, 1)");
  CylinderGrid g;
  g.lateral = lateral;
  g.s = s;
  g.z = graded_heights(Z, K, s, Z_far);
  const int n = lateral.n();
  if (metric.empty()) {
    g.metric = {Eigen::MatrixXd::Identity(n, n)};
  } else {
    if (metric.size() != 1 && static_cast<Index>(metric.size()) != lateral.size())
      throw std::invalid_argument("cylinder grid: metric must be constant or given per lateral cell");
    g.metric = metric;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (const auto& a : g.metric) {
    if (a.rows() != n || a.cols() != n) throw std::invalid_argument("cylinder grid: metric has wrong size");
    if ((a - a.transpose()).norm() > 1e-12 * a.norm()) throw std::invalid_argument("cylinder grid: metric not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  double lam = std::min(lo, 1.0 / hi);
  if (!(lam > 0)) throw std::invalid_argument("cylinder grid: metric not positive definite");
  if (ellipticity > 0 && lam < ellipticity)
    throw std::invalid_argument("cylinder grid: metric eigenvalues leave [lambda, 1/lambda]");
  g.ellipticity = ellipticity > 0 ? ellipticity : lam;
  g.centre_weights.resize(g.K());
  for (int j = 0; j < g.K(); ++j) g.centre_weights(j) = std::pow(0.5 * (g.z[j] + g.z[j + 1]), 1.0 - 2.0 * s);
  return g;
}

double cs_constant_closed_form(double s) { return std::tgamma(s) / (std::pow(2.0, 1.0 - 2.0 * s) * std::tgamma(1.0 - s)); }

namespace {

// Discrete single-mode profile with φ_0 = 1, φ_K = 0 (Thomas algorithm on the interior nodes).
std::vector<double> mode_profile(const std::vector<double>& w, const std::vector<double>& mass, double xi2) {
  const int K = static_cast<int>(w.size());
  std::vector<double> phi(K + 1, 0.0);
  phi[0] = 1.0;
  const int m = K - 1;
  if (m < 1) return phi;
  std::vector<double> diag(m), lower(m), upper(m), rhs(m, 0.0);
  for (int i = 0; i < m; ++i) {
    int j = i + 1;
    diag[i] = w[j - 1] + w[j] + xi2 * mass[j];
    lower[i] = -w[j - 1];
    upper[i] = -w[j];
  }
  rhs[0] = w[0];
  for (int i = 1; i < m; ++i) {
    double f = lower[i] / diag[i - 1];
    diag[i] -= f * upper[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  phi[m] = rhs[m - 1] / diag[m - 1];
  for (int i = m - 2; i >= 0; --i) phi[i + 1] = (rhs[i] - upper[i] * phi[i + 2]) / diag[i];
  return phi;
}

// flux = φ^T A φ for the minimizer; the energy sum avoids the cancellation in 1 - φ_1
double profile_energy(const std::vector<double>& w, const std::vector<double>& mass, double xi2,
                      const std::vector<double>& phi) {
  double e = 0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double d = phi[j] - phi[j + 1];
    e += w[j] * d * d + xi2 * mass[j] * phi[j] * phi[j];
  }
  return e;
}

}  // namespace

double extension_mode_flux(const std::vector<double>& z, double s, double xi2) {
  std::vector<double> w, mass;
  vertical_weights(z, s, w, mass);
  return profile_energy(w, mass, xi2, mode_profile(w, mass, xi2));
}

double calibrate_cs(double s) {
  static std::map<double, double> cache;
  auto it = cache.find(s);
  if (it != cache.end()) return it->second;
  // geometric mesh: resolves z^{2s} at the bottom and exp(-z) decay up to Z = 40
  const int K = 4000;
  std::vector<double> z(K + 1);
  double z1 = 1e-9, Z = 40.0;
  double ratio = std::pow(Z / z1, 1.0 / (K - 1));
  z[0] = 0;
  for (int j = 1; j <= K; ++j) z[j] = z1 * std::pow(ratio, j - 1);
  z[K] = Z;
  double flux = extension_mode_flux(z, s, 1.0);
  double c = 1.0 / flux;
  cache[s] = c;
  return c;
}

namespace {

// Local lateral cell matrix h^{n-2}[Σ_i a_ii mean_e(d_i^2) + Σ_{i≠j} a_ij mean(d_i) mean(d_j)] over 2^n corners.
Eigen::MatrixXd cell_matrix(const Eigen::MatrixXd& a, double h) {
  const int n = static_cast<int>(a.rows());
  const int C = 1 << n;
  const int edges = C / 2;
  Eigen::MatrixXd Kl = Eigen::MatrixXd::Zero(C, C);
  std::vector<Eigen::VectorXd> mean(n, Eigen::VectorXd::Zero(C));
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < C; ++c) {
      if (c & (1 << i)) continue;
      Eigen::VectorXd d = Eigen::VectorXd::Zero(C);
      d(c | (1 << i)) = 1.0;
      d(c) = -1.0;
      Kl += a(i, i) / edges * d * d.transpose();
      mean[i] += d / edges;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) Kl += a(i, j) * mean[i] * mean[j].transpose();
  return std::pow(h, n - 2) * Kl;
}

std::vector<Index> cell_corners(const LatticeSpec& lat, Index lower) {
  const int n = lat.n();
  std::vector<int> idx(n), c(n);
  lat.multi_index(lower, idx.data());
  std::vector<Index> out(1 << n);
  for (int k = 0; k < (1 << n); ++k) {
    for (int a = 0; a < n; ++a) c[a] = idx[a] + ((k >> a) & 1);
    out[k] = lat.linear(c);
  }
  return out;
}

}  // namespace

Eigen::VectorXd lateral_symbol(const CylinderGrid& grid) {
  if (!grid.constant_metric()) throw std::invalid_argument("lateral_symbol: metric must be constant");
  const LatticeSpec& lat = grid.lateral;
  const int n = lat.n();
  const Eigen::MatrixXd Kl = cell_matrix(grid.metric[0], lat.h());
  const int C = 1 << n;
  Eigen::VectorXd out(lat.size());
  std::vector<int> idx(n);
  Eigen::VectorXcd v(C);
  for (Index f = 0; f < lat.size(); ++f) {
    lat.multi_index(f, idx.data());
    for (int c = 0; c < C; ++c) {
      double phase = 0;
      for (int a = 0; a < n; ++a)
        if ((c >> a) & 1) phase += lat.frequency(idx[a]) * lat.h();
      v(c) = std::polar(1.0, phase);
    }
    out(f) = std::max(0.0, (v.adjoint() * Kl * v)(0).real() / lat.cell_volume());
  }
  return out;
}

Eigen::VectorXd extension_symbol(const CylinderGrid& grid, double c_s) {
  Eigen::VectorXd lam = lateral_symbol(grid);
  std::vector<double> w, mass;
  vertical_weights(grid.z, grid.s, w, mass);
  std::map<double, double> memo;
  Eigen::VectorXd out(lam.size());
  for (Index v = 0; v < lam.size(); ++v) {
    auto it = memo.find(lam(v));
    if (it == memo.end())
      it = memo.emplace(lam(v), c_s * profile_energy(w, mass, lam(v), mode_profile(w, mass, lam(v)))).first;
    out(v) = it->second;
  }
  return out;
}

Eigen::SparseMatrix<double> extension_energy_matrix(const CylinderGrid& grid) {
  const LatticeSpec& lat = grid.lateral;
  const Index N = lat.size();
  const int K = grid.K();
  const double hn = lat.cell_volume();
  std::vector<double> w, mass;
  vertical_weights(grid.z, grid.s, w, mass);
  std::vector<Eigen::MatrixXd> local;
  for (const auto& a : grid.metric) local.push_back(cell_matrix(a, lat.h()));
  const int C = 1 << lat.n();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(N) * (K + 1) * (C * C + 2));
  for (Index cell = 0; cell < N; ++cell) {
    auto corners = cell_corners(lat, cell);
    const Eigen::MatrixXd& Kl = local.size() == 1 ? local[0] : local[cell];
    for (int j = 0; j <= K; ++j) {
      Index off = static_cast<Index>(j) * N;
      for (int p = 0; p < C; ++p)
        for (int q = 0; q < C; ++q)
          if (Kl(p, q) != 0) trip.emplace_back(off + corners[p], off + corners[q], mass[j] * Kl(p, q));
    }
  }
  for (int j = 0; j < K; ++j) {
    double c = hn * w[j];
    for (Index x = 0; x < N; ++x) {
      Index a = static_cast<Index>(j) * N + x, b = a + N;
      trip.emplace_back(a, a, c);
      trip.emplace_back(b, b, c);
      trip.emplace_back(a, b, -c);
      trip.emplace_back(b, a, -c);
    }
  }
  Eigen::SparseMatrix<double> A(N * (K + 1), N * (K + 1));
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

double extension_energy(const CylinderGrid& grid, const Eigen::VectorXd& values, const Field& q,
                        const RegionMask& omega, double c_s) {
  Eigen::SparseMatrix<double> A = extension_energy_matrix(grid);
  double e = c_s * values.dot(A * values);
  const double hn = grid.lateral.cell_volume();
  for (Index v : omega.nodes()) e += q.values(v) * values(v) * values(v) * hn;
  return e;
}

namespace {

Eigen::VectorXd solve_sparse(const CylinderGrid& grid, const Eigen::SparseMatrix<double>& A, const Field& f,
                             const Field& q, const RegionMask& omega, double c_s) {
  const LatticeSpec& lat = grid.lateral;
  const Index N = lat.size();
  const int K = grid.K();
  const Index total = N * (K + 1);
  const double hn = lat.cell_volume();

  // free: layers 1..K-1 and the Ω part of the bottom; fixed: rest of the bottom (= f) and the top (= 0)
  std::vector<Index> map(total, -1);
  Index nf = 0;
  for (Index x = 0; x < N; ++x)
    if (omega.contains(x)) map[x] = nf++;
  for (Index g = N; g < N * K; ++g) map[g] = nf++;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(total);
  for (Index x = 0; x < N; ++x)
    if (!omega.contains(x)) fixed(x) = f.values(x);

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf);
  for (int col = 0; col < A.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it) {
      Index r = map[it.row()], c = map[it.col()];
      if (r < 0) continue;
      if (c >= 0) trip.emplace_back(r, c, c_s * it.value());
      else rhs(r) -= c_s * it.value() * fixed(it.col());
    }
  }
  for (Index x : omega.nodes()) trip.emplace_back(map[x], map[x], q.values(x) * hn);
  Eigen::SparseMatrix<double> Aff(nf, nf);
  Aff.setFromTriplets(trip.begin(), trip.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Aff);
  if (solver.info() != Eigen::Success) throw std::runtime_error("solve_extension_fd: factorization failed");
  Eigen::VectorXd uf = solver.solve(rhs);
  if (solver.info() != Eigen::Success || !uf.allFinite())
    throw std::runtime_error("solve_extension_fd: solver breakdown");

  Eigen::VectorXd values = fixed;
  for (Index g = 0; g < total; ++g)
    if (map[g] >= 0) values(g) = uf(map[g]);
  return values;
}

// Constant metric: Schur complement is the multiplier c_s flux_h(λ_a(ξ)); the interior follows mode by mode.
Eigen::VectorXd solve_spectral(const CylinderGrid& grid, const Field& f, const Field& q, const RegionMask& omega,
                               double c_s) {
  const LatticeSpec& lat = grid.lateral;
  const Index N = lat.size();
  const int K = grid.K();
  const double hn = lat.cell_volume();
  Eigen::VectorXd sigma = extension_symbol(grid, c_s);
  Eigen::VectorXd ker = symbol_kernel(lat, sigma);
  Field fext = f;
  for (Index x : omega.nodes()) fext.values(x) = 0.0;
  Field Lf = apply_symbol(fext, sigma);
  const Index m = omega.size();
  Eigen::MatrixXd Aoo(m, m);
  Eigen::VectorXd rhs(m);
  for (Index a = 0; a < m; ++a) {
    Index x = omega.nodes()[a];
    for (Index b = 0; b < m; ++b) Aoo(a, b) = hn * ker(lat.offset_index(x, omega.nodes()[b]));
    Aoo(a, a) += hn * q.values(x);
    rhs(a) = -hn * Lf.values(x);
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Aoo);
  Eigen::VectorXd uo = lu.solve(rhs);
  uo += lu.solve(rhs - Aoo * uo);
  Field u0 = fext;
  for (Index a = 0; a < m; ++a) u0.values(omega.nodes()[a]) = uo(a);

  Eigen::VectorXd lam = lateral_symbol(grid);
  std::vector<double> w, mass;
  vertical_weights(grid.z, grid.s, w, mass);
  std::map<double, std::vector<double>> profiles;
  for (Index v = 0; v < N; ++v)
    if (!profiles.count(lam(v))) profiles.emplace(lam(v), mode_profile(w, mass, lam(v)));
  std::vector<std::complex<double>> hat(N), layer(N);
  for (Index v = 0; v < N; ++v) hat[v] = u0.values(v);
  fft_nd(lat, hat, false);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(N * (K + 1));
  values.head(N) = u0.values;
  for (int j = 1; j < K; ++j) {
    for (Index v = 0; v < N; ++v) layer[v] = hat[v] * profiles.at(lam(v))[j];
    fft_nd(lat, layer, true);
    for (Index v = 0; v < N; ++v) values(static_cast<Index>(j) * N + v) = layer[v].real();
  }
  return values;
}

}  // namespace

ExtensionSolution solve_extension_fd(const CylinderGrid& grid, const Field& f, const Field& q, const RegionMask& omega,
                                     double c_s) {
  const LatticeSpec& lat = grid.lateral;
  if (f.lattice != lat || q.lattice != lat || omega.lattice() != lat)
    throw std::invalid_argument("solve_extension_fd: lattice mismatch");
  const Index N = lat.size();
  const double hn = lat.cell_volume();
  Eigen::SparseMatrix<double> A = extension_energy_matrix(grid);
  ExtensionSolution sol;
  sol.grid = grid;
  sol.values = grid.constant_metric() ? solve_spectral(grid, f, q, omega, c_s) : solve_sparse(grid, A, f, q, omega, c_s);
  if (!sol.values.allFinite()) throw std::runtime_error("solve_extension_fd: solver breakdown");
  Eigen::VectorXd Au = A * sol.values;
  sol.trace = Field{lat, sol.values.head(N)};
  sol.neumann = Field{lat, c_s * Au.head(N) / hn};
  sol.energy = c_s * sol.values.dot(Au);
  for (Index x : omega.nodes()) sol.energy += q.values(x) * sol.values(x) * sol.values(x) * hn;

  // relative weight of the discarded z > Z part: flux of the constant mode against the first nonzero mode
  double xi1 = 2.0 * M_PI / lat.box_len();
  double lam1 = 4.0 / (lat.h() * lat.h()) * std::pow(std::sin(0.5 * xi1 * lat.h()), 2);
  sol.tail_estimate = extension_mode_flux(grid.z, grid.s, 0.0) / extension_mode_flux(grid.z, grid.s, lam1);
  if (sol.tail_estimate > 0.05) {
    std::ostringstream msg;
    msg << "extension height Z = " << grid.z.back() << " leaves a truncation tail of " << sol.tail_estimate;
    sol.warnings.push_back(msg.str());
  }
  return sol;
}

Eigen::MatrixXd extension_form_matrix(const CylinderGrid& grid, const std::vector<Index>& nodes, double c_s) {
  const LatticeSpec& lat = grid.lateral;
  if (grid.constant_metric()) {
    Eigen::VectorXd ker = symbol_kernel(lat, extension_symbol(grid, c_s));
    const Index m = static_cast<Index>(nodes.size());
    Eigen::MatrixXd S(m, m);
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b) S(a, b) = lat.cell_volume() * ker(lat.offset_index(nodes[a], nodes[b]));
    return 0.5 * (S + S.transpose());
  }
  const Index N = lat.size();
  const int K = grid.K();
  if (K < 2) throw std::invalid_argument("extension_form_matrix: need K >= 2");
  Eigen::SparseMatrix<double> A = extension_energy_matrix(grid);
  const Index ni = N * (K - 1);
  Eigen::SparseMatrix<double> Aii = A.block(N, N, ni, ni);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Aii);
  if (solver.info() != Eigen::Success) throw std::runtime_error("extension_form_matrix: factorization failed");
  std::vector<double> w, mass;
  vertical_weights(grid.z, grid.s, w, mass);
  const double coupling = lat.cell_volume() * w[0];
  const Index m = static_cast<Index>(nodes.size());
  Eigen::MatrixXd S(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) S(a, b) = A.coeff(nodes[a], nodes[b]);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(ni);
  for (Index b = 0; b < m; ++b) {
    e.setZero();
    e(nodes[b]) = 1.0;  // layer-1 copy of node b sits at offset nodes[b] in the interior block
    Eigen::VectorXd x = solver.solve(e);
    for (Index a = 0; a < m; ++a) S(a, b) -= coupling * coupling * x(nodes[a]);
  }
  S = 0.5 * (S + S.transpose()).eval();
  return c_s * S;
}

CaccioppoliReport caccioppoli_verify(const ExtensionSolution& sol, const Eigen::VectorXd& centre, double r1, double r2,
                                     const RegionMask& omega, double R) {
  const CylinderGrid& grid = sol.grid;
  const LatticeSpec& lat = grid.lateral;
  const int n = lat.n();
  if (centre.size() != n + 1) throw std::invalid_argument("caccioppoli_verify: centre must have n + 1 coordinates");
  if (!(r1 > 0 && r2 > r1)) throw std::invalid_argument("caccioppoli_verify: need 0 < r1 < r2");
  if (R > grid.z.back() || centre(n) < 0 || centre(n) + r2 > R)
    throw std::invalid_argument("caccioppoli_verify: outer ball leaves the cylinder in z");
  const Index N = lat.size();
  auto lateral_offset = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd d = p - centre.head(n);
    for (int a = 0; a < n; ++a) d(a) -= lat.box_len() * std::round(d(a) / lat.box_len());
    return d;
  };
  // lateral footprint of the outer ball must stay inside Ω
  for (Index x = 0; x < N; ++x)
    if (lateral_offset(lat.position(x)).norm() <= r2 + 0.5 * lat.h() && !omega.contains(x))
      throw std::invalid_argument("caccioppoli_verify: outer ball leaves the cylinder over Ω");

  const int K = grid.K();
  std::vector<double> w, mass;
  vertical_weights(grid.z, grid.s, w, mass);
  std::vector<Eigen::MatrixXd> local;
  for (const auto& a : grid.metric) local.push_back(cell_matrix(a, lat.h()));
  const double hn = lat.cell_volume();

  CaccioppoliReport rep;
  rep.centre = centre;
  rep.r1 = r1;
  rep.r2 = r2;
  Eigen::VectorXd half = Eigen::VectorXd::Constant(n, 0.5 * lat.h());
  for (Index cell = 0; cell < N; ++cell) {
    Eigen::VectorXd d = lateral_offset(lat.position(cell) + half);
    double d2 = d.squaredNorm();
    if (d2 > r1 * r1) continue;
    auto corners = cell_corners(lat, cell);
    const Eigen::MatrixXd& Kl = local.size() == 1 ? local[0] : local[cell];
    Eigen::VectorXd u(corners.size());
    for (int j = 0; j <= K; ++j) {
      double dz = grid.z[j] - centre(n);
      if (d2 + dz * dz > r1 * r1) continue;
      for (std::size_t c = 0; c < corners.size(); ++c) u(c) = sol.at(j, corners[c]);
      rep.lhs += mass[j] * u.dot(Kl * u);
    }
  }
  for (Index x = 0; x < N; ++x) {
    double d2 = lateral_offset(lat.position(x)).squaredNorm();
    if (d2 > r2 * r2) continue;
    for (int j = 0; j <= K; ++j) {
      double dz = grid.z[j] - centre(n);
      if (d2 + dz * dz <= r2 * r2) rep.rhs += mass[j] * hn * sol.at(j, x) * sol.at(j, x);
      if (j < K) {
        double dm = 0.5 * (grid.z[j] + grid.z[j + 1]) - centre(n);
        if (d2 <= r1 * r1 && d2 + dm * dm <= r1 * r1) {
          double du = sol.at(j + 1, x) - sol.at(j, x);
          rep.lhs += hn * w[j] * du * du;
        }
      }
    }
  }
  rep.constant = rep.rhs > 0 ? rep.lhs * (r2 - r1) * (r2 - r1) / rep.rhs : 0.0;
  return rep;
}

}  // namespace fraclab
