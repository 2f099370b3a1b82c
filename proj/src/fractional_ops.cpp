#include "fraclab/fractional_ops.hpp"

#include "fraclab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fraclab {

MultiplierOp homogeneous_multiplier(const LatticeSpec& lat, double s) {
  MultiplierOp op{lat, lat.xi_squared(), s, "homogeneous"};
  for (Index i = 0; i < op.symbol.size(); ++i) op.symbol(i) = op.symbol(i) > 0 ? std::pow(op.symbol(i), s) : 0.0;
  return op;
}

MultiplierOp inhomogeneous_multiplier(const LatticeSpec& lat, double s) {
  MultiplierOp op{lat, lat.xi_squared(), s, "inhomogeneous"};
  op.symbol = (1.0 + op.symbol.array()).pow(s).matrix();
  return op;
}

MultiplierOp lattice_laplacian_multiplier(const LatticeSpec& lat, double s) {
  MultiplierOp op{lat, Eigen::VectorXd(lat.size()), s, "lattice-laplacian"};
  const double h = lat.h();
  std::vector<int> idx(lat.n());
  for (Index lin = 0; lin < lat.size(); ++lin) {
    lat.multi_index(lin, idx.data());
    double acc = 0;
    for (int a = 0; a < lat.n(); ++a) {
      double sn = std::sin(0.5 * lat.frequency(idx[a]) * h);
      acc += 4.0 / (h * h) * sn * sn;
    }
    op.symbol(lin) = acc > 0 ? std::pow(acc, s) : 0.0;
  }
  return op;
}

Field frac_laplacian_fourier(const Field& u, const MultiplierOp& op) {
  if (u.lattice != op.lattice) throw std::invalid_argument("frac_laplacian_fourier: lattice mismatch");
  return apply_symbol(u, op.symbol);
}

double fractional_constant(int n, double s) {
  return std::pow(4.0, s) * std::tgamma(0.5 * n + s) / (std::pow(M_PI, 0.5 * n) * std::abs(std::tgamma(-s)));
}

namespace {

// ∫ of |r|^beta over the 3^n - 1 unit cubes surrounding the central unit cube.
double ring_integral(int n, double beta) {
  double acc = 0;
  std::vector<int> j(n, -1);
  Eigen::VectorXd c(n);
  auto fn = [beta](const Eigen::VectorXd& r) { return std::pow(r.norm(), beta); };
  while (true) {
    bool centre = std::all_of(j.begin(), j.end(), [](int v) { return v == 0; });
    if (!centre) {
      for (int a = 0; a < n; ++a) c(a) = j[a];
      acc += cube_integral(fn, c, 0.5, 10, 2);
    }
    int a = 0;
    while (a < n && ++j[a] == 2) j[a++] = -1;
    if (a == n) break;
  }
  return acc;
}

// Σ_j [∫_{cell_j} |r|^alpha - |j|^alpha] over the unit lattice (no discrete term at j = 0).
double unit_midpoint_defect(int n, double s, double far_tail_unit) {
  const double alpha = 2.0 - n - 2.0 * s;
  const double scale = std::pow(3.0, -(n + alpha));
  double acc = scale * ring_integral(n, alpha) / (1.0 - scale);
  const int J = 8;
  auto fn = [alpha](const Eigen::VectorXd& r) { return std::pow(r.norm(), alpha); };
  std::vector<int> j(n, -J);
  Eigen::VectorXd c(n);
  while (true) {
    bool centre = std::all_of(j.begin(), j.end(), [](int v) { return v == 0; });
    if (!centre) {
      for (int a = 0; a < n; ++a) c(a) = j[a];
      acc += cube_integral(fn, c, 0.5, 8, 2) - std::pow(c.norm(), alpha);
    }
    int a = 0;
    while (a < n && ++j[a] == J + 1) j[a++] = -J;
    if (a == n) break;
  }
  // Leading midpoint defect Δf/24 summed over the cells beyond the truncation.
  acc += alpha * (alpha + n - 2) / 24.0 * std::pow(2.0 * J + 1.0, -2.0 * s) * far_tail_unit;
  return acc;
}

struct UnitConstants {
  double far_tail;
  double defect;
};

UnitConstants unit_constants(int n, double s) {
  static std::map<std::pair<int, double>, UnitConstants> cache;
  auto key = std::make_pair(n, s);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  UnitConstants u;
  u.far_tail = ring_integral(n, -n - 2.0 * s) / (1.0 - std::pow(3.0, -2.0 * s));
  u.defect = unit_midpoint_defect(n, s, u.far_tail);
  cache.emplace(key, u);
  return u;
}

}  // namespace

KernelOp make_kernel_op(const LatticeSpec& lat, double s) {
  if (!(s > 0 && s < 1)) throw std::invalid_argument("kernel op: s must lie in (0, 1)");
  KernelOp op;
  op.lattice = lat;
  op.s = s;
  op.c_ns = fractional_constant(lat.n(), s);
  op.image_shells = 2;
  const int P = op.image_shells;
  const double L = lat.box_len();
  op.truncation_radius = (P + 0.5) * L;
  UnitConstants u = unit_constants(lat.n(), s);
  op.far_tail = std::pow(2.0 * op.truncation_radius, -2.0 * s) * u.far_tail;
  op.near_diag = std::pow(lat.h(), 2.0 - 2.0 * s) * u.defect;
  const int n = lat.n();
  const double beta = -n - 2.0 * s;
  const double tail_density = op.far_tail / std::pow(L, n);
  // image offsets k L with |k|_∞ <= P
  std::vector<Eigen::VectorXd> images;
  {
    std::vector<int> k(n, -P);
    while (true) {
      Eigen::VectorXd v(n);
      for (int a = 0; a < n; ++a) v(a) = k[a] * L;
      images.push_back(v);
      int a = 0;
      while (a < n && ++k[a] == P + 1) k[a++] = -P;
      if (a == n) break;
    }
  }
  op.weights.resize(lat.size());
  Eigen::VectorXd r(n);
  for (Index off = 0; off < lat.size(); ++off) {
    Index rem = off;
    for (int a = 0; a < n; ++a) {
      r(a) = lat.signed_offset(static_cast<int>(rem % lat.M())) * lat.h();
      rem /= lat.M();
    }
    double acc = tail_density;
    for (const auto& img : images) {
      double d = (r + img).norm();
      if (d > 0) acc += std::pow(d, beta);
    }
    op.weights(off) = off == 0 ? 0.0 : acc;
  }
  return op;
}

Field pair_operator(const Field& u, const Eigen::VectorXd& a, const KernelOp& op) {
  const LatticeSpec& lat = op.lattice;
  if (u.lattice != lat) throw std::invalid_argument("pair_operator: lattice mismatch");
  const int n = lat.n(), M = lat.M();
  const Index N = lat.size();
  const double hn = lat.cell_volume(), h2 = lat.h() * lat.h();
  std::vector<int> coords(static_cast<std::size_t>(N) * n);
  for (Index x = 0; x < N; ++x) lat.multi_index(x, &coords[static_cast<std::size_t>(x) * n]);
  std::vector<Index> stride(n, 1);
  for (int d = 1; d < n; ++d) stride[d] = stride[d - 1] * M;

  Eigen::VectorXd au = a.cwiseProduct(u.values);
  Eigen::VectorXd out(N);
  for (Index x = 0; x < N; ++x) {
    const int* cx = &coords[static_cast<std::size_t>(x) * n];
    double sum_w = 0, sum_wu = 0;
    for (Index y = 0; y < N; ++y) {
      const int* cy = &coords[static_cast<std::size_t>(y) * n];
      Index off = 0;
      for (int d = 0; d < n; ++d) {
        int diff = cx[d] - cy[d];
        off += (diff < 0 ? diff + M : diff) * stride[d];
      }
      const double w = op.weights(off);
      sum_w += w * a(y);
      sum_wu += w * au(y);
    }
    double lap = 0;
    std::vector<int> nb(cx, cx + n);
    for (int d = 0; d < n; ++d) {
      for (int sgn : {-1, 1}) {
        nb[d] = cx[d] + sgn;
        Index y = lat.linear(nb);
        lap += a(y) * (u.values(x) - u.values(y));
      }
      nb[d] = cx[d];
    }
    out(x) = op.c_ns * (hn * a(x) * (u.values(x) * sum_w - sum_wu) + op.near_diag / (2.0 * n) * a(x) * lap / h2);
  }
  return Field(lat, std::move(out));
}

Field frac_laplacian_kernel(const Field& u, const KernelOp& op) {
  return pair_operator(u, Eigen::VectorXd::Ones(op.lattice.size()), op);
}

HeatTransformOp make_heat_transform(const LatticeSpec& lat, double s, int nodes_per_branch) {
  if (!(s > 0 && s < 1)) throw std::invalid_argument("heat transform: s must lie in (0, 1)");
  HeatTransformOp op;
  op.lattice = lat;
  op.s = s;
  Eigen::VectorXd xi2 = lat.xi_squared();
  double a_min = std::numeric_limits<double>::infinity(), a_max = 0;
  for (Index i = 0; i < xi2.size(); ++i)
    if (xi2(i) > 0) a_min = std::min(a_min, xi2(i)), a_max = std::max(a_max, xi2(i));
  op.t_max = std::max(2.0, 50.0 / a_min);
  op.t_min = 1e-3 / a_max;
  const double gs = std::tgamma(s);
  GaussRule lo = gauss_legendre(nodes_per_branch, std::log(op.t_min), 0.0);
  GaussRule hi = gauss_legendre(nodes_per_branch, 0.0, std::log(op.t_max));
  op.times.resize(2 * nodes_per_branch);
  op.weights.resize(2 * nodes_per_branch);
  for (int i = 0; i < nodes_per_branch; ++i) {
    double t = std::exp(lo.nodes(i));
    op.times(i) = t;
    op.weights(i) = lo.weights(i) * std::pow(t, s) / gs;
    t = std::exp(hi.nodes(i));
    op.times(nodes_per_branch + i) = t;
    op.weights(nodes_per_branch + i) = hi.weights(i) * std::pow(t, s) / gs;
  }
  // ∫_{T}^∞ e^{-ta} t^{s-1} dt <= e^{-Ta} T^{s-1} / a, relative to Γ(s) a^{-s}.
  op.tail_bound = std::exp(-op.t_max * a_min) * std::pow(op.t_max, s - 1) / a_min / (gs * std::pow(a_min, -s));

  op.symbol.resize(lat.size());
  for (Index i = 0; i < xi2.size(); ++i) {
    const double a = xi2(i);
    if (a <= 0) {
      op.symbol(i) = 0;
      continue;
    }
    // Head ∫_0^{t_min} e^{-ta} t^{s-1} dt by its convergent power series (a t_min <= 1e-3).
    double head = 0, term = std::pow(op.t_min, s);
    for (int k = 0; k < 30; ++k) {
      head += term / (k + s);
      term *= -a * op.t_min / (k + 1);
      if (std::abs(term) < 1e-20 * std::abs(head)) break;
    }
    double acc = head / gs;
    for (Index q = 0; q < op.times.size(); ++q) acc += op.weights(q) * std::exp(-op.times(q) * a);
    op.symbol(i) = acc;
  }
  return op;
}

Field heat_transform(const Field& g, const HeatTransformOp& op, double mean_tol) {
  if (g.lattice != op.lattice) throw std::invalid_argument("heat_transform: lattice mismatch");
  const double mean = g.values.sum(), scale = g.values.cwiseAbs().sum();
  if (std::abs(mean) > mean_tol * std::max(scale, 1e-300))
    throw std::invalid_argument("heat_transform: input must have zero mean on the box");
  return apply_symbol(g, op.symbol);
}

namespace {

// DFT over an arbitrary box of sizes dims (axis 0 fastest).
void fft_box(const std::vector<int>& dims, std::vector<std::complex<double>>& data) {
  Eigen::FFT<double> fft;
  Index stride = 1;
  const Index total = static_cast<Index>(data.size());
  for (int m : dims) {
    std::vector<std::complex<double>> line(m), out(m);
    const Index block = stride * m;
    for (Index base = 0; base < total; base += block)
      for (Index off = 0; off < stride; ++off) {
        for (int i = 0; i < m; ++i) line[i] = data[base + off + i * stride];
        fft.fwd(out, line);
        for (int i = 0; i < m; ++i) data[base + off + i * stride] = out[i];
      }
    stride = block;
  }
}

}  // namespace

DecayFit tangential_coefficient_decay(const Field& u, const RegionMask& region) {
  const LatticeSpec& lat = u.lattice;
  const int n = lat.n();
  std::vector<int> lo(n, lat.M()), hi(n, -1), idx(n);
  for (Index v : region.nodes()) {
    lat.multi_index(v, idx.data());
    for (int a = 0; a < n; ++a) lo[a] = std::min(lo[a], idx[a]), hi[a] = std::max(hi[a], idx[a]);
  }
  std::vector<int> dims(n);
  Index total = 1;
  for (int a = 0; a < n; ++a) total *= (dims[a] = hi[a] - lo[a] + 1);
  std::vector<std::complex<double>> data(total);
  std::vector<int> b(n);
  for (Index lin = 0; lin < total; ++lin) {
    Index r = lin;
    double w = 1;
    for (int a = 0; a < n; ++a) {
      b[a] = static_cast<int>(r % dims[a]);
      r /= dims[a];
      const double t = dims[a] > 1 ? 2.0 * b[a] / (dims[a] - 1) - 1.0 : 0.0;
      w *= std::exp(-8.0 * t * t);
      idx[a] = lo[a] + b[a];
    }
    const Index v = lat.linear(idx);
    data[lin] = region.contains(v) ? w * u.values(v) : 0.0;
  }
  fft_box(dims, data);
  std::map<int, double> envelope;
  double peak = 0;
  for (Index lin = 0; lin < total; ++lin) {
    Index r = lin;
    double k2 = 0;
    for (int a = 0; a < n; ++a) {
      int kk = static_cast<int>(r % dims[a]);
      r /= dims[a];
      if (kk >= (dims[a] + 1) / 2) kk -= dims[a];
      k2 += double(kk) * kk;
    }
    const int shell = static_cast<int>(std::lround(std::sqrt(k2)));
    const double mag = std::abs(data[lin]);
    peak = std::max(peak, mag);
    envelope[shell] = std::max(envelope[shell], mag);
  }
  std::vector<double> ks, vals;
  for (auto& [shell, mag] : envelope)
    if (shell >= 1 && mag > 1e-13 * peak) ks.push_back(shell), vals.push_back(mag);
  if (ks.size() < 8) throw std::runtime_error("tangential_coefficient_decay: fewer than 8 usable modes");
  FitOptions opts;
  opts.drop_front = 0;
  opts.drop_back = 0;
  opts.fixed_mu = 1.0;
  return fit_decay(ks, vals, DecayModel::StretchedExp, opts);
}

ConductivityForm make_conductivity_form(const Field& gamma, const Field& q, const RegionMask& omega, double s,
                                        double gamma_lower) {
  if (gamma.lattice != q.lattice || gamma.lattice != omega.lattice())
    throw std::invalid_argument("conductivity form: lattice mismatch");
  ConductivityForm f;
  f.lattice = gamma.lattice;
  f.s = s;
  f.gamma = gamma;
  f.q = q;
  f.omega = omega;
  const double gmin = gamma.values.minCoeff();
  f.gamma_lower = gamma_lower > 0 ? gamma_lower : gmin;
  if (!(gmin > 0) || gmin < f.gamma_lower) throw std::invalid_argument("conductivity form: gamma below its lower bound");
  for (Index x = 0; x < gamma.values.size(); ++x)
    if (!omega.contains(x) && std::abs(gamma.values(x) - 1.0) > 1e-14)
      throw std::invalid_argument("conductivity form: gamma^{1/2} - 1 must be supported in Omega");
  f.sqrt_gamma = gamma.values.cwiseSqrt();
  f.kernel = make_kernel_op(gamma.lattice, s);
  return f;
}

Field conductivity_apply(const Field& u, const ConductivityForm& form) {
  Field out = pair_operator(u, form.sqrt_gamma, form.kernel);
  for (Index x : form.omega.nodes()) out.values(x) += form.q.values(x) * u.values(x);
  return out;
}

double conductivity_bilinear(const Field& u, const Field& v, const ConductivityForm& form) {
  const LatticeSpec& lat = form.lattice;
  if (u.lattice != lat || v.lattice != lat) throw std::invalid_argument("conductivity_bilinear: lattice mismatch");
  const KernelOp& k = form.kernel;
  const Eigen::VectorXd& a = form.sqrt_gamma;
  const int n = lat.n();
  const Index N = lat.size();
  const double hn = lat.cell_volume();
  double pair = 0;
  for (Index x = 0; x < N; ++x)
    for (Index y = x + 1; y < N; ++y) {
      const double du = u.values(y) - u.values(x);
      if (du == 0) continue;
      const double dv = v.values(y) - v.values(x);
      pair += a(x) * a(y) * (du * dv) * k.weights(lat.offset_index(x, y));
    }
  // Unordered pairs counted once, so (c/2) Σ_{x≠y} becomes c Σ_{x<y}.
  double total = k.c_ns * hn * hn * pair;
  double edges = 0;
  std::vector<int> idx(n);
  for (Index x = 0; x < N; ++x) {
    lat.multi_index(x, idx.data());
    for (int d = 0; d < n; ++d) {
      idx[d] += 1;
      Index y = lat.linear(idx);
      idx[d] -= 1;
      edges += a(x) * a(y) * ((u.values(y) - u.values(x)) * (v.values(y) - v.values(x)));
    }
  }
  total += k.c_ns * k.near_diag / (2.0 * n) * edges * std::pow(lat.h(), n - 2);
  for (Index x : form.omega.nodes()) total += form.q.values(x) * (u.values(x) * v.values(x)) * hn;
  return total;
}

}  // namespace fraclab
