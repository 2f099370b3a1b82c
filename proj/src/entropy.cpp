#include "fraclab/entropy.hpp"

#include "fraclab/norms.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace fraclab {

std::string to_string(DecayModel m) { return m == DecayModel::StretchedExp ? "stretched-exp" : "power"; }

double DecayFit::predict(double k) const {
  if (model == DecayModel::StretchedExp) return C * std::exp(-c * std::pow(k, mu));
  return C * std::pow(k, -alpha);
}

std::string DecayFit::to_json() const {
  nlohmann::json j;
  j["model"] = to_string(model);
  if (model == DecayModel::StretchedExp)
    j["params"] = {{"C", C}, {"c", c}, {"mu", mu}};
  else
    j["params"] = {{"C", C}, {"alpha", alpha}};
  j["k_range"] = {k_lo, k_hi};
  j["residual"] = residual;
  return j.dump();
}

namespace {

struct LinFit {
  double a = 0, b = 0, rms = 0;
};

// Least squares y ≈ a + b t.
LinFit linear_fit(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double stt = 0, sty = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  LinFit f;
  f.b = stt > 0 ? sty / stt : 0;
  f.a = my - f.b * mt;
  double ss = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double r = y[i] - f.a - f.b * t[i];
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

LinFit stretched_at(const std::vector<double>& k, const std::vector<double>& ly, double mu) {
  std::vector<double> t(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) t[i] = std::pow(k[i], mu);
  return linear_fit(t, ly);
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& ks_in, const std::vector<double>& values, DecayModel model,
                   const FitOptions& opts) {
  if (ks_in.size() != values.size()) throw std::invalid_argument("fit_decay: size mismatch");
  const std::size_t N = values.size();
  const std::size_t lo = static_cast<std::size_t>(std::floor(opts.drop_front * N));
  const std::size_t cut = static_cast<std::size_t>(std::floor(opts.drop_back * N));
  const std::size_t hi = N > cut ? N - cut : 0;
  if (hi <= lo || static_cast<int>(hi - lo) < opts.min_points)
    throw std::invalid_argument("fit_decay: too few points in the fitting window");
  std::vector<double> k, ly;
  for (std::size_t i = lo; i < hi; ++i) {
    if (!(values[i] > 0) || !std::isfinite(values[i])) throw std::invalid_argument("fit_decay: values must be positive");
    if (!(ks_in[i] > 0)) throw std::invalid_argument("fit_decay: indices must be positive");
    k.push_back(ks_in[i]);
    ly.push_back(std::log(values[i]));
  }
  const double range = *std::max_element(ly.begin(), ly.end()) - *std::min_element(ly.begin(), ly.end());
  if (!(range > 0)) throw std::invalid_argument("fit_decay: degenerate input (zero variance)");

  DecayFit out;
  out.model = model;
  out.k_lo = k.front();
  out.k_hi = k.back();
  out.points = static_cast<int>(k.size());
  if (model == DecayModel::Power) {
    std::vector<double> t(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) t[i] = std::log(k[i]);
    LinFit f = linear_fit(t, ly);
    out.C = std::exp(f.a);
    out.alpha = -f.b;
    out.residual = f.rms / range;
    return out;
  }

  double mu;
  if (opts.fixed_mu) {
    mu = *opts.fixed_mu;
  } else {
    const int scan = 80;
    const double a0 = std::log(opts.mu_lo), a1 = std::log(opts.mu_hi);
    int best = 0;
    double best_r = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= scan; ++i) {
      double r = stretched_at(k, ly, std::exp(a0 + (a1 - a0) * i / scan)).rms;
      if (r < best_r) best_r = r, best = i;
    }
    double a = a0 + (a1 - a0) * std::max(0, best - 1) / scan;
    double b = a0 + (a1 - a0) * std::min(scan, best + 1) / scan;
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = stretched_at(k, ly, std::exp(x1)).rms, f2 = stretched_at(k, ly, std::exp(x2)).rms;
    for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
      if (f1 < f2) {
        b = x2, x2 = x1, f2 = f1;
        x1 = b - g * (b - a);
        f1 = stretched_at(k, ly, std::exp(x1)).rms;
      } else {
        a = x1, x1 = x2, f1 = f2;
        x2 = a + g * (b - a);
        f2 = stretched_at(k, ly, std::exp(x2)).rms;
      }
    }
    mu = std::exp(0.5 * (a + b));
  }
  LinFit f = stretched_at(k, ly, mu);
  out.mu = mu;
  out.C = std::exp(f.a);
  out.c = -f.b;
  out.residual = f.rms / range;
  if (!std::isfinite(out.C) || !std::isfinite(out.c)) throw std::runtime_error("fit_decay: non-finite parameters");
  return out;
}

DecayFit fit_decay(const std::vector<double>& values, DecayModel model, const FitOptions& opts) {
  std::vector<double> ks(values.size());
  for (std::size_t i = 0; i < ks.size(); ++i) ks[i] = static_cast<double>(i + 1);
  return fit_decay(ks, values, model, opts);
}

DiagonalSeqOp::DiagonalSeqOp(std::vector<double> s, std::string src, std::string dst)
    : sigmas(std::move(s)), source(std::move(src)), target(std::move(dst)) {
  if (sigmas.empty()) throw std::invalid_argument("diagonal operator needs at least one entry");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0)) throw std::invalid_argument("diagonal entries must be positive");
    if (i > 0 && sigmas[i] > sigmas[i - 1]) throw std::invalid_argument("diagonal entries must be nonincreasing");
  }
}

EntropyBand diag_entropy_numbers(const DiagonalSeqOp& op, int k_max) {
  const int N = static_cast<int>(op.sigmas.size());
  if (k_max < 1 || k_max > N) throw std::invalid_argument("diag_entropy_numbers: k_max exceeds truncation length");
  std::vector<double> prefix(N + 1, 0.0);
  for (int m = 1; m <= N; ++m) prefix[m] = prefix[m - 1] + std::log(op.sigmas[m - 1]);
  EntropyBand band;
  band.estimate.resize(k_max);
  band.low.resize(k_max);
  band.high.resize(k_max);
  band.argmax_m.resize(k_max);
  const double ln2 = std::log(2.0);
  for (int k = 1; k <= k_max; ++k) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = 1;
    for (int m = 1; m <= N; ++m) {
      double v = (-(k - 1) * ln2 + prefix[m]) / m;
      if (v > best) best = v, arg = m;
    }
    const double e = std::exp(best);
    band.estimate[k - 1] = e;
    band.low[k - 1] = e / band.c_star;
    band.high[k - 1] = e * band.c_star;
    band.argmax_m[k - 1] = arg;
  }
  return band;
}

double exponent_convert(double mu, ConvertDirection dir) {
  if (dir == ConvertDirection::Forward) {
    if (!(mu > 0)) throw std::invalid_argument("exponent_convert: mu must be positive");
    return mu / (1 + mu);
  }
  if (!(mu > 0) || mu >= 1) throw std::invalid_argument("exponent_convert: inverse needs nu in (0, 1)");
  return mu / (1 - mu);
}

GevreyResult gevrey_norm(const Field& u, const GevreyParams& params) {
  if (params.sigma < 1) throw std::invalid_argument("gevrey_norm: sigma must be >= 1");
  if (params.ell_max < 4) throw std::invalid_argument("gevrey_norm: ell_max must be >= 4");
  const LatticeSpec& lat = u.lattice;
  std::vector<std::complex<double>> data(lat.size());
  for (Index i = 0; i < lat.size(); ++i) data[i] = u.values(i);
  fft_nd(lat, data, false);
  Eigen::VectorXd xi2 = lat.xi_squared();
  Eigen::VectorXd power(lat.size());
  for (Index i = 0; i < lat.size(); ++i) power(i) = std::norm(data[i]);
  const double scale = lat.cell_volume() / static_cast<double>(lat.size());

  GevreyResult out;
  double total = 0;
  Eigen::VectorXd weight = Eigen::VectorXd::Ones(lat.size());
  for (int l = 0; l <= params.ell_max; ++l) {
    if (l > 0) weight.array() *= 1.0 + xi2.array();
    const double hl2 = scale * weight.dot(power);
    const double term = std::exp(-2.0 * l * params.rho - 2.0 * params.sigma * l * std::log(l + 1.0)) * hl2;
    out.terms.push_back(term);
    total += term;
  }
  out.norm = std::sqrt(total);
  out.last_term_ratio = total > 0 ? out.terms.back() / total : 0.0;
  if (out.last_term_ratio > 1e-3) out.warnings.push_back("increase ell_max or rho");
  return out;
}

CompressionBound iterated_compression_bound(double C, double d, int n, long k) {
  if (!(C > 0) || !(d > 0) || n < 1 || k < 1) throw std::invalid_argument("iterated_compression_bound: arguments must be positive");
  if (k < n + 2) throw std::invalid_argument("iterated_compression_bound: k must be >= n + 2");
  const double lc = std::log(C);
  auto logb = [&](long N) {
    const double base = lc + std::log(2.0 * N / d) - std::log(static_cast<double>(k) / N) / (n + 1);
    return lc + N * base;
  };
  CompressionBound out;
  out.log_bound = logb(1);
  for (long N = 2; N <= k; ++N) {
    double v = logb(N);
    if (v < out.log_bound) out.log_bound = v, out.N_opt = N;
  }
  out.bound = std::exp(out.log_bound);
  out.below_one = out.log_bound < 0;
  return out;
}

CompressionSweep compression_sweep(double C, double d, int n, const std::vector<long>& ks) {
  CompressionSweep sw;
  sw.ks = ks;
  std::vector<double> kd, vals, ratios;
  const double mu = 1.0 / (n + 2);
  for (long k : ks) {
    CompressionBound b = iterated_compression_bound(C, d, n, k);
    sw.bounds.push_back(b);
    kd.push_back(static_cast<double>(k));
    vals.push_back(b.bound);
    ratios.push_back(b.N_opt / std::pow(static_cast<double>(k), mu));
  }
  FitOptions opts;
  opts.drop_front = 0;
  opts.drop_back = 0;
  opts.min_points = std::min<int>(8, static_cast<int>(ks.size()));
  sw.fit = fit_decay(kd, vals, DecayModel::StretchedExp, opts);
  FitOptions fixed = opts;
  fixed.fixed_mu = mu;
  DecayFit ff = fit_decay(kd, vals, DecayModel::StretchedExp, fixed);
  sw.envelope_c = ff.c;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ks.size(); ++i)
    worst = std::max(worst, sw.bounds[i].log_bound + ff.c * std::pow(kd[i], mu));
  sw.envelope_C = std::exp(worst);
  const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();
  sw.ratio_spread = (*std::max_element(ratios.begin(), ratios.end()) - *std::min_element(ratios.begin(), ratios.end())) / mean;
  return sw;
}

std::string sweep_table_csv(const std::vector<double>& sigmas, const EntropyBand& band) {
  std::ostringstream os;
  os << "k,sigma_k,e_k_low,e_k_high\n";
  char buf[128];
  for (std::size_t i = 0; i < band.estimate.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i + 1, sigmas.at(i), band.low[i], band.high[i]);
    os << buf;
  }
  return os.str();
}

}  // namespace fraclab
