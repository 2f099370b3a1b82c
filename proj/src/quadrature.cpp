#include "fraclab/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fraclab {

GaussRule gauss_legendre(int count) {
  if (count < 1) throw std::invalid_argument("gauss_legendre: count must be >= 1");
  GaussRule r;
  r.nodes.resize(count);
  r.weights.resize(count);
  for (int i = 0; i < (count + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (count + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= count; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = count * (x * p1 - p0) / (x * x - 1);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= count; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = count * (x * p1 - p0) / (x * x - 1);
    }
    r.nodes(i) = -x;
    r.nodes(count - 1 - i) = x;
    r.weights(i) = r.weights(count - 1 - i) = 2.0 / ((1 - x * x) * dp * dp);
  }
  return r;
}

GaussRule gauss_legendre(int count, double a, double b) {
  GaussRule r = gauss_legendre(count);
  r.nodes = (0.5 * (b - a)) * (r.nodes.array() + 1.0).matrix() + Eigen::VectorXd::Constant(count, a);
  r.weights *= 0.5 * (b - a);
  return r;
}

double cube_integral(const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& centre,
                     double half, int order, int splits) {
  const int n = static_cast<int>(centre.size());
  const int per_axis = order * splits;
  Eigen::VectorXd pts(per_axis), wts(per_axis);
  const double sub = 2 * half / splits;
  for (int s = 0; s < splits; ++s) {
    GaussRule g = gauss_legendre(order, -half + s * sub, -half + (s + 1) * sub);
    pts.segment(s * order, order) = g.nodes;
    wts.segment(s * order, order) = g.weights;
  }
  std::vector<int> idx(n, 0);
  Eigen::VectorXd x(n);
  double acc = 0;
  while (true) {
    double w = 1;
    for (int a = 0; a < n; ++a) {
      x(a) = centre(a) + pts(idx[a]);
      w *= wts(idx[a]);
    }
    acc += w * fn(x);
    int a = 0;
    while (a < n && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == n) break;
  }
  return acc;
}

}  // namespace fraclab
