#pragma once

#include <Eigen/Dense>

#include <functional>

namespace fraclab {

/** @brief Gauss–Legendre nodes and weights on [-1, 1]. */
struct GaussRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

GaussRule gauss_legendre(int count);

/// Rule mapped to [a, b].
GaussRule gauss_legendre(int count, double a, double b);

/// Tensor Gauss–Legendre integral of fn over the axis-aligned cube centre ± half, in n dimensions.
double cube_integral(const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& centre,
                     double half, int order, int splits = 1);

}  // namespace fraclab
