#pragma once

#include "fraclab/lattice.hpp"

#include <string>
#include <vector>

namespace fraclab {

/** @brief W^{δ,p} parameters together with the region the norm lives on. */
struct FractionalSobolevParams {
  double delta = 0.5;
  double p = 2.0;
  RegionMask region;
};

/** @brief Discrete H^s Gram matrix of node indicators on a region. */
struct SobolevGram {
  double s = 0;
  RegionMask node_basis;
  Eigen::MatrixXd matrix;
  Eigen::LLT<Eigen::MatrixXd> chol;
  double condition = 1;
  std::vector<std::string> warnings;
};

template <typename Scalar>
Scalar lp_norm(const GridField<Scalar>& u, double p, const RegionMask& region) {
  if (p < 1) throw std::invalid_argument("lp_norm: p must be >= 1");
  if (region.size() == 0) throw std::invalid_argument("lp_norm: empty region");
  if (region.lattice() != u.lattice) throw std::invalid_argument("lp_norm: region on a different lattice");
  const Scalar hn = static_cast<Scalar>(u.lattice.cell_volume());
  Scalar acc = 0;
  for (Index x : region.nodes()) acc += std::pow(std::abs(u.values(x)), static_cast<Scalar>(p));
  return std::pow(acc * hn, static_cast<Scalar>(1.0 / p));
}

/// Gagliardo seminorm part of the W^{δ,p} norm (diagonal excluded, torus metric).
template <typename Scalar>
Scalar gagliardo_seminorm(const GridField<Scalar>& u, const FractionalSobolevParams& prm) {
  const LatticeSpec& lat = u.lattice;
  const auto& nodes = prm.region.nodes();
  const Scalar h2n = static_cast<Scalar>(lat.cell_volume() * lat.cell_volume());
  const Scalar expo = static_cast<Scalar>(-(prm.p * prm.delta + lat.n()));
  Scalar acc = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Scalar ui = u.values(nodes[i]);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (i == j) continue;
      const Scalar d = std::abs(ui - u.values(nodes[j]));
      if (d == Scalar(0)) continue;
      const Scalar r = static_cast<Scalar>(lat.torus_distance(nodes[i], nodes[j]));
      acc += std::pow(d, static_cast<Scalar>(prm.p)) * std::pow(r, expo);
    }
  }
  return std::pow(acc * h2n, static_cast<Scalar>(1.0 / prm.p));
}

template <typename Scalar>
Scalar gagliardo_norm(const GridField<Scalar>& u, const FractionalSobolevParams& prm) {
  return lp_norm(u, prm.p, prm.region) + gagliardo_seminorm(u, prm);
}

/// Bessel-potential symbol (1 + |ξ|^2)^s on the lattice frequency grid.
inline Eigen::VectorXd bessel_symbol(const LatticeSpec& lat, double s) {
  return (1.0 + lat.xi_squared().array()).pow(s).matrix();
}

template <typename Scalar>
Scalar hs_norm_fourier(const GridField<Scalar>& u, double s) {
  const LatticeSpec& lat = u.lattice;
  std::vector<std::complex<Scalar>> data(lat.size());
  for (Index i = 0; i < lat.size(); ++i) data[i] = u.values(i);
  fft_nd(lat, data, false);
  Eigen::VectorXd xi2 = lat.xi_squared();
  Scalar acc = 0;
  for (Index i = 0; i < lat.size(); ++i)
    acc += static_cast<Scalar>(std::pow(1.0 + xi2(i), s)) * std::norm(data[i]);
  return std::sqrt(acc * static_cast<Scalar>(lat.cell_volume() / static_cast<double>(lat.size())));
}

SobolevGram build_gram(const RegionMask& region, double s, double condition_cap = 1e12);

double dual_norm(const Eigen::VectorXd& functional, const SobolevGram& gram);

double op_norm(const Eigen::MatrixXd& bilinear, const SobolevGram& gram);

/// Whitened matrix L^{-1} D L^{-T} with G = L L^T; same singular values as G^{-1/2} D G^{-1/2}.
Eigen::MatrixXd whiten(const Eigen::MatrixXd& bilinear, const SobolevGram& gram);

/// sqrt(v^T G v) for coefficient vectors in the indicator basis.
double gram_norm(const Eigen::VectorXd& coeffs, const SobolevGram& gram);

}  // namespace fraclab
