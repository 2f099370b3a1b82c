#pragma once

#include "fraclab/entropy.hpp"
#include "fraclab/lattice.hpp"

#include <string>
#include <vector>

namespace fraclab {

/** @brief Fourier multiplier on the periodic lattice. */
struct MultiplierOp {
  LatticeSpec lattice;
  Eigen::VectorXd symbol;
  double s = 0;
  std::string kind;
};

/// |ξ|^{2s}; the zero frequency maps to 0 for every s, so negative s acts on the mean-zero part.
MultiplierOp homogeneous_multiplier(const LatticeSpec& lat, double s);
/// (1 + |ξ|^2)^s.
MultiplierOp inhomogeneous_multiplier(const LatticeSpec& lat, double s);
/// (Σ_a (2/h)^2 sin^2(ξ_a h / 2))^s, the symbol of the nearest-neighbour Laplacian raised to s.
MultiplierOp lattice_laplacian_multiplier(const LatticeSpec& lat, double s);

Field frac_laplacian_fourier(const Field& u, const MultiplierOp& op);

/** @brief Singular-integral realization with periodic image sums and lattice corrections. */
struct KernelOp {
  LatticeSpec lattice;
  double s = 0.5;
  double c_ns = 0;
  int image_shells = 2;          ///< images r + kL with |k|_∞ <= image_shells are summed exactly
  double truncation_radius = 0;  ///< (image_shells + 1/2) L, half side of the exactly summed cube
  double far_tail = 0;           ///< ∫ over |r|_∞ > truncation_radius of |r|^{-n-2s}, spread uniformly over the box
  double near_diag = 0;          ///< Σ_j (∫_{cell_j} - midpoint) of |r|^{2-n-2s}
  Eigen::VectorXd weights;       ///< Σ_k |r + kL|^{-n-2s} + far_tail/L^n per offset, 0 at the origin
};

double fractional_constant(int n, double s);
KernelOp make_kernel_op(const LatticeSpec& lat, double s);
Field frac_laplacian_kernel(const Field& u, const KernelOp& op);

/** @brief Heat-semigroup representation of the |ξ|^{-2s} multiplier, quadrature in log-time. */
struct HeatTransformOp {
  LatticeSpec lattice;
  double s = 0.5;
  Eigen::VectorXd times;    ///< quadrature nodes t_i in (t_min, T_max)
  Eigen::VectorXd weights;  ///< weights for ∫ φ(t) t^{s-1} dt / Γ(s), all positive
  double t_min = 0;
  double t_max = 0;
  double tail_bound = 0;    ///< relative bound on the discarded ∫_{T_max}^∞
  Eigen::VectorXd symbol;   ///< quadrature realization of |ξ|^{-2s}
};

HeatTransformOp make_heat_transform(const LatticeSpec& lat, double s, int nodes_per_branch = 64);
Field heat_transform(const Field& g, const HeatTransformOp& op, double mean_tol = 1e-10);

/// Fit |c_k| ≈ C exp(-ρ |k|) to windowed spectral coefficients of u on the region's bounding box.
DecayFit tangential_coefficient_decay(const Field& u, const RegionMask& region);

/** @brief Data of the fractional conductivity form B_{γ,q}. */
struct ConductivityForm {
  LatticeSpec lattice;
  double s = 0.5;
  Field gamma;
  Field q;
  RegionMask omega;
  KernelOp kernel;
  Eigen::VectorXd sqrt_gamma;
  double gamma_lower = 0;
};

ConductivityForm make_conductivity_form(const Field& gamma, const Field& q, const RegionMask& omega, double s,
                                        double gamma_lower = 0);

double conductivity_bilinear(const Field& u, const Field& v, const ConductivityForm& form);

/// Operator with B(u, v) = <apply(u), v> in the discrete L^2 product.
Field conductivity_apply(const Field& u, const ConductivityForm& form);

/// Pair operator c[h^n a_x Σ_y a_y (u_x - u_y) w(x - y) + (E/2n) a_x Σ_nbr a_y (u_x - u_y)/h^2].
Field pair_operator(const Field& u, const Eigen::VectorXd& a, const KernelOp& op);

}  // namespace fraclab
