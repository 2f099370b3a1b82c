#pragma once

#include "fraclab/entropy.hpp"
#include "fraclab/lattice.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fraclab {

/** @brief Order ν = -s of the Bessel function used by the cylinder eigenbasis. */
struct BesselOrder {
  double nu = -0.5;
  double series_switch = 10.0;  ///< power series below, normalized backward recurrence above

  static BesselOrder from_s(double s);
};

/// J_ν(x) for ν > -1 and x > 0; accurate to about 1e-13 absolute for x <= 50.
double bessel_j(double nu, double x);
double bessel_j(const BesselOrder& order, double x);

/// McMahon's large-m approximation of the m-th positive zero of J_ν.
double mcmahon_zero(double nu, int m);

/// First `count` positive zeros of J_ν, bracketed around McMahon guesses and bisected.
std::vector<double> bessel_zeros(const BesselOrder& order, int count);

/** @brief One eigenpair (l, m) of the weighted cylinder problem. */
struct EigenPair {
  std::vector<int> l;  ///< lateral multi-index (rectangle) or {mode number} (mask)
  long l_rank = 0;     ///< 1-based rank of μ_l among lateral Dirichlet eigenvalues
  int m = 0;
  double mu = 0;
  double j = 0;
  double gamma = 0;
  double lambda = 0;
};

struct CylinderEigenSystem {
  bool rectangle = true;
  std::vector<double> dims;            ///< rectangle side lengths
  std::optional<RegionMask> omega;     ///< mask mode
  Eigen::MatrixXd lateral_modes;       ///< mask mode: L^2-normalized eigenvectors (columns)
  double s = 0.5;
  double R = 1.0;
  std::vector<EigenPair> pairs;

  int count() const { return static_cast<int>(pairs.size()); }
  std::string to_csv() const;
};

CylinderEigenSystem build_eigensystem(const std::vector<double>& dims, double s, double R, int count);
CylinderEigenSystem build_eigensystem_mask(const RegionMask& omega, double s, double R, int count);

/// Value of the normalized eigenfunction k (0-based) at lateral point x ∈ Ω (rectangle [0, a]) and height z.
double eigenfunction_value(const CylinderEigenSystem& sys, int k, const Eigen::VectorXd& x, double z);

long weyl_count(const CylinderEigenSystem& sys, double N);

/** @brief Count bracket derived from the (l, m) counting bounds after unit calibration. */
struct WeylBand {
  long count = 0;
  double lower = 0, upper = 0;
  double a = 0, b = 0;  ///< a <= λ / (l^{2/n} + m^2) <= b over the system
};

WeylBand weyl_band(const CylinderEigenSystem& sys, double N);

struct EmbeddingSpectrum {
  std::vector<double> sigmas;
  DecayFit fit;
  std::string normalization = "sigma_k = (1 + lambda_k)^(-1/2)";
};

EmbeddingSpectrum embedding_singular_values(const CylinderEigenSystem& sys, int count, double k_lo = 100,
                                            double k_hi = 2000);

/// Log-log slope of λ_k against k over [k_lo, k_hi].
double weyl_slope(const CylinderEigenSystem& sys, double k_lo, double k_hi);

/// Relative weak residual of eigenfunction k on a lateral grid with P interior points per axis and K z-cells.
double eigenfunction_residual(const CylinderEigenSystem& sys, int k, int P, int K);

/// Weighted L^2(Q) coefficients <u, ẽ_k> for the first `count` eigenfunctions (rectangle mode).
std::vector<double> project_onto_eigensystem(const CylinderEigenSystem& sys,
                                             const std::function<double(const Eigen::VectorXd&, double)>& u,
                                             int count, int lateral_order = 24, int z_order = 64);

/** @brief Lateral lattice × graded heights with the metric a on lateral cells. */
struct CylinderGrid {
  LatticeSpec lateral;
  std::vector<double> z;              ///< 0 = z_0 < ... < z_K, graded core then geometric far field
  double s = 0.5;
  std::vector<Eigen::MatrixXd> metric;  ///< one matrix per lateral cell, or a single constant matrix
  double ellipticity = 1.0;
  Eigen::VectorXd centre_weights;     ///< z^{1-2s} at cell centres

  int K() const { return static_cast<int>(z.size()) - 1; }
  bool constant_metric() const { return metric.size() == 1; }
  const Eigen::MatrixXd& a(Index cell) const { return metric.size() == 1 ? metric[0] : metric[cell]; }
};

/// z_j = Z (j/K)^{1/(1-s+0.1)}, then cells growing geometrically by `growth` up to Z_far when Z_far > Z.
std::vector<double> graded_heights(double Z, int K, double s, double Z_far = 0, double growth = 1.2);

CylinderGrid make_cylinder_grid(const LatticeSpec& lateral, double s, double Z, int K,
                                const std::vector<Eigen::MatrixXd>& metric = {}, double ellipticity = 0,
                                double Z_far = 0);

/// Closed-form Γ(s) / (2^{1-2s} Γ(1-s)), used only as a test oracle.
double cs_constant_closed_form(double s);
/// Discrete flux -z^{1-2s} ∂_z φ(0) of the single-mode problem with φ(0) = 1, φ(Z) = 0.
double extension_mode_flux(const std::vector<double>& z, double s, double xi2);
/// c_s from a finely resolved single-mode solve at |ξ| = 1.
double calibrate_cs(double s);

/// Symbol of one layer's lateral energy per unit h^n for a constant metric (Σ (2/h)^2 sin^2(ξ_a h/2) at a = I).
Eigen::VectorXd lateral_symbol(const CylinderGrid& grid);
/// Multiplier c_s · flux_h(λ_a(ξ)) realized exactly by the FD extension with a constant metric.
Eigen::VectorXd extension_symbol(const CylinderGrid& grid, double c_s);

struct ExtensionSolution {
  CylinderGrid grid;
  Eigen::VectorXd values;  ///< index j * N + x, layers 0..K
  Field trace;
  Field neumann;           ///< c_s (A ũ)/h^n on the bottom layer
  double energy = 0;
  double tail_estimate = 0;
  std::vector<std::string> warnings;

  double at(int layer, Index x) const { return values(static_cast<Index>(layer) * grid.lateral.size() + x); }
};

/// Energy matrix A with a_h(u, u) = u^T A u over all layers 0..K.
Eigen::SparseMatrix<double> extension_energy_matrix(const CylinderGrid& grid);

ExtensionSolution solve_extension_fd(const CylinderGrid& grid, const Field& f, const Field& q, const RegionMask& omega,
                                     double c_s);

/// c_s a_h(ũ, ũ) + Σ_Ω q u^2 h^n for an arbitrary field with the layer layout of ExtensionSolution.
double extension_energy(const CylinderGrid& grid, const Eigen::VectorXd& values, const Field& q,
                        const RegionMask& omega, double c_s);

/// c_s times the Schur complement of the energy onto the bottom nodes listed (others on the bottom set to 0).
/// Constant metrics go through the exact extension symbol; variable metrics need one sparse solve per node.
Eigen::MatrixXd extension_form_matrix(const CylinderGrid& grid, const std::vector<Index>& nodes, double c_s);

struct CaccioppoliReport {
  Eigen::VectorXd centre;
  double r1 = 0, r2 = 0;
  double lhs = 0, rhs = 0;
  double constant = 0;
};

CaccioppoliReport caccioppoli_verify(const ExtensionSolution& sol, const Eigen::VectorXd& centre, double r1, double r2,
                                     const RegionMask& omega, double R);

}  // namespace fraclab
