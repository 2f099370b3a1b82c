#pragma once

#include "fraclab/forward.hpp"

#include <string>
#include <vector>

namespace fraclab {

/** @brief Conductivity γ with γ^{1/2} - 1 supported in Ω and γ >= gamma_lower. */
struct ConductivitySpec {
  Field gamma;
  double gamma_lower = 0;
  bool support_check = false;
  std::string descriptor;

  Eigen::VectorXd sqrt_gamma() const { return gamma.values.cwiseSqrt(); }
};

/// Validates γ against Ω; throws when γ < gamma_lower or γ ≠ 1 off Ω.
ConductivitySpec make_conductivity(const Field& gamma, const RegionMask& omega, double gamma_lower = 0,
                                   const std::string& descriptor = "field");

/** @brief γ^{1/2} = 1 + amplitude · exp(1 - 1/(1 - r^2)), r = |x - centre| / radius; zero for r >= 1. */
struct BumpPreset {
  Eigen::VectorXd centre;
  double radius = 0.3;
  double amplitude = 0.4;
};

ConductivitySpec bump_conductivity(const LatticeSpec& lat, const RegionMask& omega, const BumpPreset& preset);

struct ReducedPotential {
  Field q_gamma;         ///< -γ^{-1/2} (-Δ)^s (γ^{1/2} - 1), Fourier multiplier
  Field Q;               ///< q_gamma + q / γ
  Field q_gamma_kernel;  ///< same with the kernel realization used by the conductivity form
  Field Q_kernel;
  std::string gamma_hash;
  std::string q_hash;
};

ReducedPotential reduce(const ConductivitySpec& spec, const Field& q, double s);

/// <Λ_{γ,q} f, g> = B_{γ,q}(u_f, g) on W indicators, solved with the kernel pair form.
DtnMatrix conductivity_dtn(const ProblemGeometry& g, const ConductivitySpec& spec, const Field& q,
                           std::shared_ptr<const SobolevGram> gram = nullptr);

FormMatrix conductivity_form_matrix(const ProblemGeometry& g, const ConductivitySpec& spec);

/** @brief The three links of the reduction chain compared over the W indicator basis. */
struct ReductionReport {
  double schroedinger_norm = 0;   ///< ‖<(Λ_{Q1} - Λ_{Q2}) f1, f2>‖_F
  double interior_norm = 0;       ///< ‖Σ_Ω (q1 - q2) u1 u2 h^n‖_F
  double conductivity_norm = 0;   ///< ‖<(Λ_{γ,q1} - Λ_{γ,q2}) f1, f2>‖_F
  double mismatch = 0;            ///< max pairwise relative Frobenius mismatch, kernel-consistent potentials
  double mismatch_multiplier = 0; ///< same with Fourier potentials and the multiplier Schrödinger map
  double baseline = 0;            ///< multiplier-route mismatch for the same q pair at γ ≡ 1
  double after_baseline = 0;      ///< max(0, mismatch_multiplier - baseline)
};

ReductionReport verify_reduction_identity(const ProblemGeometry& g, const ConductivitySpec& spec, const Field& q1,
                                          const Field& q2);

struct CorrespondenceReport {
  double conductivity_residual = 0;  ///< ‖R_Ω(conductivity operator + q) u‖
  double schroedinger_residual = 0;  ///< ‖R_Ω((-Δ)^s + Q) γ^{1/2} u‖, kernel realization
};

/// Residuals of u and w = γ^{1/2} u in their respective equations; u need not be a solution.
CorrespondenceReport liouville_correspondence(const ConductivitySpec& spec, const RegionMask& omega, const Field& q,
                                              const Field& u, double s);

/// ‖φ‖_∞ + sup_y (Σ_x |φ_x - φ_y|^p |x - y|^{-n-δp} h^n)^{1/p} over the region: bounds ‖φ u‖ / ‖u‖ in W^{δ,p}.
double sobolev_multiplier_bound(const Field& phi, const FractionalSobolevParams& prm);

struct NormEquivalenceReport {
  std::vector<double> potential_ratios;  ///< ‖q1 - q2‖ / ‖Q1 - Q2‖ in W^{δ,p}(Ω)
  std::vector<double> dtn_ratios;        ///< ‖Λ_{γ,q1} - Λ_{γ,q2}‖ / ‖Λ_{Q1} - Λ_{Q2}‖
  double potential_lo = 0, potential_hi = 0;
  double dtn_lo = 0, dtn_hi = 0;
  double multiplier_constant = 0;        ///< max of the bounds for γ and 1/γ
};

NormEquivalenceReport norm_equivalences(const ProblemGeometry& g, const ConductivitySpec& spec,
                                        const std::vector<std::pair<Field, Field>>& pairs,
                                        const FractionalSobolevParams& prm);

}  // namespace fraclab
