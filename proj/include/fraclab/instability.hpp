#pragma once

#include "fraclab/liouville.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fraclab {

/** @brief Discrete Dirichlet-Laplacian eigenvectors on a region, orthonormal in the h^n-weighted L^2 pairing. */
struct PerturbationBasis {
  RegionMask support;
  Eigen::MatrixXd modes;  ///< |support| × count, columns by increasing eigenvalue
  Eigen::VectorXd eigenvalues;

  int count() const { return static_cast<int>(modes.cols()); }
  /// Field supported on `support` with the given mode coefficients.
  Field direction(const Eigen::VectorXd& coeffs) const;
};

/// First `count` eigenvectors of the 5-point (2n+1-point) Laplacian with zero values off the region; count <= 0 keeps all.
PerturbationBasis dirichlet_basis(const RegionMask& region, int count = 0);

/** @brief Linearized DtN difference d ↦ Σ_x d(x) u_i(x) u_j(x) h^n on the W indicator data of a fixed q̄. */
struct BornOperator {
  ProblemGeometry geometry;
  Field qbar;
  FormMatrix form;
  PerturbationBasis basis;
  std::shared_ptr<const ExteriorSolver> solver;  ///< q̄ solver shared with pair construction
  std::shared_ptr<const SobolevGram> gram;       ///< H̃^s(W) Gram
  Eigen::MatrixXd response;                      ///< rows of the q̄ response on the basis support
  double response_norm = 0;                      ///< ‖L_W^{-1} response^T‖_2
  Eigen::MatrixXd matrix;                        ///< column j = whitened W × W image of mode j, flattened

  /// Unwhitened W × W form of the direction with these coefficients.
  Eigen::MatrixXd apply(const Eigen::VectorXd& coeffs) const;
  Eigen::MatrixXd apply(const Field& d) const;
  /// Operator norm H^s(W) -> H^{-s}(W) of apply(coeffs).
  double norm(const Eigen::VectorXd& coeffs) const;
};

/// Throws when (Aq) fails at q̄ (zero margin).
BornOperator build_born(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar, int basis_size = 0,
                        std::shared_ptr<const SobolevGram> gram = nullptr);

/** @brief ‖Γ(q̄ + t d) - t (DΓ)(d)‖ from two assembled DtN maps, for the ratio test of the linearization. */
struct BornFdCheck {
  std::vector<double> t;
  std::vector<double> error;
  std::vector<double> ratio;  ///< error(t_{i-1}) / error(t_i); about 4 when t halves
};

BornFdCheck born_fd_check(const BornOperator& born, int mode, const std::vector<double>& ts);

struct InstabilityPair {
  Field q1, q2;
  double eps = 0;              ///< ‖q1 - q2‖_{L^p(Ω)}
  double budget1 = 0, budget2 = 0;  ///< ‖q_i - q̄‖_{W^{δ,p}}
  double gap = 0;              ///< ‖Λ_{q1} - Λ_{q2}‖, nonlinear
  double gap_linear = 0;       ///< ‖(DΓ)(q2 - q1)‖
  double remainder_bound = 0;  ///< bound for the second-order remainder of the linearization
  double born_sigma = 0;       ///< singular value of the Born columns selected, per unit L^2 norm
  int prefix = 0;              ///< number of basis modes admitted
  int singular_index = 0;      ///< 0 = least singular vector, higher after (Aq) retries
  DtnMatrix difference;        ///< Λ_{q1} - Λ_{q2}
  std::optional<double> single_meas_gap;
  std::map<std::string, std::string> metadata;
};

struct PairOptions {
  double delta = 0.5;
  double p = 0;       ///< 0 selects n / (2s)
  double r0 = 1.0;
  int retries = 2;    ///< further singular vectors tried when (Aq) fails at q2
};

/// Least-singular admissible direction of the largest basis prefix meeting ‖d‖_{W^{δ,p}} <= r0 at ‖d‖_{L^p} = eps.
InstabilityPair construct_pair(const BornOperator& born, double eps, const PairOptions& opts);

/// Nonlinear gap of the pair q̄, q̄ + d.
double pair_gap(const BornOperator& born, const Field& d);

/// Gaps of `count` pairs q̄, q̄ + d with d a Gaussian combination of the basis scaled to ‖d‖_{L^p(Ω)} = eps.
std::vector<double> random_pair_gaps(const BornOperator& born, double eps, double p, int count, std::uint64_t seed);

/** @brief Result of recomputing the membership conditions from the raw fields. */
struct MembershipReport {
  bool eps_positive = false;
  bool support_ok = false;
  bool budget_ok = false;
  double eps = 0, budget1 = 0, budget2 = 0;
  bool ok() const { return eps_positive && support_ok && budget_ok; }
};

MembershipReport verify_membership(const InstabilityPair& pair, const BornOperator& born, const PairOptions& opts);

/// ‖(Λ_{q1} - Λ_{q2}) f‖_{H^{-s}(W)}; throws std::logic_error if it exceeds gap ‖f‖_{H^s(W)} + 1e-10.
double single_measurement(const InstabilityPair& pair, const Field& f);

enum class Variant { Schrodinger, VariableA, Conductivity };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

/** @brief Everything a sweep needs beyond geometry and q̄. */
struct SweepConfig {
  Variant variant = Variant::Schrodinger;
  PairOptions pair;
  std::vector<double> eps;           ///< strictly decreasing
  int basis_size = 0;
  std::uint64_t seed = 0;
  FormKind schrodinger_form = FormKind::Multiplier;  ///< Kernel reproduces the conductivity form at γ ≡ 1
  Eigen::MatrixXd metric;            ///< variable-a lateral metric; empty gives diag(2, 1, ..., 1)
  std::optional<ConductivitySpec> conductivity;  ///< empty gives γ ≡ 1
};

/// eps0, eps0/2, ... (count values).
std::vector<double> halving_grid(double eps0, int count);

/// Form realizing the variant's forward map.
FormMatrix variant_form(const ProblemGeometry& g, const SweepConfig& cfg);

double target_exponent(Variant v, int n, double delta);

struct SweepRow {
  double eps = 0;
  double gap = 0;
  double gap_linear = 0;
  double remainder_bound = 0;
  double budget = 0;
  int prefix = 0;
  std::string q1_hash, q2_hash;
};

struct SweepResult {
  Variant variant = Variant::Schrodinger;
  int n = 2;
  double s = 0.5, delta = 0.5, p = 2;
  std::uint64_t seed = 0;
  std::string geometry_hash;
  std::vector<SweepRow> rows;
  DecayFit stretched;
  DecayFit power;
  double fit_slope = 0;   ///< least-squares slope of log(-log gap) against log(1/eps)
  double target = 0;
  bool monotone = false;
  bool superpolynomial = false;  ///< power-law residual >= 2 × stretched-exp residual
  bool completed = false;
  std::string error;

  std::string to_csv() const;
  std::string to_json() const;
};

/// Runs construct_pair along the eps grid; a failed pair stops the sweep and leaves completed = false.
SweepResult run_sweep(const ProblemGeometry& g, const Field& qbar, const SweepConfig& cfg);

/// Fit step of run_sweep, separated so the rows can be refitted.
void fit_sweep(SweepResult& res);

}  // namespace fraclab
