#pragma once

#include "fraclab/extension.hpp"
#include "fraclab/fractional_ops.hpp"
#include "fraclab/geometry_io.hpp"
#include "fraclab/norms.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fraclab {

/** @brief Ω' ⊆ Ω and W outside Ω on a common lattice, with the fractional order s. */
struct ProblemGeometry {
  LatticeSpec lattice;
  RegionMask omega;
  RegionMask omega_prime;
  RegionMask w;
  double s = 0.5;
  std::vector<Index> nodes;  ///< Ω nodes followed by W nodes
  std::string hash;

  ProblemGeometry() = default;
  ProblemGeometry(RegionMask omega, RegionMask omega_prime, RegionMask w, double s);
  static ProblemGeometry from_description(const GeometryDescription& desc, double s);
  static ProblemGeometry reference(double s = 0.5, int pts_per_side = 48, double box_len = 3.0);

  Index n_omega() const { return omega.size(); }
  Index n_w() const { return w.size(); }
  /// Field on the lattice from values on W (ordered like w.nodes()).
  Field field_on_w(const Eigen::VectorXd& fw) const;
};

enum class FormKind { Multiplier, Kernel, Extension };

std::string to_string(FormKind k);

/** @brief Symmetric matrix E over Ω ∪ W with <L u, v> = v^T E u for fields supported there. */
struct FormMatrix {
  FormKind kind = FormKind::Multiplier;
  std::string descriptor;
  Eigen::MatrixXd E;

  auto omega_block(const ProblemGeometry& g) const { return E.topLeftCorner(g.n_omega(), g.n_omega()); }
  auto coupling_block(const ProblemGeometry& g) const { return E.topRightCorner(g.n_omega(), g.n_w()); }
  auto w_block(const ProblemGeometry& g) const { return E.bottomRightCorner(g.n_w(), g.n_w()); }
};

/// E_xy = h^n g(x - y) with g the spatial kernel of the symbol.
FormMatrix multiplier_form(const ProblemGeometry& g, const Eigen::VectorXd& symbol, const std::string& descriptor);
/// Multiplier form of |ξ|^{2s}.
FormMatrix fractional_form(const ProblemGeometry& g);
/// Pair-kernel form with weights a_x a_y; a ≡ 1 gives the singular-integral Laplacian, a = γ^{1/2} the conductivity form.
FormMatrix kernel_form(const ProblemGeometry& g, const KernelOp& op, const Eigen::VectorXd& a);
/// Extension energy form c_s a_h(ũ, ũ) minimized over the interior of the cylinder.
FormMatrix extension_form(const ProblemGeometry& g, const CylinderGrid& grid, double c_s);

/** @brief R_Ω(L + q) on fields supported in Ω, in the discrete L^2 pairing divided by h^n. */
struct RestrictedOperator {
  ProblemGeometry geometry;
  Eigen::MatrixXd matrix;
  Field q;
};

RestrictedOperator restricted_operator(const ProblemGeometry& g, const FormMatrix& form, const Field& q);

/** @brief Factorized exterior-value solver for one potential. */
class ExteriorSolver {
 public:
  ExteriorSolver(const ProblemGeometry& g, const FormMatrix& form, const Field& q, double pivot_threshold = 1e-12);

  /// Ω values of the solution with exterior data fw on W.
  Eigen::VectorXd solve_omega(const Eigen::VectorXd& fw) const;
  /// Ω values for every W indicator, |Ω| × |W|.
  const Eigen::MatrixXd& response() const { return response_; }
  Field solve(const Field& f) const;
  double rcond() const { return rcond_; }

 private:
  ProblemGeometry geom_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::MatrixXd response_;
  double rcond_ = 0;
};

Field solve_exterior(const ProblemGeometry& g, const FormMatrix& form, const Field& q, const Field& f);

/** @brief Matrix of (f, g) ↦ <Λ_q f, g> in the W indicator basis. */
struct DtnMatrix {
  ProblemGeometry geometry;
  Eigen::MatrixXd entries;
  std::shared_ptr<const SobolevGram> gram;
  std::string q_descriptor;
  std::string q_hash;
  std::string form_descriptor;

  double norm() const { return op_norm(entries, *gram); }
  std::string gram_hash() const;
  std::string to_json() const;
};

std::shared_ptr<const SobolevGram> dtn_gram(const ProblemGeometry& g);

DtnMatrix assemble_dtn(const ProblemGeometry& g, const FormMatrix& form, const Field& q,
                       std::shared_ptr<const SobolevGram> gram = nullptr, const std::string& q_descriptor = "");
DtnMatrix assemble_dtn(const ExteriorSolver& solver, const ProblemGeometry& g, const FormMatrix& form, const Field& q,
                       std::shared_ptr<const SobolevGram> gram, const std::string& q_descriptor = "");

/// Λ_q − Λ_q̄ entrywise.
DtnMatrix gamma_diff(const DtnMatrix& a, const DtnMatrix& b);
/// Same difference evaluated as Σ_Ω (q₁ − q₂) u¹ u² h^n, free of cancellation between nearby maps.
DtnMatrix gamma_diff_identity(const ProblemGeometry& g, const ExteriorSolver& s1, const Field& q1,
                              const ExteriorSolver& s2, const Field& q2, std::shared_ptr<const SobolevGram> gram);

/** @brief f ↦ u₀|_{Ω'} with the H̃^s(W) and H^s(Ω') Gram metrics. */
struct ComparisonOperator {
  Eigen::MatrixXd matrix;  ///< |Ω'| × |W|
  std::shared_ptr<const SobolevGram> gram_w;
  std::shared_ptr<const SobolevGram> gram_target;

  Eigen::VectorXd singular_values() const;
  double norm_of_image(const Eigen::VectorXd& fw) const;
};

ComparisonOperator comparison_operator(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar);

struct DominationReport {
  std::vector<double> ratios;
  double c_max = 0;
  int violations = 0;
};

/// max ‖Γ_q̄(q) f‖_{H^{-s}(W)} / ‖A f‖_{H^s(Ω')} over all sample pairs.
DominationReport domination_check(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar,
                                  const std::vector<Field>& qs, const std::vector<Eigen::VectorXd>& fs);

/** @brief Invertibility margin of R_Ω(L + q̄) against an L^{n/2s} ball of radius r0. */
struct AqCertificate {
  Field qbar;
  double r0 = 0;
  double margin = 0;
  double embedding_constant = 0;
  double kappa = 1;
  bool verdict = false;
  std::string method = "sup-norm bound h^{-n/p} of the discrete L^p -> L^inf embedding, p = n/(2s)";
};

AqCertificate check_aq(const ProblemGeometry& g, const FormMatrix& form, const Field& qbar, double r0,
                       double kappa = 1.0);

/// Hex FNV-1a of a dense matrix.
std::string hash_matrix(const Eigen::MatrixXd& m);

}  // namespace fraclab
