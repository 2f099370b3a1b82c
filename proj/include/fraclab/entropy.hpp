#pragma once

#include "fraclab/lattice.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fraclab {

enum class DecayModel { StretchedExp, Power };

std::string to_string(DecayModel m);

/** @brief Fitted decay law y_k ≈ C exp(-c k^μ) or y_k ≈ C k^{-α}. */
struct DecayFit {
  DecayModel model = DecayModel::StretchedExp;
  double C = 0;
  double c = 0;      ///< stretched-exp rate
  double mu = 0;     ///< stretched-exp exponent
  double alpha = 0;  ///< power-law exponent
  double k_lo = 0, k_hi = 0;
  double residual = 0;  ///< RMS of log residuals divided by the range of log values
  int points = 0;

  double predict(double k) const;
  std::string to_json() const;
};

struct FitOptions {
  double drop_front = 0.10;
  double drop_back = 0.05;
  int min_points = 8;
  std::optional<double> fixed_mu;
  double mu_lo = 0.02, mu_hi = 4.0;
};

DecayFit fit_decay(const std::vector<double>& ks, const std::vector<double>& values, DecayModel model,
                   const FitOptions& opts = {});
/// Values indexed k = 1, 2, ...
DecayFit fit_decay(const std::vector<double>& values, DecayModel model, const FitOptions& opts = {});

/** @brief Nonincreasing positive diagonal of a sequence-space operator. */
struct DiagonalSeqOp {
  std::vector<double> sigmas;
  std::string source = "l2";
  std::string target = "l2";

  explicit DiagonalSeqOp(std::vector<double> s, std::string src = "l2", std::string dst = "l2");
};

/** @brief Entropy-number estimates e_k with the constant-factor band [e/c*, c* e]. */
struct EntropyBand {
  std::vector<double> estimate;
  std::vector<double> low;
  std::vector<double> high;
  std::vector<int> argmax_m;
  double c_star = 6.0;
};

EntropyBand diag_entropy_numbers(const DiagonalSeqOp& op, int k_max);

enum class ConvertDirection { Forward, Inverse };
double exponent_convert(double mu, ConvertDirection dir = ConvertDirection::Forward);

struct GevreyParams {
  double sigma = 1.0;
  double rho = 1.0;
  int ell_max = 24;
};

struct GevreyResult {
  double norm = 0;
  double last_term_ratio = 0;
  std::vector<double> terms;
  std::vector<std::string> warnings;
};

GevreyResult gevrey_norm(const Field& u, const GevreyParams& params);

struct CompressionBound {
  long N_opt = 1;
  double log_bound = 0;
  double bound = 1;
  bool below_one = false;
};

/// Minimizes C (C (2N/d) (k/N)^{-1/(n+1)})^N over integer N in [1, k].
CompressionBound iterated_compression_bound(double C, double d, int n, long k);

struct CompressionSweep {
  std::vector<long> ks;
  std::vector<CompressionBound> bounds;
  DecayFit fit;          ///< free-exponent stretched-exp fit of the bounds
  double envelope_C = 0; ///< C' with bound <= C' exp(-c k^{1/(n+2)})
  double envelope_c = 0;
  double ratio_spread = 0; ///< (max - min)/mean of N_opt / k^{1/(n+2)}
};

CompressionSweep compression_sweep(double C, double d, int n, const std::vector<long>& ks);

std::string sweep_table_csv(const std::vector<double>& sigmas, const EntropyBand& band);

}  // namespace fraclab
