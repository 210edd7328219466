#pragma once

// Disentanglement metrics, representation similarity and ROC-AUC.

#include "kfactor/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace kf::metrics {

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Representations (n x D) paired with ground-truth factor indices (n x F).
struct CodeMatrix {
  RowMatrix codes;
  IndexMatrix factors;

  /// Throws InvalidArgument unless n >= 2, shapes agree and no factor column is constant.
  void validate() const;
  Eigen::Index num_samples() const { return codes.rows(); }
  Eigen::Index num_codes() const { return codes.cols(); }
  Eigen::Index num_factors() const { return factors.cols(); }
};

inline constexpr int kDefaultBins = 20;

struct Discretized {
  IndexMatrix bins;                  // n x D, values in [0, bins)
  std::vector<bool> constant_dims;   // dims mapped to a single bin
};

/// Per-dimension equal-count binning: a value's bin is determined by the rank
/// of its first occurrence in sorted order, so ties share a bin and any
/// strictly monotone transform leaves the assignment unchanged.
Discretized discretize(const RowMatrix& codes, int bins = kDefaultBins);

/// Mean over factors of (I_top1 - I_top2) / H(factor), using discretized codes.
double mig(const CodeMatrix& cm, int bins = kDefaultBins);

/// Mean over factors of the gap between the two most predictive dims. A dim's
/// score is the chance-corrected balanced accuracy of a bin-majority
/// classifier fit on a seeded random half of the rows and scored on the
/// other half, clamped to [0, 1].
double sap(const CodeMatrix& cm, int bins = kDefaultBins);

/// D x F importance matrix: RMS over classes of ridge multinomial logistic
/// regression coefficients on standardized codes, kept only where a marginal
/// score test finds the (dim, factor) association significant at a 1%
/// family-wise level. Dims unrelated to a factor get exactly zero importance.
RowMatrix dci_importance(const CodeMatrix& cm);
/// DCI disentanglement of an importance matrix (rows = code dims).
double dci_from_importance(const RowMatrix& importance);
double dci_disentanglement(const CodeMatrix& cm);

struct FactorVaeOptions {
  int batch_size = 64;
  int train_votes = 800;
  int eval_votes = 800;
  double prune_threshold = 0.0;  // dims with global variance at or below this are ignored
};
double factor_vae_score(const CodeMatrix& cm, std::uint64_t seed, const FactorVaeOptions& opts = {});

/// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on column-centered inputs.
double linear_cka(const RowMatrix& x, const RowMatrix& y);

/// Mann-Whitney AUC of scores for positives vs negatives (ties count 1/2);
/// nullopt if either group is empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const char> positive);

}  // namespace kf::metrics
