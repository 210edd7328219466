#pragma once

// Exact mutual-information oracles (nats) for validating variational bounds.

#include "kfactor/tensor.hpp"

namespace kf::mi {

/// Discrete joint distribution p(x, y); rows index x, columns index y.
class JointTable {
 public:
  /// Throws InvalidArgument unless all entries are >= 0 and sum to 1 +- 1e-12.
  explicit JointTable(RowMatrix probabilities);

  const RowMatrix& p() const noexcept { return p_; }
  Vector row_marginal() const { return p_.rowwise().sum(); }
  Vector col_marginal() const { return p_.colwise().sum().transpose(); }

  /// Product of the marginals, p(x) p(y).
  RowMatrix independent() const;
  JointTable transposed() const { return JointTable(p_.transpose()); }
  /// Merges columns a and b into one (a coarser view of Y).
  JointTable merge_columns(Eigen::Index a, Eigen::Index b) const;

 private:
  RowMatrix p_;
};

/// Shannon entropy of a probability vector, with 0 ln 0 = 0.
double entropy(const Vector& probabilities);

/// sum_ij p_ij ln(p_ij / (p_i p_j)).
double exact_mi_discrete(const JointTable& table);

/// -1/2 ln(1 - rho^2) for a bivariate normal with correlation rho.
double gaussian_mi(double rho);

/// ln(p_ij / (p_i p_j)); zero-probability cells get -inf scaled to a large
/// negative finite value so the DV bound stays well defined.
RowMatrix optimal_critic(const JointTable& table);

/// DV bound of `critic` under exact expectations of `table`.
double dv_bound_exact(const JointTable& table, const RowMatrix& critic);

/// I(X; T) for X ~ N(0, 1), T = a X + sqrt(noise_var) E: 1/2 ln(1 + a^2 / noise_var).
double linear_gaussian_mi(double gain, double noise_var);
/// E_x KL(N(a x, noise_var) || N(0, 1)) for X ~ N(0, 1), the variational upper bound on I(X; T).
double linear_gaussian_kl_bound(double gain, double noise_var);

}  // namespace kf::mi
