#include "kfactor/mi.hpp"

#include "kfactor/error.hpp"
#include "kfactor/losses.hpp"

#include <cmath>

namespace kf::mi {

namespace {
constexpr double kNormTolerance = 1e-12;
constexpr double kImpossibleScore = -1e3;
}  // namespace

JointTable::JointTable(RowMatrix probabilities) : p_(std::move(probabilities)) {
  if (p_.size() == 0) throw InvalidArgument("joint table: empty");
  if (!p_.allFinite() || (p_.array() < 0.0).any()) throw InvalidArgument("joint table: entries must be finite and >= 0");
  const double total = p_.sum();
  if (std::abs(total - 1.0) > kNormTolerance) {
    throw InvalidArgument("joint table: entries sum to " + std::to_string(total) + ", not 1");
  }
}

RowMatrix JointTable::independent() const { return row_marginal() * col_marginal().transpose(); }

JointTable JointTable::merge_columns(Eigen::Index a, Eigen::Index b) const {
  if (a == b || a < 0 || b < 0 || a >= p_.cols() || b >= p_.cols()) throw InvalidArgument("joint table: bad column pair");
  RowMatrix out(p_.rows(), p_.cols() - 1);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < p_.cols(); ++j) {
    if (j == b) continue;
    out.col(k) = p_.col(j);
    if (j == a) out.col(k) += p_.col(b);
    ++k;
  }
  return JointTable(std::move(out));
}

double entropy(const Vector& probabilities) {
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double exact_mi_discrete(const JointTable& table) {
  const RowMatrix& p = table.p();
  const Vector px = table.row_marginal(), py = table.col_marginal();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) mi += p(i, j) * std::log(p(i, j) / (px[i] * py[j]));
  return std::max(0.0, mi);
}

double gaussian_mi(double rho) {
  if (!(std::abs(rho) < 1.0)) throw InvalidArgument("gaussian MI: |rho| must be < 1");
  return -0.5 * std::log1p(-rho * rho);
}

RowMatrix optimal_critic(const JointTable& table) {
  const RowMatrix& p = table.p();
  const Vector px = table.row_marginal(), py = table.col_marginal();
  if ((px.array() <= 0.0).any() || (py.array() <= 0.0).any()) throw InvalidArgument("optimal critic: zero marginal");
  RowMatrix f(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      f(i, j) = p(i, j) > 0.0 ? std::log(p(i, j) / (px[i] * py[j])) : kImpossibleScore;
  return f;
}

double dv_bound_exact(const JointTable& table, const RowMatrix& critic) {
  return loss::dv_lower_bound(critic, table.p(), table.independent());
}

double linear_gaussian_mi(double gain, double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidArgument("linear gaussian: noise variance must be > 0");
  return 0.5 * std::log1p(gain * gain / noise_var);
}

double linear_gaussian_kl_bound(double gain, double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidArgument("linear gaussian: noise variance must be > 0");
  // E_x[(a x)^2] = a^2 for standard normal x.
  return 0.5 * (gain * gain + noise_var - std::log(noise_var) - 1.0);
}

}  // namespace kf::mi
