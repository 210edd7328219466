#include "kfactor/metrics.hpp"

#include "kfactor/error.hpp"
#include "kfactor/mi.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kf::metrics {

namespace {

int cardinality(const IndexMatrix& factors, Eigen::Index f) { return factors.col(f).maxCoeff() + 1; }

// Empirical joint distribution of two integer columns.
mi::JointTable contingency(const Eigen::Ref<const Eigen::VectorXi>& a, int na, const Eigen::Ref<const Eigen::VectorXi>& b, int nb) {
  RowMatrix counts = RowMatrix::Zero(na, nb);
  for (Eigen::Index i = 0; i < a.size(); ++i) counts(a[i], b[i]) += 1.0;
  counts /= static_cast<double>(a.size());
  // Renormalize so the table passes the strict sum check despite rounding.
  counts /= counts.sum();
  return mi::JointTable(std::move(counts));
}

double factor_entropy(const Eigen::Ref<const Eigen::VectorXi>& f, int nf) {
  Vector p = Vector::Zero(nf);
  for (Eigen::Index i = 0; i < f.size(); ++i) p[f[i]] += 1.0;
  return mi::entropy(p / static_cast<double>(f.size()));
}

// Top-two gap of a score vector; a single entry counts as a gap to 0.
double top_two_gap(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  return scores.size() < 2 ? scores.front() : scores[0] - scores[1];
}

// Deterministic half split so SAP never depends on the caller's row order.
std::vector<char> holdout_mask(Eigen::Index n) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(0x5A9);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<char> heldout(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 1; i < perm.size(); i += 2) heldout[perm[i]] = 1;
  return heldout;
}

RowMatrix standardized(const RowMatrix& x) {
  RowMatrix z = x.rowwise() - x.colwise().mean();
  const Eigen::RowVectorXd sd = (z.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
  for (Eigen::Index d = 0; d < z.cols(); ++d) {
    if (sd[d] > 1e-12) z.col(d) /= sd[d];
    else z.col(d).setZero();
  }
  return z;
}

}  // namespace

void CodeMatrix::validate() const {
  if (codes.rows() < 2) throw InvalidArgument("code matrix: need at least 2 samples");
  if (codes.rows() != factors.rows()) throw InvalidArgument("code matrix: codes and factors differ in sample count");
  if (codes.cols() == 0 || factors.cols() == 0) throw InvalidArgument("code matrix: empty codes or factors");
  if (!codes.allFinite()) throw InvalidArgument("code matrix: non-finite codes");
  if ((factors.array() < 0).any()) throw InvalidArgument("code matrix: negative factor index");
  for (Eigen::Index f = 0; f < factors.cols(); ++f) {
    if (factors.col(f).minCoeff() == factors.col(f).maxCoeff()) {
      throw InvalidArgument("code matrix: factor column " + std::to_string(f) + " is constant");
    }
  }
}

Discretized discretize(const RowMatrix& codes, int bins) {
  if (bins < 2) throw InvalidArgument("discretize: bins must be >= 2");
  const Eigen::Index n = codes.rows(), dims = codes.cols();
  if (n == 0) throw InvalidArgument("discretize: no samples");
  Discretized out{IndexMatrix(n, dims), std::vector<bool>(static_cast<std::size_t>(dims), false)};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return codes(a, d) < codes(b, d); });
    Eigen::Index first = 0;  // sorted position of the first occurrence of the current value
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r > 0 && codes(order[static_cast<std::size_t>(r)], d) != codes(order[static_cast<std::size_t>(r - 1)], d)) first = r;
      out.bins(order[static_cast<std::size_t>(r)], d) = static_cast<int>((static_cast<long long>(bins) * first) / n);
    }
    out.constant_dims[static_cast<std::size_t>(d)] = out.bins.col(d).maxCoeff() == 0;
  }
  return out;
}

double mig(const CodeMatrix& cm, int bins) {
  cm.validate();
  const Discretized disc = discretize(cm.codes, bins);
  double total = 0.0;
  for (Eigen::Index f = 0; f < cm.num_factors(); ++f) {
    const int nf = cardinality(cm.factors, f);
    const double h = factor_entropy(cm.factors.col(f), nf);
    std::vector<double> info;
    for (Eigen::Index d = 0; d < cm.num_codes(); ++d) {
      info.push_back(mi::exact_mi_discrete(contingency(disc.bins.col(d), bins, cm.factors.col(f), nf)));
    }
    total += top_two_gap(info) / h;
  }
  return std::clamp(total / static_cast<double>(cm.num_factors()), 0.0, 1.0);
}

double sap(const CodeMatrix& cm, int bins) {
  cm.validate();
  const Discretized disc = discretize(cm.codes, bins);
  const auto heldout = holdout_mask(cm.num_samples());
  double total = 0.0;
  for (Eigen::Index f = 0; f < cm.num_factors(); ++f) {
    const int nf = cardinality(cm.factors, f);
    std::vector<double> scores;
    for (Eigen::Index d = 0; d < cm.num_codes(); ++d) {
      // Fit: majority factor value per bin on the training half.
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(bins, nf);
      Eigen::VectorXd prior = Eigen::VectorXd::Zero(nf);
      for (Eigen::Index i = 0; i < cm.num_samples(); ++i) {
        if (heldout[static_cast<std::size_t>(i)]) continue;
        counts(disc.bins(i, d), cm.factors(i, f)) += 1.0;
        prior[cm.factors(i, f)] += 1.0;
      }
      Eigen::Index fallback = 0;
      prior.maxCoeff(&fallback);
      std::vector<int> predict(static_cast<std::size_t>(bins));
      for (int b = 0; b < bins; ++b) {
        Eigen::Index best = fallback;
        if (counts.row(b).sum() > 0.0) counts.row(b).maxCoeff(&best);
        predict[static_cast<std::size_t>(b)] = static_cast<int>(best);
      }
      // Score: balanced accuracy on the held-out half, corrected for chance.
      Eigen::VectorXd hits = Eigen::VectorXd::Zero(nf), seen = Eigen::VectorXd::Zero(nf);
      for (Eigen::Index i = 0; i < cm.num_samples(); ++i) {
        if (!heldout[static_cast<std::size_t>(i)]) continue;
        const int y = cm.factors(i, f);
        seen[y] += 1.0;
        if (predict[static_cast<std::size_t>(disc.bins(i, d))] == y) hits[y] += 1.0;
      }
      double recall = 0.0;
      int present = 0;
      for (int c = 0; c < nf; ++c) {
        if (seen[c] > 0.0) {
          recall += hits[c] / seen[c];
          ++present;
        }
      }
      const double chance = 1.0 / static_cast<double>(std::max(present, 1));
      const double bacc = present ? recall / present : 0.0;
      scores.push_back(present > 1 ? std::clamp((bacc - chance) / (1.0 - chance), 0.0, 1.0) : 0.0);
    }
    total += top_two_gap(scores);
  }
  return std::clamp(total / static_cast<double>(cm.num_factors()), 0.0, 1.0);
}

RowMatrix dci_importance(const CodeMatrix& cm) {
  cm.validate();
  const RowMatrix x = standardized(cm.codes);
  const Eigen::Index n = x.rows(), dims = x.cols();
  const double nd = static_cast<double>(n);
  constexpr int kIterations = 400;
  // Family-wise false-positive rate of the association screen over all D x F (dim, factor) pairs.
  constexpr double kNullLevel = 0.01;
  const double tail = std::log(static_cast<double>(dims * cm.num_factors()) / kNullLevel);
  // Ridge strength of the importance fit; 1/n matches an unscaled L2 penalty of 1/2 ||W||^2.
  const double ridge = 1.0 / nd;

  // Lipschitz constant of the mean softmax cross-entropy gradient: 1/2 * lambda_max(X^T X / n).
  const Eigen::MatrixXd gram = (x.transpose() * x) / nd;
  const double lipschitz =
      0.5 * std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff(), 1e-12) + ridge;
  const double step = 1.0 / lipschitz;

  RowMatrix importance = RowMatrix::Zero(dims, cm.num_factors());
  for (Eigen::Index f = 0; f < cm.num_factors(); ++f) {
    const int nf = cardinality(cm.factors, f);
    RowMatrix onehot = RowMatrix::Zero(n, nf);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, cm.factors(i, f)) = 1.0;
    const Eigen::RowVectorXd freq = onehot.colwise().sum() / nd;

    // Screen: score test of each dim against the intercept-only model. Under
    // independence n * ||g_d||^2 <= max_c pi_c * chi^2_{C-1}; the threshold is
    // the Laurent-Massart upper tail of that chi-square at `tail`.
    const RowMatrix score = x.transpose() * (onehot.rowwise() - freq) / nd;
    const double dof = nf - 1;
    const double threshold = std::sqrt(freq.maxCoeff() * (dof + 2.0 * std::sqrt(dof * tail) + 2.0 * tail) / nd);

    // Importance: ridge multinomial logistic regression (accelerated gradient).
    Eigen::RowVectorXd bias = freq.array().max(1e-12).log().matrix();
    RowMatrix w = RowMatrix::Zero(dims, nf), w_prev = w, y = w;
    Eigen::RowVectorXd b_prev = bias, b_y = bias;
    double momentum = 1.0;
    for (int it = 0; it < kIterations; ++it) {
      RowMatrix logits = x * y;
      logits.rowwise() += b_y;
      const Vector mx = logits.rowwise().maxCoeff();
      logits.colwise() -= mx;
      RowMatrix p = logits.array().exp();
      p.array().colwise() /= p.rowwise().sum().array();
      const RowMatrix resid = (p - onehot) / nd;
      const RowMatrix w_next = y - step * (x.transpose() * resid + ridge * y);
      const Eigen::RowVectorXd b_next = b_y - step * resid.colwise().sum();
      const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      const double beta = (momentum - 1.0) / next_momentum;
      y = w_next + beta * (w_next - w_prev);
      b_y = b_next + beta * (b_next - b_prev);
      w_prev = w_next;
      b_prev = b_next;
      momentum = next_momentum;
    }
    // RMS over classes keeps factors with many classes from dominating.
    for (Eigen::Index d = 0; d < dims; ++d) {
      if (score.row(d).norm() > threshold) importance(d, f) = w_prev.row(d).norm() / std::sqrt(static_cast<double>(nf));
    }
  }
  return importance;
}

double dci_from_importance(const RowMatrix& importance) {
  if (importance.size() == 0 || (importance.array() < 0.0).any()) throw InvalidArgument("DCI: importance must be nonnegative");
  const Eigen::Index f = importance.cols();
  const double total = importance.sum();
  if (total <= 0.0) return 0.0;
  if (f == 1) return 1.0;
  double score = 0.0;
  for (Eigen::Index d = 0; d < importance.rows(); ++d) {
    const double row = importance.row(d).sum();
    if (row <= 0.0) continue;
    const Vector p = importance.row(d).transpose() / row;
    score += (row / total) * (1.0 - mi::entropy(p) / std::log(static_cast<double>(f)));
  }
  return std::clamp(score, 0.0, 1.0);
}

double dci_disentanglement(const CodeMatrix& cm) { return dci_from_importance(dci_importance(cm)); }

double factor_vae_score(const CodeMatrix& cm, std::uint64_t seed, const FactorVaeOptions& opts) {
  cm.validate();
  if (opts.batch_size < 2 || opts.train_votes < 1 || opts.eval_votes < 1) throw InvalidArgument("FactorVAE: bad options");
  const Eigen::Index n = cm.num_samples();
  const Eigen::RowVectorXd mean = cm.codes.colwise().mean();
  const Eigen::RowVectorXd var = (cm.codes.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n);
  std::vector<Eigen::Index> active;
  for (Eigen::Index d = 0; d < cm.num_codes(); ++d)
    if (var[d] > opts.prune_threshold) active.push_back(d);
  if (active.empty()) return 0.0;

  // Rows grouped by (factor, value) so fixed-factor batches can be drawn directly.
  std::vector<std::vector<std::vector<Eigen::Index>>> groups(static_cast<std::size_t>(cm.num_factors()));
  std::vector<Eigen::Index> usable;
  for (Eigen::Index f = 0; f < cm.num_factors(); ++f) {
    auto& g = groups[static_cast<std::size_t>(f)];
    g.resize(static_cast<std::size_t>(cardinality(cm.factors, f)));
    for (Eigen::Index i = 0; i < n; ++i) g[static_cast<std::size_t>(cm.factors(i, f))].push_back(i);
    std::erase_if(g, [](const auto& rows) { return rows.empty(); });
    if (g.size() >= 2) usable.push_back(f);
  }
  if (usable.empty()) throw InvalidArgument("FactorVAE: no factor with two or more values");

  std::mt19937_64 rng(seed);
  const auto vote = [&](Eigen::Index& factor) {
    factor = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
    const auto& g = groups[static_cast<std::size_t>(factor)];
    const auto& rows = g[std::uniform_int_distribution<std::size_t>(0, g.size() - 1)(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(active.size()));
    Eigen::VectorXd sq = sum;
    for (int b = 0; b < opts.batch_size; ++b) {
      const Eigen::Index r = rows[pick(rng)];
      for (std::size_t k = 0; k < active.size(); ++k) {
        const double v = cm.codes(r, active[k]) / std::sqrt(var[active[k]]);
        sum[static_cast<Eigen::Index>(k)] += v;
        sq[static_cast<Eigen::Index>(k)] += v * v;
      }
    }
    const double bs = opts.batch_size;
    const Eigen::VectorXd batch_var = sq / bs - (sum / bs).cwiseAbs2();
    Eigen::Index dim = 0;
    batch_var.minCoeff(&dim);
    return dim;
  };

  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(active.size()), cm.num_factors());
  for (int v = 0; v < opts.train_votes; ++v) {
    Eigen::Index factor = 0;
    const Eigen::Index dim = vote(factor);
    ++votes(dim, factor);
  }
  std::vector<Eigen::Index> classifier(active.size());
  for (std::size_t k = 0; k < active.size(); ++k) votes.row(static_cast<Eigen::Index>(k)).maxCoeff(&classifier[k]);

  int correct = 0;
  for (int v = 0; v < opts.eval_votes; ++v) {
    Eigen::Index factor = 0;
    const Eigen::Index dim = vote(factor);
    if (classifier[static_cast<std::size_t>(dim)] == factor) ++correct;
  }
  return static_cast<double>(correct) / opts.eval_votes;
}

double linear_cka(const RowMatrix& x, const RowMatrix& y) {
  if (x.rows() != y.rows()) throw InvalidArgument("CKA: inputs differ in sample count");
  if (x.rows() < 2) throw InvalidArgument("CKA: need at least 2 samples");
  const RowMatrix xc = x.rowwise() - x.colwise().mean();
  const RowMatrix yc = y.rowwise() - y.colwise().mean();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx <= 0.0 || yy <= 0.0) throw InvalidArgument("CKA: zero-variance input");
  return std::clamp((yc.transpose() * xc).squaredNorm() / (xx * yy), 0.0, 1.0);
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const char> positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("AUC: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

}  // namespace kf::metrics
