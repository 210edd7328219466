#include "kfactor/bounds.hpp"

#include "kfactor/losses.hpp"
#include "kfactor/mi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace kf::bounds {

namespace {

using Rng = std::mt19937_64;

// Composite Simpson rule with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double log_normal_pdf(double x, double mu, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mu) * (x - mu) / var;
}

mi::JointTable random_table(Rng& rng, int rows, int cols) {
  std::exponential_distribution<double> gamma1(1.0);  // Dirichlet(1, ..., 1) by normalized exponentials
  RowMatrix p(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) p(i, j) = gamma1(rng);
  p /= p.sum();
  // Renormalize once more so the sum check at 1e-12 is not at the mercy of rounding.
  p /= p.sum();
  return mi::JointTable(p);
}

class Suite {
 public:
  explicit Suite(const SuiteOptions& o) : opt_(o), rng_(o.seed) {}

  double kl(double mu, double var) const {
    loss::GaussianStats s{Vector::Constant(1, mu), Vector::Constant(1, var)};
    const double v = loss::kl_to_standard_normal(s);
    return opt_.flip_kl_sign ? -v : v;
  }

  PropertyResult dv_below_mi() {
    PropertyResult r{"dv_le_mi_random", "exact-expectation DV bound <= exact MI for random 4x4 joints and critics",
                     true, 0.0, 1e-9, 0};
    std::normal_distribution<double> critic(0.0, 2.0);
    for (int t = 0; t < opt_.random_tables; ++t) {
      const auto table = random_table(rng_, 4, 4);
      RowMatrix f(4, 4);
      for (auto& v : f.reshaped()) v = critic(rng_);
      const double gap = mi::dv_bound_exact(table, f) - mi::exact_mi_discrete(table);
      r.worst_error = std::max(r.worst_error, gap);
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult dv_tight() {
    PropertyResult r{"dv_tight_at_optimal", "DV bound equals exact MI at the log density-ratio critic", true, 0.0,
                     1e-9, 0};
    for (int t = 0; t < opt_.random_tables; ++t) {
      const auto table = random_table(rng_, 4, 4);
      const double err =
          std::abs(mi::dv_bound_exact(table, mi::optimal_critic(table)) - mi::exact_mi_discrete(table));
      r.worst_error = std::max(r.worst_error, err);
      ++r.cases;
    }
    r.passed = r.worst_error < r.tolerance;
    return r;
  }

  PropertyResult batch_dv_consistency() {
    PropertyResult r{"batch_dv_matches_weighted",
                     "batch DV estimate equals the weighted bound with diagonal joint and uniform marginal", true, 0.0,
                     1e-12, 0};
    std::normal_distribution<double> score(0.0, 3.0);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + t % 7;
      Tensor s({n, n});
      for (auto& v : s.values()) v = score(rng_);
      const RowMatrix joint = RowMatrix::Identity(n, n) / static_cast<double>(n);
      const RowMatrix marginal = RowMatrix::Constant(n, n, 1.0 / static_cast<double>(n * n));
      const double err =
          std::abs(loss::dv_lower_bound(s).value - loss::dv_lower_bound(RowMatrix(s.matrix()), joint, marginal));
      r.worst_error = std::max(r.worst_error, err);
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult prediction_bound() {
    PropertyResult r{"prediction_term_le_mi", "H(Y) - cross-entropy of any decoder q(y|x) <= I(X;Y), tight at p(y|x)",
                     true, 0.0, 1e-9, 0};
    std::normal_distribution<double> logit(0.0, 2.0);
    for (int t = 0; t < opt_.random_tables; ++t) {
      const auto table = random_table(rng_, 4, 3);
      const RowMatrix& p = table.p();
      const Vector px = table.row_marginal();
      const double hy = mi::entropy(table.col_marginal());
      const double exact = mi::exact_mi_discrete(table);
      double ce_random = 0.0, ce_true = 0.0;
      for (int i = 0; i < p.rows(); ++i) {
        Vector l(p.cols());
        for (auto& v : l) v = logit(rng_);
        const double lse = std::log(l.array().exp().sum());
        for (int j = 0; j < p.cols(); ++j) {
          ce_random -= p(i, j) * (l(j) - lse);
          if (p(i, j) > 0) ce_true -= p(i, j) * std::log(p(i, j) / px(i));
        }
      }
      r.worst_error = std::max({r.worst_error, hy - ce_random - exact, std::abs(hy - ce_true - exact)});
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult transpose_symmetry() {
    PropertyResult r{"mi_transpose_symmetry", "exact MI is symmetric under transposition", true, 0.0, 1e-12, 0};
    for (int t = 0; t < opt_.random_tables; ++t) {
      const auto table = random_table(rng_, 3 + t % 3, 2 + t % 4);
      const double err = std::abs(mi::exact_mi_discrete(table) - mi::exact_mi_discrete(table.transposed()));
      r.worst_error = std::max(r.worst_error, err);
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult data_processing() {
    PropertyResult r{"data_processing", "merging two columns never increases exact MI", true, 0.0, 1e-12, 0};
    for (int t = 0; t < opt_.random_tables; ++t) {
      const auto table = random_table(rng_, 4, 4);
      const Eigen::Index a = t % 4, b = (a + 1 + (t / 4) % 3) % 4;
      const double gain = mi::exact_mi_discrete(table.merge_columns(a, b)) - mi::exact_mi_discrete(table);
      r.worst_error = std::max(r.worst_error, gain);
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult kl_quadrature() {
    PropertyResult r{"kl_matches_quadrature", "closed-form Gaussian KL to N(0,1) matches Simpson quadrature", true, 0.0,
                     1e-6, 0};
    std::uniform_real_distribution<double> mu_d(-3.0, 3.0), var_d(0.05, 5.0);
    for (int t = 0; t < opt_.kl_cases; ++t) {
      const double mu = mu_d(rng_), var = var_d(rng_), sd = std::sqrt(var);
      const double quad = simpson(
          [&](double x) {
            const double lp = log_normal_pdf(x, mu, var);
            return std::exp(lp) * (lp - log_normal_pdf(x, 0.0, 1.0));
          },
          mu - 14.0 * sd, mu + 14.0 * sd, 4000);
      r.worst_error = std::max(r.worst_error, std::abs(kl(mu, var) - quad));
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult kl_reference_values() {
    PropertyResult r{"kl_reference_values", "KL is 0 at (mu, var) = (0, 1) and 1/2 at (1, 1)", true, 0.0, 1e-12, 2};
    r.worst_error = std::max(std::abs(kl(0.0, 1.0)), std::abs(kl(1.0, 1.0) - 0.5));
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult kl_upper_bound() {
    PropertyResult r{"kl_upper_bounds_mi",
                     "E_x KL(p(t|x) || N(0,1)) >= I(X;T) on 1-D linear-Gaussian channels (quadrature over x)", true,
                     0.0, 1e-9, 0};
    std::uniform_real_distribution<double> gain_d(-3.0, 3.0), noise_d(0.05, 5.0);
    for (int t = 0; t < 40; ++t) {
      const double gain = gain_d(rng_), noise = noise_d(rng_);
      const double expected_kl = simpson(
          [&](double x) { return std::exp(log_normal_pdf(x, 0.0, 1.0)) * kl(gain * x, noise); }, -14.0, 14.0, 2000);
      const double exact = mi::linear_gaussian_mi(gain, noise);
      // Both the ordering and the analytic value of the expectation must hold.
      const double violation = std::max(exact - expected_kl,
                                        std::abs(expected_kl - mi::linear_gaussian_kl_bound(gain, noise)) - 1e-7);
      r.worst_error = std::max(r.worst_error, violation);
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult gaussian_mi_quadrature() {
    PropertyResult r{"gaussian_mi_quadrature", "bivariate-normal MI closed form matches 2-D Simpson quadrature", true,
                     0.0, 1e-6, 0};
    for (double rho : {-0.8, -0.3, 0.0, 0.5, 0.9}) {
      const double det = 1.0 - rho * rho;
      const auto log_joint = [&](double x, double y) {
        return -std::log(2.0 * std::numbers::pi * std::sqrt(det)) - (x * x - 2.0 * rho * x * y + y * y) / (2.0 * det);
      };
      const double quad = simpson(
          [&](double x) {
            return simpson(
                [&](double y) {
                  const double lj = log_joint(x, y);
                  return std::exp(lj) * (lj - log_normal_pdf(x, 0, 1) - log_normal_pdf(y, 0, 1));
                },
                -9.0, 9.0, 600);
          },
          -9.0, 9.0, 600);
      r.worst_error = std::max(r.worst_error, std::abs(quad - mi::gaussian_mi(rho)));
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

  PropertyResult kl_nonnegative() {
    PropertyResult r{"kl_nonnegative", "Gaussian KL to N(0,1) is nonnegative", true, 0.0, 1e-15, 0};
    std::uniform_real_distribution<double> mu_d(-5.0, 5.0), lv_d(-8.0, 3.0);
    for (int t = 0; t < 1000; ++t) {
      r.worst_error = std::max(r.worst_error, -kl(mu_d(rng_), std::exp(lv_d(rng_))));
      ++r.cases;
    }
    r.passed = r.worst_error <= r.tolerance;
    return r;
  }

 private:
  SuiteOptions opt_;
  Rng rng_;
};

}  // namespace

bool SuiteReport::passed() const {
  return !properties.empty() &&
         std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed; });
}

std::string SuiteReport::summary() const {
  std::ostringstream out;
  for (const auto& p : properties) {
    out << (p.passed ? "PASS " : "FAIL ") << std::left << std::setw(28) << p.name << " cases=" << std::setw(4)
        << p.cases << " worst=" << std::scientific << std::setprecision(3) << p.worst_error << " tol=" << p.tolerance
        << std::defaultfloat << "  " << p.description << '\n';
  }
  const auto failed = std::count_if(properties.begin(), properties.end(), [](const auto& p) { return !p.passed; });
  out << properties.size() << " properties, " << failed << " failed, " << std::fixed << std::setprecision(2) << seconds
      << " s\n";
  return out.str();
}

SuiteReport verify_bounds(const SuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Suite suite(options);
  SuiteReport report;
  report.properties.push_back(suite.dv_below_mi());
  report.properties.push_back(suite.dv_tight());
  report.properties.push_back(suite.batch_dv_consistency());
  report.properties.push_back(suite.prediction_bound());
  report.properties.push_back(suite.transpose_symmetry());
  report.properties.push_back(suite.data_processing());
  report.properties.push_back(suite.kl_quadrature());
  report.properties.push_back(suite.kl_reference_values());
  report.properties.push_back(suite.kl_nonnegative());
  report.properties.push_back(suite.kl_upper_bound());
  report.properties.push_back(suite.gaussian_mi_quadrature());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace kf::bounds
