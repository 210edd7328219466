#include "fixtures.hpp"

#include <random>

namespace kf::testing {

std::vector<models::FactorNetwork> make_factor_networks(const std::vector<std::size_t>& classes, std::uint64_t seed) {
  auto spec = models::BackboneSpec::cnn3(1, 16, 16);
  spec.widths = {4, 6, 8};
  auto ckn = std::make_shared<models::Backbone>(spec, seed);
  std::vector<models::FactorNetwork> out;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    const std::uint64_t s = seed + 100 * (j + 1);
    out.push_back({static_cast<int>(j), ckn, std::make_shared<models::Backbone>(spec.narrowed(0.5), s),
                   std::make_shared<models::TaskHead>(8, std::vector<std::size_t>{}, classes[j], s + 1),
                   std::make_shared<models::TaskHead>(8, std::vector<std::size_t>{}, classes[j], s + 2)});
  }
  return out;
}

assembly::FactorHub make_hub(const std::vector<models::FactorNetwork>& factors) {
  assembly::FactorHub hub(factors.front().ckn, "teacher-digest", R"({"source": "fixture"})");
  for (const auto& f : factors) hub.register_factor(f);
  return hub;
}

Tensor random_images(std::size_t n, std::uint64_t seed) {
  Tensor t({n, 1, 16, 16});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

metrics::IndexMatrix grid_factors(const std::vector<int>& cards, int repeats) {
  Eigen::Index n = repeats;
  for (int c : cards) n *= c;
  metrics::IndexMatrix f(n, static_cast<Eigen::Index>(cards.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index rest = i / repeats;
    for (std::size_t k = cards.size(); k-- > 0;) {
      f(i, static_cast<Eigen::Index>(k)) = static_cast<int>(rest % cards[k]);
      rest /= cards[k];
    }
  }
  return f;
}

metrics::CodeMatrix perfect_code(const metrics::IndexMatrix& factors) {
  return {factors.cast<double>(), factors};
}

metrics::CodeMatrix noise_code(const metrics::IndexMatrix& factors, Eigen::Index dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RowMatrix codes(factors.rows(), dims);
  for (auto& v : codes.reshaped()) v = g(rng);
  return {codes, factors};
}

}  // namespace kf::testing
