#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ehrattack/errors.hpp"
#include "ehrattack/policy.hpp"

using namespace ehrattack;
using Catch::Matchers::WithinAbs;

namespace {

/// Pearson chi-square statistic of observed counts against probabilities.
double chi_square(const std::vector<double>& probs, const std::vector<int>& counts, int draws) {
  double stat = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] == 0.0) {
      if (counts[k] != 0) return INFINITY;
      continue;
    }
    const double expected = probs[k] * draws;
    stat += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  return stat;
}

Policy random_policy(const std::vector<std::size_t>& shape, PolicyLayout layout, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Policy p;
  p.layout = layout;
  for (std::size_t n : shape) {
    p.visit_logits.push_back(layout == PolicyLayout::hierarchical ? normal(rng) : 0.0);
    std::vector<double> codes(n);
    for (auto& c : codes) c = normal(rng);
    p.code_logits.push_back(codes);
  }
  return p;
}

}  // namespace

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]", "[policy][softmax]") {
  const std::vector<double> logits{std::log(2.0), 0.0};
  const std::vector<char> open{0, 0};
  const auto p = masked_softmax(logits, open);
  REQUIRE_THAT(p[0], WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(p[1], WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("masked softmax zeroes masked entries and renormalizes", "[policy][softmax]") {
  const std::vector<double> logits{5.0, 1.0, 1.0};
  const auto p = masked_softmax(logits, std::vector<char>{1, 0, 0});
  REQUIRE(p[0] == 0.0);
  REQUIRE_THAT(p[1], WithinAbs(0.5, 1e-15));
  REQUIRE_THROWS_AS(masked_softmax(logits, std::vector<char>{1, 1, 1}), ExhaustionError);
}

TEST_CASE("masked softmax is stable for extreme logits and sums to one", "[policy][softmax][property]") {
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 300.0);
  for (int n = 0; n < 500; ++n) {
    std::vector<double> logits(1 + n % 9);
    std::vector<char> mask(logits.size(), 0);
    for (auto& l : logits) l = normal(rng);
    for (std::size_t k = 1; k < mask.size(); ++k) mask[k] = static_cast<char>(rng() % 3 == 0);
    const auto p = masked_softmax(logits, mask);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
    for (double v : p) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("initialize_policy orients logits by the true label", "[policy][init]") {
  ScoreVectors scores;
  scores.contribution = {std::log(2.0), 0.0};
  scores.saliency = {{0.0}, {0.0}};
  const auto pos = initialize_policy(scores, 1, 1.0);
  const auto p1 = masked_softmax(pos.visit_logits, std::vector<char>{0, 0});
  REQUIRE_THAT(p1[0], WithinAbs(2.0 / 3.0, 1e-15));
  const auto neg = initialize_policy(scores, 0, 1.0);
  const auto p0 = masked_softmax(neg.visit_logits, std::vector<char>{0, 0});
  REQUIRE_THAT(p0[0], WithinAbs(1.0 / 3.0, 1e-15));
  REQUIRE_THAT(p0[1], WithinAbs(2.0 / 3.0, 1e-15));
  const auto cooled = initialize_policy(scores, 1, 0.5);
  REQUIRE_THAT(cooled.visit_logits[0], WithinAbs(2.0 * std::log(2.0), 1e-15));
}

TEST_CASE("zero scores and the uniform policy give uniform distributions", "[policy][init]") {
  ScoreVectors zeros;
  zeros.contribution = {0.0, 0.0, 0.0};
  zeros.saliency = {{0.0, 0.0}, {0.0}, {0.0, 0.0, 0.0}};
  const auto a = initialize_policy(zeros, 1, 1.0);
  const auto b = uniform_policy(PositionMask{{0, 0}, {0}, {0, 0, 0}});
  for (const auto* p : {&a, &b}) {
    const auto probs = position_probabilities(*p, empty_mask(*p));
    REQUIRE_THAT(probs[0][0], WithinAbs(1.0 / 6.0, 1e-15));
    REQUIRE_THAT(probs[1][0], WithinAbs(1.0 / 3.0, 1e-15));
    REQUIRE_THAT(probs[2][2], WithinAbs(1.0 / 9.0, 1e-15));
  }
  const auto flat = uniform_policy(PositionMask{{0, 0}, {0}, {0, 0, 0}}, PolicyLayout::flat);
  const auto fp = position_probabilities(flat, empty_mask(flat));
  for (const auto& row : fp) {
    for (double v : row) REQUIRE_THAT(v, WithinAbs(1.0 / 6.0, 1e-15));
  }
}

TEST_CASE("a single open position is forced with log-probability 0", "[policy][sampling]") {
  Rng rng(3);
  Policy p = random_policy({2, 3}, PolicyLayout::hierarchical, rng);
  PositionMask mask{{1, 1}, {1, 0, 1}};
  for (int n = 0; n < 20; ++n) {
    const auto s = sample_position(p, mask, rng);
    REQUIRE(s.position == Position{1, 1});
    REQUIRE(s.log_prob == 0.0);
  }
  PositionMask closed{{1, 1}, {1, 1, 1}};
  REQUIRE_FALSE(has_open_position(closed));
  REQUIRE_THROWS_AS(sample_position(p, closed, rng), ExhaustionError);
}

TEST_CASE("uniform 2x2 policy samples each slot a quarter of the time", "[policy][sampling][statistics]") {
  const auto p = uniform_policy(PositionMask{{0, 0}, {0, 0}});
  Rng rng(5);
  std::map<Position, int> counts;
  for (int n = 0; n < 10000; ++n) ++counts[sample_position(p, empty_mask(p), rng).position];
  REQUIRE(counts.size() == 4);
  for (const auto& [pos, c] : counts) REQUIRE(std::abs(c / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("sampling frequencies match policy probabilities", "[policy][sampling][statistics]") {
  // Chi-square critical values at p = 0.001 for the degrees of freedom used here.
  const std::map<int, double> critical{{3, 16.27}, {4, 18.47}, {5, 20.52}, {6, 22.46}, {7, 24.32}, {8, 26.12}};
  Rng rng(11);
  for (auto layout : {PolicyLayout::hierarchical, PolicyLayout::flat}) {
    for (int trial = 0; trial < 6; ++trial) {
      const std::vector<std::size_t> shape{2, 3, static_cast<std::size_t>(1 + trial % 4)};
      const Policy p = random_policy(shape, layout, rng);
      PositionMask mask = empty_mask(p);
      mask[1][trial % 3] = 1;
      const auto probs = position_probabilities(p, mask);
      std::vector<double> flat_probs;
      std::map<Position, std::size_t> index;
      for (std::size_t t = 0; t < probs.size(); ++t) {
        for (std::size_t i = 0; i < probs[t].size(); ++i) {
          index[{t, i}] = flat_probs.size();
          flat_probs.push_back(probs[t][i]);
        }
      }
      std::vector<int> counts(flat_probs.size(), 0);
      const int draws = 10000;
      for (int n = 0; n < draws; ++n) {
        const auto s = sample_position(p, mask, rng);
        ++counts[index[s.position]];
        REQUIRE_THAT(s.log_prob, WithinAbs(std::log(probs[s.position.visit][s.position.slot]), 1e-12));
      }
      for (std::size_t k = 0; k < counts.size(); ++k) {
        REQUIRE(std::abs(counts[k] / double(draws) - flat_probs[k]) <= 0.02);
      }
      const int dof = static_cast<int>(std::count_if(flat_probs.begin(), flat_probs.end(),
                                                     [](double v) { return v > 0; })) - 1;
      REQUIRE(chi_square(flat_probs, counts, draws) < critical.at(dof));
    }
  }
}

TEST_CASE("hierarchical probabilities factor as p(visit) p(slot | visit)", "[policy]") {
  Rng rng(2);
  const Policy p = random_policy({2, 3}, PolicyLayout::hierarchical, rng);
  PositionMask mask{{1, 1}, {0, 1, 0}};
  // Visit 0 is fully masked, so visit 1 takes all the mass.
  const auto probs = position_probabilities(p, mask);
  REQUIRE(probs[0][0] == 0.0);
  const double z = std::exp(p.code_logits[1][0]) + std::exp(p.code_logits[1][2]);
  REQUIRE_THAT(probs[1][0], WithinAbs(std::exp(p.code_logits[1][0]) / z, 1e-14));
  REQUIRE_THAT(log_probability(p, mask, {1, 2}), WithinAbs(std::log(std::exp(p.code_logits[1][2]) / z), 1e-12));
}

TEST_CASE("discounted returns follow the backward recurrence", "[policy][returns]") {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  const auto g = discounted_returns(ones, 0.95);
  REQUIRE_THAT(g[0], WithinAbs(2.8525, 1e-12));
  REQUIRE_THAT(g[1], WithinAbs(1.95, 1e-12));
  REQUIRE_THAT(g[2], WithinAbs(1.0, 1e-12));
  REQUIRE(discounted_returns(std::vector<double>{}, 0.95).empty());
  const auto undiscounted = discounted_returns(std::vector<double>{0.5, -1.0, 2.0}, 1.0);
  REQUIRE_THAT(undiscounted[0], WithinAbs(1.5, 1e-15));
  const auto myopic = discounted_returns(std::vector<double>{0.5, -1.0, 2.0}, 0.0);
  REQUIRE(myopic == std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("log-probability gradient matches finite differences", "[policy][gradient]") {
  Rng rng(21);
  for (auto layout : {PolicyLayout::hierarchical, PolicyLayout::flat}) {
    for (int n = 0; n < 20; ++n) {
      Policy p = random_policy({3, 1, 4}, layout, rng);
      PositionMask mask = empty_mask(p);
      mask[2][n % 4] = 1;
      const auto pos = sample_position(p, mask, rng).position;
      Policy grad = zeros_like(p);
      add_log_prob_gradient(p, mask, pos, 1.0, grad);
      auto check = [&](double& logit, double analytic) {
        const double h = 1e-5, keep = logit;
        logit = keep + h;
        const double up = log_probability(p, mask, pos);
        logit = keep - h;
        const double down = log_probability(p, mask, pos);
        logit = keep;
        REQUIRE_THAT(analytic, WithinAbs((up - down) / (2 * h), 1e-8));
      };
      for (std::size_t t = 0; t < p.visit_logits.size(); ++t) check(p.visit_logits[t], grad.visit_logits[t]);
      for (std::size_t t = 0; t < p.code_logits.size(); ++t) {
        for (std::size_t i = 0; i < p.code_logits[t].size(); ++i) {
          check(p.code_logits[t][i], grad.code_logits[t][i]);
        }
      }
    }
  }
}

TEST_CASE("one ascent step on a symmetric pair moves logits by +-0.5", "[policy][gradient]") {
  Policy p = uniform_policy(PositionMask{{0, 0}}, PolicyLayout::flat);
  Policy grad = zeros_like(p);
  add_log_prob_gradient(p, empty_mask(p), {0, 0}, 1.0, grad);
  REQUIRE_THAT(grad.code_logits[0][0], WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(grad.code_logits[0][1], WithinAbs(-0.5, 1e-15));
}

TEST_CASE("shifting all contribution scores leaves the visit distribution unchanged", "[policy][init][property]") {
  Rng rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int n = 0; n < 100; ++n) {
    ScoreVectors scores;
    for (int t = 0; t < 1 + n % 6; ++t) {
      scores.contribution.push_back(normal(rng));
      scores.saliency.push_back({normal(rng), normal(rng)});
    }
    auto shifted = scores;
    const double c = 5.0 * normal(rng);
    for (auto& x : shifted.contribution) x += c;
    const int label = n % 2;
    const auto a = initialize_policy(scores, label, 0.7);
    const auto b = initialize_policy(shifted, label, 0.7);
    const std::vector<char> open(scores.contribution.size(), 0);
    const auto pa = masked_softmax(a.visit_logits, open);
    const auto pb = masked_softmax(b.visit_logits, open);
    for (std::size_t t = 0; t < pa.size(); ++t) REQUIRE_THAT(pa[t], WithinAbs(pb[t], 1e-12));
  }
}

TEST_CASE("distributions stay valid after many ascent steps", "[policy][gradient][property]") {
  Rng rng(33);
  Policy p = random_policy({3, 2, 4}, PolicyLayout::hierarchical, rng);
  for (int step = 0; step < 5000; ++step) {
    const auto mask = empty_mask(p);
    const auto pos = sample_position(p, mask, rng).position;
    Policy grad = zeros_like(p);
    add_log_prob_gradient(p, mask, pos, 50.0, grad);
    for (std::size_t t = 0; t < p.visit_logits.size(); ++t) {
      p.visit_logits[t] += grad.visit_logits[t];
      for (std::size_t i = 0; i < p.code_logits[t].size(); ++i) p.code_logits[t][i] += grad.code_logits[t][i];
    }
  }
  double total = 0.0;
  for (const auto& row : position_probabilities(p, empty_mask(p))) {
    for (double v : row) {
      REQUIRE(std::isfinite(v));
      total += v;
    }
  }
  REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
}
