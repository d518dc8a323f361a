#pragma once

#include <span>
#include <vector>

#include "ehrattack/ehr.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

/// Per-slot availability over the accessible visits: nonzero = masked.
using PositionMask = std::vector<std::vector<char>>;

/// Contribution score per accessible visit and saliency score per code slot.
struct ScoreVectors {
  std::vector<double> contribution;
  std::vector<std::vector<double>> saliency;
};

enum class PolicyLayout {
  hierarchical,  // visit ~ softmax(visit_logits), then slot ~ softmax(code_logits[visit])
  flat,          // (visit, slot) ~ one softmax over all code_logits entries
};

/// Per-sample categorical policy over attack positions. `visit_logits` is unused
/// by the flat layout.
struct Policy {
  PolicyLayout layout = PolicyLayout::hierarchical;
  std::vector<double> visit_logits;
  std::vector<std::vector<double>> code_logits;
};

/// Softmax over the unmasked entries; masked entries get probability 0.
/// Throws ExhaustionError if every entry is masked.
std::vector<double> masked_softmax(std::span<const double> logits, std::span<const char> mask);

/// Visit logits = s·contribution/τ and code logits = s·saliency/τ with
/// s = +1 for label 1 and -1 for label 0, so mass goes to the positions that
/// most support the true label.
Policy initialize_policy(const ScoreVectors& scores, int label, double temperature);

/// All-zero logits with the shape of `mask`.
Policy uniform_policy(const PositionMask& shape, PolicyLayout layout = PolicyLayout::hierarchical);

/// Flat layout with slot logits s·saliency/τ.
Policy flat_policy(const ScoreVectors& scores, int label, double temperature);

PositionMask empty_mask(const Policy& policy);
bool has_open_position(const PositionMask& mask);

struct SampledPosition {
  Position position;
  double log_prob = 0.0;
};

SampledPosition sample_position(const Policy& policy, const PositionMask& mask, Rng& rng);

/// log π(position) under `mask`.
double log_probability(const Policy& policy, const PositionMask& mask, Position position);

/// Probability of each slot under `mask` (same shape as the mask).
std::vector<std::vector<double>> position_probabilities(const Policy& policy,
                                                        const PositionMask& mask);

/// gradient += weight · ∇ log π(position | mask). `gradient` must share the
/// policy's shape; for a masked softmax the log-prob gradient is onehot - p.
void add_log_prob_gradient(const Policy& policy, const PositionMask& mask, Position position,
                           double weight, Policy& gradient);

Policy zeros_like(const Policy& policy);

/// G_l = sum_{l' >= l} γ^(l'-l) r_l'
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

}  // namespace ehrattack
