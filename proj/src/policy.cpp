#include "ehrattack/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehrattack/errors.hpp"

namespace ehrattack {

namespace {

bool all_masked(std::span<const char> mask) {
  return std::all_of(mask.begin(), mask.end(), [](char m) { return m != 0; });
}

std::vector<char> visit_mask(const PositionMask& mask) {
  std::vector<char> out(mask.size());
  for (std::size_t t = 0; t < mask.size(); ++t) out[t] = all_masked(mask[t]) ? 1 : 0;
  return out;
}

/// Inverse-CDF draw; falls back to the last open entry against round-off.
std::size_t draw(std::span<const double> probs, std::span<const char> mask, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cumulative = 0.0;
  std::size_t last_open = probs.size();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (mask[k]) continue;
    last_open = k;
    cumulative += probs[k];
    if (u < cumulative) return k;
  }
  return last_open;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& row : rows) out.insert(out.end(), row.begin(), row.end());
  return out;
}

std::vector<char> flatten(const PositionMask& mask) {
  std::vector<char> out;
  for (const auto& row : mask) out.insert(out.end(), row.begin(), row.end());
  return out;
}

std::size_t flat_index(const PositionMask& mask, Position position) {
  std::size_t offset = 0;
  for (std::size_t t = 0; t < position.visit; ++t) offset += mask[t].size();
  return offset + position.slot;
}

Position unflatten(const PositionMask& mask, std::size_t index) {
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (index < mask[t].size()) return {t, index};
    index -= mask[t].size();
  }
  throw ExhaustionError("flat index out of range");
}

std::vector<std::vector<double>> scaled(const std::vector<std::vector<double>>& rows, double s) {
  auto out = rows;
  for (auto& row : out) {
    for (auto& x : row) x *= s;
  }
  return out;
}

}  // namespace

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const char> mask) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!mask[k]) max_logit = std::max(max_logit, logits[k]);
  }
  if (max_logit == -std::numeric_limits<double>::infinity()) {
    throw ExhaustionError("masked_softmax: every entry is masked");
  }
  std::vector<double> probs(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (mask[k]) continue;
    probs[k] = std::exp(logits[k] - max_logit);
    total += probs[k];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

Policy initialize_policy(const ScoreVectors& scores, int label, double temperature) {
  const double sign = label == 1 ? 1.0 : -1.0;
  Policy policy;
  policy.layout = PolicyLayout::hierarchical;
  policy.visit_logits = scores.contribution;
  for (auto& x : policy.visit_logits) x *= sign / temperature;
  policy.code_logits = scaled(scores.saliency, sign / temperature);
  return policy;
}

Policy flat_policy(const ScoreVectors& scores, int label, double temperature) {
  const double sign = label == 1 ? 1.0 : -1.0;
  Policy policy;
  policy.layout = PolicyLayout::flat;
  policy.visit_logits.assign(scores.saliency.size(), 0.0);
  policy.code_logits = scaled(scores.saliency, sign / temperature);
  return policy;
}

Policy uniform_policy(const PositionMask& shape, PolicyLayout layout) {
  Policy policy;
  policy.layout = layout;
  policy.visit_logits.assign(shape.size(), 0.0);
  for (const auto& row : shape) policy.code_logits.emplace_back(row.size(), 0.0);
  return policy;
}

Policy zeros_like(const Policy& policy) {
  Policy out = policy;
  std::fill(out.visit_logits.begin(), out.visit_logits.end(), 0.0);
  for (auto& row : out.code_logits) std::fill(row.begin(), row.end(), 0.0);
  return out;
}

PositionMask empty_mask(const Policy& policy) {
  PositionMask mask;
  mask.reserve(policy.code_logits.size());
  for (const auto& row : policy.code_logits) mask.emplace_back(row.size(), 0);
  return mask;
}

bool has_open_position(const PositionMask& mask) {
  return std::any_of(mask.begin(), mask.end(),
                     [](const auto& row) { return !all_masked(row); });
}

SampledPosition sample_position(const Policy& policy, const PositionMask& mask, Rng& rng) {
  if (!has_open_position(mask)) throw ExhaustionError("sample_position: every position is masked");
  if (policy.layout == PolicyLayout::flat) {
    const auto logits = flatten(policy.code_logits);
    const auto flat_mask = flatten(mask);
    const auto probs = masked_softmax(logits, flat_mask);
    const std::size_t k = draw(probs, flat_mask, rng);
    return {unflatten(mask, k), std::log(probs[k])};
  }
  const auto vmask = visit_mask(mask);
  const auto visit_probs = masked_softmax(policy.visit_logits, vmask);
  const std::size_t t = draw(visit_probs, vmask, rng);
  const auto slot_probs = masked_softmax(policy.code_logits[t], mask[t]);
  const std::size_t i = draw(slot_probs, mask[t], rng);
  return {{t, i}, std::log(visit_probs[t]) + std::log(slot_probs[i])};
}

double log_probability(const Policy& policy, const PositionMask& mask, Position position) {
  if (policy.layout == PolicyLayout::flat) {
    const auto probs = masked_softmax(flatten(policy.code_logits), flatten(mask));
    return std::log(probs[flat_index(mask, position)]);
  }
  const auto visit_probs = masked_softmax(policy.visit_logits, visit_mask(mask));
  const auto slot_probs = masked_softmax(policy.code_logits[position.visit], mask[position.visit]);
  return std::log(visit_probs[position.visit]) + std::log(slot_probs[position.slot]);
}

std::vector<std::vector<double>> position_probabilities(const Policy& policy,
                                                        const PositionMask& mask) {
  std::vector<std::vector<double>> out;
  for (const auto& row : mask) out.emplace_back(row.size(), 0.0);
  if (policy.layout == PolicyLayout::flat) {
    const auto probs = masked_softmax(flatten(policy.code_logits), flatten(mask));
    std::size_t k = 0;
    for (auto& row : out) {
      for (auto& p : row) p = probs[k++];
    }
    return out;
  }
  const auto vmask = visit_mask(mask);
  const auto visit_probs = masked_softmax(policy.visit_logits, vmask);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (vmask[t]) continue;
    const auto slot_probs = masked_softmax(policy.code_logits[t], mask[t]);
    for (std::size_t i = 0; i < slot_probs.size(); ++i) out[t][i] = visit_probs[t] * slot_probs[i];
  }
  return out;
}

void add_log_prob_gradient(const Policy& policy, const PositionMask& mask, Position position,
                           double weight, Policy& gradient) {
  if (policy.layout == PolicyLayout::flat) {
    const auto flat_mask = flatten(mask);
    const auto probs = masked_softmax(flatten(policy.code_logits), flat_mask);
    const std::size_t chosen = flat_index(mask, position);
    std::size_t k = 0;
    for (auto& row : gradient.code_logits) {
      for (auto& g : row) {
        if (!flat_mask[k]) g += weight * ((k == chosen ? 1.0 : 0.0) - probs[k]);
        ++k;
      }
    }
    return;
  }
  const auto vmask = visit_mask(mask);
  const auto visit_probs = masked_softmax(policy.visit_logits, vmask);
  for (std::size_t t = 0; t < vmask.size(); ++t) {
    if (vmask[t]) continue;
    gradient.visit_logits[t] += weight * ((t == position.visit ? 1.0 : 0.0) - visit_probs[t]);
  }
  const auto& slot_mask = mask[position.visit];
  const auto slot_probs = masked_softmax(policy.code_logits[position.visit], slot_mask);
  auto& row = gradient.code_logits[position.visit];
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (slot_mask[i]) continue;
    row[i] += weight * ((i == position.slot ? 1.0 : 0.0) - slot_probs[i]);
  }
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> returns(rewards.size());
  double running = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    running = rewards[k] + gamma * running;
    returns[k] = running;
  }
  return returns;
}

}  // namespace ehrattack
