#include "ehrattack/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"

namespace ehrattack {

std::string_view attacker_kind_name(AttackerKind kind) {
  switch (kind) {
    case AttackerKind::random:
      return "random";
    case AttackerKind::greedy_saliency:
      return "greedy_saliency";
    case AttackerKind::greedy_pwws:
      return "greedy_pwws";
    case AttackerKind::rl_uniform:
      return "rl_uniform";
    case AttackerKind::rl_flat:
      return "rl_flat";
    case AttackerKind::rl_stochastic_sub:
      return "rl_stochastic_sub";
    case AttackerKind::medattacker:
      return "medattacker";
  }
  return "unknown";
}

const std::vector<AttackerKind>& all_attacker_kinds() {
  static const std::vector<AttackerKind> kinds{
      AttackerKind::random,     AttackerKind::greedy_saliency, AttackerKind::greedy_pwws,
      AttackerKind::rl_uniform, AttackerKind::rl_flat,         AttackerKind::rl_stochastic_sub,
      AttackerKind::medattacker};
  return kinds;
}

AttackerKind parse_attacker_kind(std::string_view name) {
  for (auto kind : all_attacker_kinds()) {
    if (attacker_kind_name(kind) == name) return kind;
  }
  throw ConfigError(fmt::format("unknown attacker '{}'", name));
}

AttackResult random_attack(const VictimModel& model, const LabeledRecord& sample,
                           const CodeVocabulary& vocab, const AttackConfig& cfg) {
  cfg.validate();
  AttackResult result;
  result.patient_id = sample.record.patient_id;
  BlackBox victim(model, result.queries);
  const auto& original = sample.record;
  if (victim.label_for(victim.counted_score(original, QueryPhase::init)) != sample.label) {
    result.skipped = true;
    return result;
  }

  const std::size_t accessible = accessible_visit_count(original, cfg.max_visits);
  SubstituteTable substitutes(vocab, cfg.max_substitutes, cfg.seed);
  Rng rng = sample_rng(cfg, original);
  for (std::size_t pass = 1; pass <= cfg.episodes; ++pass) {
    result.episodes_used = pass;
    PatientRecord working = original;
    std::vector<Edit> edits;
    PositionMask attacked(accessible);
    for (std::size_t t = 0; t < accessible; ++t) attacked[t].assign(original.visits[t].size(), 0);
    for (std::size_t step = 0; step < cfg.epsilon; ++step) {
      const auto mask = availability_mask(substitutes, working, accessible, &attacked);
      std::vector<Position> open;
      for (std::size_t t = 0; t < accessible; ++t) {
        for (std::size_t i = 0; i < mask[t].size(); ++i) {
          if (!mask[t][i]) open.push_back({t, i});
        }
      }
      if (open.empty()) break;
      const Position pos = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
      const auto candidates = open_substitutes(substitutes, working, pos);
      const CodeId chosen =
          candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
      edits.push_back({pos, working.visits[pos.visit][pos.slot], chosen});
      working.visits[pos.visit][pos.slot] = chosen;
      attacked[pos.visit][pos.slot] = 1;
      if (victim.label_for(victim.counted_score(working, QueryPhase::substitute)) != sample.label) {
        result.success = true;
        result.adversarial = std::move(working);
        result.edits = std::move(edits);
        return result;
      }
    }
  }
  return result;
}

AttackResult greedy_attack(const VictimModel& model, const LabeledRecord& sample,
                           const CodeVocabulary& vocab, const AttackConfig& cfg,
                           GreedyRanking ranking) {
  cfg.validate();
  AttackResult result;
  result.patient_id = sample.record.patient_id;
  result.episodes_used = 1;
  BlackBox victim(model, result.queries);
  const auto& original = sample.record;
  const double full = victim.counted_score(original, QueryPhase::init);
  if (victim.label_for(full) != sample.label) {
    result.skipped = true;
    result.episodes_used = 0;
    return result;
  }

  const std::size_t accessible = accessible_visit_count(original, cfg.max_visits);
  SubstituteTable substitutes(vocab, cfg.max_substitutes, cfg.seed);
  const auto saliency = saliency_scores(victim, original, cfg.max_visits, full);
  const double sign = sample.label == 1 ? 1.0 : -1.0;

  struct Ranked {
    Position position;
    double key = 0.0;
  };
  std::vector<Ranked> ranked;
  for (std::size_t t = 0; t < accessible; ++t) {
    for (std::size_t i = 0; i < original.visits[t].size(); ++i) {
      ranked.push_back({{t, i}, sign * saliency[t][i]});
    }
  }

  if (ranking == GreedyRanking::saliency_times_gain) {
    double max_key = -std::numeric_limits<double>::infinity();
    for (const auto& r : ranked) max_key = std::max(max_key, r.key);
    double total = 0.0;
    for (const auto& r : ranked) total += std::exp(r.key - max_key);
    PatientRecord probe = original;
    for (auto& r : ranked) {
      const double weight = std::exp(r.key - max_key) / total;
      auto& slot = probe.visits[r.position.visit][r.position.slot];
      const CodeId code = slot;
      double best_gain = kSkippedGain;
      for (CodeId candidate : open_substitutes(substitutes, original, r.position)) {
        slot = candidate;
        const double gain =
            gain_direction(sample.label) * (victim.counted_score(probe, QueryPhase::rank) - full);
        best_gain = std::max(best_gain, gain);
      }
      slot = code;
      r.key = best_gain == kSkippedGain ? kSkippedGain : weight * best_gain;
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.key > b.key; });

  PatientRecord working = original;
  std::vector<Edit> edits;
  for (const auto& r : ranked) {
    if (edits.size() >= cfg.epsilon) break;
    const auto candidates = open_substitutes(substitutes, working, r.position);
    if (candidates.empty()) continue;
    const auto choice = select_substitute(victim, working, r.position, candidates, sample.label);
    if (!choice.code) continue;
    auto& slot = working.visits[r.position.visit][r.position.slot];
    edits.push_back({r.position, slot, *choice.code});
    slot = *choice.code;
    if (victim.label_for(choice.score) != sample.label) {
      result.success = true;
      result.adversarial = std::move(working);
      result.edits = std::move(edits);
      return result;
    }
  }
  return result;
}

RlVariant rl_variant_for(AttackerKind kind) {
  RlVariant variant;
  switch (kind) {
    case AttackerKind::medattacker:
      break;
    case AttackerKind::rl_uniform:
      variant.score_initialization = false;
      break;
    case AttackerKind::rl_flat:
      variant.layout = PolicyLayout::flat;
      break;
    case AttackerKind::rl_stochastic_sub:
      variant.best_substitute = false;
      break;
    default:
      throw ConfigError(fmt::format("'{}' is not a reinforcement-learning attacker",
                                    attacker_kind_name(kind)));
  }
  return variant;
}

AttackResult ablation_variant(AttackerKind kind, const VictimModel& victim,
                              const LabeledRecord& sample, const CodeVocabulary& vocab,
                              const AttackConfig& cfg) {
  return attack(victim, sample, vocab, cfg, rl_variant_for(kind));
}

AttackResult run_attacker(const AttackerSpec& spec, const VictimModel& victim,
                          const LabeledRecord& sample, const CodeVocabulary& vocab) {
  switch (spec.kind) {
    case AttackerKind::random:
      return random_attack(victim, sample, vocab, spec.cfg);
    case AttackerKind::greedy_saliency:
      return greedy_attack(victim, sample, vocab, spec.cfg, GreedyRanking::saliency);
    case AttackerKind::greedy_pwws:
      return greedy_attack(victim, sample, vocab, spec.cfg, GreedyRanking::saliency_times_gain);
    default:
      return ablation_variant(spec.kind, victim, sample, vocab, spec.cfg);
  }
}

}  // namespace ehrattack
