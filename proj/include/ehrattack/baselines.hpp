#pragma once

#include <string_view>
#include <vector>

#include "ehrattack/attack.hpp"

namespace ehrattack {

enum class AttackerKind {
  random,
  greedy_saliency,
  greedy_pwws,
  rl_uniform,         // score-based initialization removed
  rl_flat,            // hierarchical position selection removed
  rl_stochastic_sub,  // best-substitute selection removed
  medattacker,
};

std::string_view attacker_kind_name(AttackerKind kind);
AttackerKind parse_attacker_kind(std::string_view name);  // throws ConfigError
const std::vector<AttackerKind>& all_attacker_kinds();

struct AttackerSpec {
  AttackerKind kind = AttackerKind::medattacker;
  AttackConfig cfg;
};

/// Up to `episodes` passes; each pass edits up to epsilon distinct random
/// positions with random substitutes, checking for a flip after every edit.
AttackResult random_attack(const VictimModel& victim, const LabeledRecord& sample,
                           const CodeVocabulary& vocab, const AttackConfig& cfg);

enum class GreedyRanking {
  saliency,            // sign-adjusted saliency alone
  saliency_times_gain  // softmax of sign-adjusted saliency times best single-edit gain
};

/// Ranks the accessible positions once, then applies best substitutes in rank
/// order until the label flips or epsilon edits are made. A position left with
/// no usable substitute is passed over. Deterministic.
AttackResult greedy_attack(const VictimModel& victim, const LabeledRecord& sample,
                           const CodeVocabulary& vocab, const AttackConfig& cfg,
                           GreedyRanking ranking);

/// The RL attack with one component switched off (rl_uniform, rl_flat,
/// rl_stochastic_sub) or none (medattacker).
AttackResult ablation_variant(AttackerKind kind, const VictimModel& victim,
                              const LabeledRecord& sample, const CodeVocabulary& vocab,
                              const AttackConfig& cfg);

RlVariant rl_variant_for(AttackerKind kind);

AttackResult run_attacker(const AttackerSpec& spec, const VictimModel& victim,
                          const LabeledRecord& sample, const CodeVocabulary& vocab);

}  // namespace ehrattack
