#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ehrattack/ehr.hpp"
#include "ehrattack/policy.hpp"
#include "ehrattack/victim.hpp"

namespace ehrattack {

struct AttackConfig {
  std::size_t epsilon = 5;      // maximum number of substituted codes
  std::size_t max_visits = 20;  // only the first max_visits visits may be edited
  std::size_t episodes = 500;   // learning episodes per sample
  double gamma = 0.95;
  double alpha = 1e-3;
  double temperature = 1.0;
  std::size_t max_substitutes = 10;
  std::uint64_t seed = 0;
  bool keep_traces = false;

  void validate() const;  // throws ConfigError
};

/// Which pieces of the full attack are switched on; the ablations turn one off.
struct RlVariant {
  PolicyLayout layout = PolicyLayout::hierarchical;
  bool score_initialization = true;
  bool best_substitute = true;  // false: uniform draw from the substitute set
};

inline constexpr RlVariant kFullRlVariant{};

struct Edit {
  Position position;
  CodeId old_code{};
  CodeId new_code{};

  bool operator==(const Edit&) const = default;
};

struct EpisodeStep {
  std::uint64_t state_hash = 0;  // record before the step
  Position position;
  double log_prob = 0.0;
  double reward = 0.0;
  CodeId old_code{};
  CodeId new_code{};
  std::size_t candidates = 0;  // substitutes scored at this step
  PositionMask mask;           // positions unavailable when the action was drawn
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  bool success = false;
};

struct AttackResult {
  std::string patient_id;
  bool skipped = false;  // victim already misclassifies the original record
  bool success = false;
  std::optional<PatientRecord> adversarial;
  std::vector<Edit> edits;
  std::size_t episodes_used = 0;
  QueryLedger queries;
  std::vector<EpisodeTrace> traces;  // only with AttackConfig::keep_traces
};

/// Lazily cached substitute sets for one (vocabulary, size, seed).
class SubstituteTable {
 public:
  SubstituteTable(const CodeVocabulary& vocab, std::size_t max_size, std::uint64_t seed)
      : vocab_(vocab), max_size_(max_size), seed_(seed) {}

  const std::vector<CodeId>& operator()(CodeId code);

 private:
  const CodeVocabulary& vocab_;
  std::size_t max_size_;
  std::uint64_t seed_;
  std::unordered_map<CodeId, std::vector<CodeId>> cache_;
};

/// Substitutes of the code at `position` that would not duplicate a code
/// already present in that visit.
std::vector<CodeId> open_substitutes(SubstituteTable& table, const PatientRecord& record,
                                     Position position);

/// Accessible slots with no open substitute are masked; so are `attacked` slots.
PositionMask availability_mask(SubstituteTable& table, const PatientRecord& record,
                               std::size_t accessible_visits, const PositionMask* attacked);

/// xi_t = F(v_1..v_t) - F(v_1..v_{t-1}) over the accessible visits; T_acc + 1 queries.
std::vector<double> contribution_scores(BlackBox& victim, const PatientRecord& record,
                                        std::size_t max_visits);

/// xi_t^(i) = F(V) - F(V - c_i) over the accessible visits. Costs one query per
/// code, plus one for F(V) unless `full_score` is supplied.
std::vector<std::vector<double>> saliency_scores(BlackBox& victim, const PatientRecord& record,
                                                 std::size_t max_visits,
                                                 std::optional<double> full_score = std::nullopt);

/// -1 for label 1 (push the score down), +1 for label 0.
double gain_direction(int label);

inline constexpr double kSkippedGain = -std::numeric_limits<double>::infinity();

/// gain_direction(label) · (F(current with candidate at position) - baseline),
/// where baseline = F(current). A candidate that would duplicate a code in the
/// visit is not queried and yields kSkippedGain.
double adversarial_gain(BlackBox& victim, const PatientRecord& current, Position position,
                        CodeId candidate, int label, double baseline);

struct SubstituteChoice {
  std::optional<CodeId> code;  // empty when every candidate was skipped
  double gain = 0.0;
  double score = 0.0;  // F of the record with the chosen code (baseline if none)
};

/// Queries F(current) once, then each usable candidate; argmax of gain with
/// ties going to the earliest candidate.
SubstituteChoice select_substitute(BlackBox& victim, const PatientRecord& current,
                                   Position position, std::span<const CodeId> substitutes,
                                   int label);

struct EpisodeOutcome {
  EpisodeTrace trace;
  PatientRecord record;  // working record after the last step
  std::vector<Edit> edits;
};

/// One rollout of up to epsilon steps from `original`, stopping at the first
/// label flip.
EpisodeOutcome run_episode(BlackBox& victim, const PatientRecord& original, int label,
                           const Policy& policy, SubstituteTable& substitutes,
                           const AttackConfig& cfg, Rng& rng, const RlVariant& variant = {});

/// Θ ← Θ + α Σ_l G_l ∇ log π(a_l | s_l). No-op for an empty trace.
void reinforce_update(Policy& policy, const EpisodeTrace& trace, double alpha, double gamma);

/// Score-initialized hierarchical policy learned over up to `episodes`
/// rollouts; returns the first adversarial record found.
AttackResult attack(const VictimModel& victim, const LabeledRecord& sample,
                    const CodeVocabulary& vocab, const AttackConfig& cfg,
                    const RlVariant& variant = {});

/// Per-sample RNG stream shared by all stochastic attackers.
Rng sample_rng(const AttackConfig& cfg, const PatientRecord& record);

nlohmann::json attack_result_json(const AttackResult& result, const CodeVocabulary& vocab);
nlohmann::json episode_trace_json(const EpisodeTrace& trace, std::size_t episode,
                                  const std::string& patient_id, const CodeVocabulary& vocab);

}  // namespace ehrattack
