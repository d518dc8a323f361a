#include "ehrattack/attack.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"

namespace ehrattack {

using nlohmann::json;

void AttackConfig::validate() const {
  if (epsilon < 1) throw ConfigError("attack: epsilon must be >= 1");
  if (max_visits < 1) throw ConfigError("attack: max_visits must be >= 1");
  if (episodes < 1) throw ConfigError("attack: episodes must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("attack: gamma must lie in [0, 1]");
  if (!(alpha > 0.0)) throw ConfigError("attack: alpha must be positive");
  if (!(temperature > 0.0)) throw ConfigError("attack: temperature must be positive");
  if (max_substitutes < 1) throw ConfigError("attack: max_substitutes must be >= 1");
}

const std::vector<CodeId>& SubstituteTable::operator()(CodeId code) {
  auto it = cache_.find(code);
  if (it == cache_.end()) {
    it = cache_.emplace(code, substitute_set(code, vocab_, max_size_, seed_)).first;
  }
  return it->second;
}

std::vector<CodeId> open_substitutes(SubstituteTable& table, const PatientRecord& record,
                                     Position position) {
  const auto& visit = record.visits.at(position.visit);
  std::vector<CodeId> open;
  for (CodeId candidate : table(visit.at(position.slot))) {
    if (!visit_contains(visit, candidate)) open.push_back(candidate);
  }
  return open;
}

PositionMask availability_mask(SubstituteTable& table, const PatientRecord& record,
                               std::size_t accessible_visits, const PositionMask* attacked) {
  PositionMask mask(accessible_visits);
  for (std::size_t t = 0; t < accessible_visits; ++t) {
    const auto& visit = record.visits[t];
    mask[t].assign(visit.size(), 0);
    for (std::size_t i = 0; i < visit.size(); ++i) {
      if (attacked && (*attacked)[t][i]) {
        mask[t][i] = 1;
        continue;
      }
      bool any_open = false;
      for (CodeId candidate : table(visit[i])) {
        if (!visit_contains(visit, candidate)) {
          any_open = true;
          break;
        }
      }
      mask[t][i] = any_open ? 0 : 1;
    }
  }
  return mask;
}

std::vector<double> contribution_scores(BlackBox& victim, const PatientRecord& record,
                                        std::size_t max_visits) {
  const std::size_t accessible = accessible_visit_count(record, max_visits);
  std::vector<double> scores(accessible);
  PatientRecord growing;
  growing.patient_id = record.patient_id;
  double previous = victim.counted_score(growing, QueryPhase::init);
  for (std::size_t t = 0; t < accessible; ++t) {
    growing.visits.push_back(record.visits[t]);
    const double current = victim.counted_score(growing, QueryPhase::init);
    scores[t] = current - previous;
    previous = current;
  }
  return scores;
}

std::vector<std::vector<double>> saliency_scores(BlackBox& victim, const PatientRecord& record,
                                                 std::size_t max_visits,
                                                 std::optional<double> full_score) {
  const std::size_t accessible = accessible_visit_count(record, max_visits);
  const double full = full_score ? *full_score : victim.counted_score(record, QueryPhase::init);
  std::vector<std::vector<double>> scores(accessible);
  PatientRecord probe = record;
  for (std::size_t t = 0; t < accessible; ++t) {
    const auto& visit = record.visits[t];
    scores[t].resize(visit.size());
    for (std::size_t i = 0; i < visit.size(); ++i) {
      auto& reduced = probe.visits[t];
      reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(i));
      scores[t][i] = full - victim.counted_score(probe, QueryPhase::init);
      reduced = visit;
    }
  }
  return scores;
}

double gain_direction(int label) { return label == 1 ? -1.0 : 1.0; }

double adversarial_gain(BlackBox& victim, const PatientRecord& current, Position position,
                        CodeId candidate, int label, double baseline) {
  const auto& visit = current.visits.at(position.visit);
  for (std::size_t i = 0; i < visit.size(); ++i) {
    if (i != position.slot && visit[i] == candidate) return kSkippedGain;
  }
  PatientRecord probe = current;
  probe.visits[position.visit].at(position.slot) = candidate;
  return gain_direction(label) * (victim.counted_score(probe, QueryPhase::substitute) - baseline);
}

SubstituteChoice select_substitute(BlackBox& victim, const PatientRecord& current,
                                   Position position, std::span<const CodeId> substitutes,
                                   int label) {
  const double baseline = victim.counted_score(current, QueryPhase::substitute);
  const double direction = gain_direction(label);
  SubstituteChoice best;
  best.score = baseline;
  PatientRecord probe = current;
  auto& slot = probe.visits.at(position.visit).at(position.slot);
  const CodeId original = slot;
  for (CodeId candidate : substitutes) {
    if (candidate != original && visit_contains(probe.visits[position.visit], candidate)) continue;
    slot = candidate;
    const double score = victim.counted_score(probe, QueryPhase::substitute);
    slot = original;
    const double gain = direction * (score - baseline);
    if (!best.code || gain > best.gain) {
      best.code = candidate;
      best.gain = gain;
      best.score = score;
    }
  }
  return best;
}

EpisodeOutcome run_episode(BlackBox& victim, const PatientRecord& original, int label,
                           const Policy& policy, SubstituteTable& substitutes,
                           const AttackConfig& cfg, Rng& rng, const RlVariant& variant) {
  const std::size_t accessible = policy.code_logits.size();
  EpisodeOutcome out;
  out.record = original;
  PositionMask attacked(accessible);
  for (std::size_t t = 0; t < accessible; ++t) attacked[t].assign(original.visits[t].size(), 0);

  for (std::size_t step = 0; step < cfg.epsilon; ++step) {
    PositionMask mask = availability_mask(substitutes, out.record, accessible, &attacked);
    if (!has_open_position(mask)) break;
    const auto sampled = sample_position(policy, mask, rng);
    const Position pos = sampled.position;
    const auto candidates = open_substitutes(substitutes, out.record, pos);

    EpisodeStep record_step;
    record_step.state_hash = record_hash(out.record);
    record_step.position = pos;
    record_step.log_prob = sampled.log_prob;
    record_step.old_code = out.record.visits[pos.visit][pos.slot];
    record_step.candidates = candidates.size();
    record_step.mask = std::move(mask);

    double new_score = 0.0;
    if (variant.best_substitute) {
      const auto choice = select_substitute(victim, out.record, pos, candidates, label);
      record_step.new_code = *choice.code;
      record_step.reward = choice.gain;
      new_score = choice.score;
    } else {
      const double baseline = victim.counted_score(out.record, QueryPhase::substitute);
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      record_step.new_code = candidates[pick(rng)];
      PatientRecord probe = out.record;
      probe.visits[pos.visit][pos.slot] = record_step.new_code;
      new_score = victim.counted_score(probe, QueryPhase::substitute);
      record_step.reward = gain_direction(label) * (new_score - baseline);
    }

    out.record.visits[pos.visit][pos.slot] = record_step.new_code;
    attacked[pos.visit][pos.slot] = 1;
    out.edits.push_back({pos, record_step.old_code, record_step.new_code});
    out.trace.steps.push_back(std::move(record_step));
    if (victim.label_for(new_score) != label) {
      out.trace.success = true;
      break;
    }
  }
  return out;
}

void reinforce_update(Policy& policy, const EpisodeTrace& trace, double alpha, double gamma) {
  if (trace.steps.empty()) return;
  std::vector<double> rewards;
  rewards.reserve(trace.steps.size());
  for (const auto& step : trace.steps) rewards.push_back(step.reward);
  const auto returns = discounted_returns(rewards, gamma);
  Policy gradient = zeros_like(policy);
  for (std::size_t l = 0; l < trace.steps.size(); ++l) {
    add_log_prob_gradient(policy, trace.steps[l].mask, trace.steps[l].position, returns[l],
                          gradient);
  }
  for (std::size_t t = 0; t < policy.visit_logits.size(); ++t) {
    policy.visit_logits[t] += alpha * gradient.visit_logits[t];
  }
  for (std::size_t t = 0; t < policy.code_logits.size(); ++t) {
    for (std::size_t i = 0; i < policy.code_logits[t].size(); ++i) {
      policy.code_logits[t][i] += alpha * gradient.code_logits[t][i];
    }
  }
}

Rng sample_rng(const AttackConfig& cfg, const PatientRecord& record) {
  return Rng(mix_seed(cfg.seed, stable_hash(record.patient_id)));
}

AttackResult attack(const VictimModel& model, const LabeledRecord& sample,
                    const CodeVocabulary& vocab, const AttackConfig& cfg,
                    const RlVariant& variant) {
  cfg.validate();
  AttackResult result;
  result.patient_id = sample.record.patient_id;
  BlackBox victim(model, result.queries);
  const auto& record = sample.record;

  const double full = victim.counted_score(record, QueryPhase::init);
  if (victim.label_for(full) != sample.label) {
    result.skipped = true;
    return result;
  }

  const std::size_t accessible = accessible_visit_count(record, cfg.max_visits);
  Policy policy;
  if (!variant.score_initialization) {
    PositionMask shape(accessible);
    for (std::size_t t = 0; t < accessible; ++t) shape[t].assign(record.visits[t].size(), 0);
    policy = uniform_policy(shape, variant.layout);
  } else if (variant.layout == PolicyLayout::flat) {
    ScoreVectors scores;
    scores.saliency = saliency_scores(victim, record, cfg.max_visits, full);
    policy = flat_policy(scores, sample.label, cfg.temperature);
  } else {
    ScoreVectors scores;
    scores.contribution = contribution_scores(victim, record, cfg.max_visits);
    scores.saliency = saliency_scores(victim, record, cfg.max_visits, full);
    policy = initialize_policy(scores, sample.label, cfg.temperature);
  }

  SubstituteTable substitutes(vocab, cfg.max_substitutes, cfg.seed);
  Rng rng = sample_rng(cfg, record);
  for (std::size_t episode = 1; episode <= cfg.episodes; ++episode) {
    auto outcome = run_episode(victim, record, sample.label, policy, substitutes, cfg, rng, variant);
    result.episodes_used = episode;
    if (cfg.keep_traces) result.traces.push_back(outcome.trace);
    if (outcome.trace.success) {
      result.success = true;
      result.adversarial = std::move(outcome.record);
      result.edits = std::move(outcome.edits);
      break;
    }
    reinforce_update(policy, outcome.trace, cfg.alpha, cfg.gamma);
  }
  return result;
}

json attack_result_json(const AttackResult& result, const CodeVocabulary& vocab) {
  json queries = json::object();
  for (std::size_t p = 0; p < kQueryPhaseCount; ++p) {
    const auto phase = static_cast<QueryPhase>(p);
    queries[std::string(phase_name(phase))] = result.queries.count(phase);
  }
  queries["total"] = result.queries.total();
  json edits = json::array();
  for (const auto& e : result.edits) {
    edits.push_back({{"visit", e.position.visit},
                     {"slot", e.position.slot},
                     {"old", vocab.name(e.old_code)},
                     {"new", vocab.name(e.new_code)}});
  }
  return json{{"patient_id", result.patient_id},
              {"skipped", result.skipped},
              {"success", result.success},
              {"episodes_used", result.episodes_used},
              {"queries", std::move(queries)},
              {"edits", std::move(edits)}};
}

json episode_trace_json(const EpisodeTrace& trace, std::size_t episode,
                        const std::string& patient_id, const CodeVocabulary& vocab) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"state", fmt::format("{:016x}", s.state_hash)},
                     {"visit", s.position.visit},
                     {"slot", s.position.slot},
                     {"old", vocab.name(s.old_code)},
                     {"new", vocab.name(s.new_code)},
                     {"candidates", s.candidates},
                     {"log_prob", s.log_prob},
                     {"reward", s.reward}});
  }
  return json{{"patient_id", patient_id},
              {"episode", episode},
              {"success", trace.success},
              {"steps", std::move(steps)}};
}

}  // namespace ehrattack
