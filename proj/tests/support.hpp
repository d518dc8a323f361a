#pragma once

// Toy victims, tiny-instance builders and a brute-force attack oracle shared by
// the unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "ehrattack/attack.hpp"
#include "ehrattack/ehr.hpp"
#include "ehrattack/random.hpp"
#include "ehrattack/victim.hpp"

namespace ehrattack::testing {

/// F ≡ value.
class ConstantVictim final : public VictimModel {
 public:
  explicit ConstantVictim(double value) : value_(value) {}
  double score(const PatientRecord&) const override { return value_; }

 private:
  double value_;
};

/// Fraction of visits that contain `code`; 0 for a record with no visits.
class VisitFractionVictim final : public VictimModel {
 public:
  explicit VisitFractionVictim(CodeId code) : code_(code) {}
  double score(const PatientRecord& record) const override {
    if (record.visits.empty()) return 0.0;
    double hits = 0.0;
    for (const auto& visit : record.visits) hits += visit_contains(visit, code_) ? 1.0 : 0.0;
    return hits / static_cast<double>(record.visits.size());
  }

 private:
  CodeId code_;
};

/// (occurrences of `code`) · scale.
class CodeCountVictim final : public VictimModel {
 public:
  CodeCountVictim(CodeId code, double scale) : code_(code), scale_(scale) {}
  double score(const PatientRecord& record) const override {
    double count = 0.0;
    for (const auto& visit : record.visits) count += visit_contains(visit, code_) ? 1.0 : 0.0;
    return count * scale_;
  }

 private:
  CodeId code_;
  double scale_;
};

/// sigmoid(bias + Σ_t decay^(T-1-t) Σ_{c ∈ v_t} w_c), written independently of
/// the library's models.
class WeightedCodeVictim final : public VictimModel {
 public:
  WeightedCodeVictim(std::vector<double> weights, double bias, double decay)
      : weights_(std::move(weights)), bias_(bias), decay_(decay) {}
  double logit(const PatientRecord& record) const {
    double z = bias_;
    const std::size_t T = record.visits.size();
    for (std::size_t t = 0; t < T; ++t) {
      double visit_sum = 0.0;
      for (CodeId c : record.visits[t]) visit_sum += weights_[index_of(c)];
      z += std::pow(decay_, static_cast<double>(T - 1 - t)) * visit_sum;
    }
    return z;
  }
  double score(const PatientRecord& record) const override {
    return 1.0 / (1.0 + std::exp(-logit(record)));
  }
  void set_bias(double bias) { bias_ = bias; }

 private:
  std::vector<double> weights_;
  double bias_;
  double decay_;
};

/// Vocabulary with `n_categories` categories of `per_category` codes each,
/// code k in category k % n_categories.
inline CodeVocabulary grid_vocabulary(std::size_t n_categories, std::size_t per_category) {
  std::vector<std::string> names, categories;
  for (std::size_t k = 0; k < n_categories * per_category; ++k) {
    names.push_back("C" + std::to_string(k));
    categories.push_back("G" + std::to_string(k % n_categories));
  }
  return CodeVocabulary(std::move(names), categories);
}

/// Random record of 1..max_visits visits with 1..max_codes distinct codes each.
inline PatientRecord random_record(const CodeVocabulary& vocab, std::size_t max_visits,
                                   std::size_t max_codes, Rng& rng, std::string id = "R") {
  PatientRecord record;
  record.patient_id = std::move(id);
  const auto n_visits = std::uniform_int_distribution<std::size_t>(1, max_visits)(rng);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  for (std::size_t t = 0; t < n_visits; ++t) {
    const auto n_codes = std::uniform_int_distribution<std::size_t>(1, max_codes)(rng);
    Visit visit;
    while (visit.size() < n_codes) {
      const CodeId c = code_at(pick(rng));
      if (!visit_contains(visit, c)) visit.push_back(c);
    }
    record.visits.push_back(std::move(visit));
  }
  return record;
}

/// Random weighted victim over a grid vocabulary with one record labelled by
/// the victim's own prediction, so the record is never skipped.
struct ToyInstance {
  CodeVocabulary vocab;
  WeightedCodeVictim victim;
  LabeledRecord sample;
};
inline ToyInstance random_instance(Rng& rng, std::size_t n_categories, std::size_t per_category,
                                   std::size_t max_visits, std::size_t max_codes) {
  auto vocab = grid_vocabulary(n_categories, per_category);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> weights(vocab.size());
  for (auto& w : weights) w = normal(rng);
  WeightedCodeVictim victim(weights, 0.0, 0.9);
  LabeledRecord sample;
  sample.record = random_record(vocab, max_visits, max_codes, rng, "T" + std::to_string(rng() % 100000));
  // Bias near the decision boundary so that some records can be flipped.
  victim.set_bias(-victim.logit(sample.record) + normal(rng));
  sample.label = label_from_score(victim.score(sample.record), victim.threshold());
  return {std::move(vocab), std::move(victim), std::move(sample)};
}

/// Best single substitution at `position`, by direct (uncounted) evaluation of
/// every candidate in `substitutes` that keeps the visit duplicate-free.
struct OracleChoice {
  std::optional<CodeId> code;
  double gain = -INFINITY;
};
inline OracleChoice oracle_best_substitute(const VictimModel& victim, const PatientRecord& record,
                                           Position position,
                                           const std::vector<CodeId>& substitutes, int label) {
  const double direction = label == 1 ? -1.0 : 1.0;
  const double base = victim.score(record);
  OracleChoice best;
  for (CodeId candidate : substitutes) {
    const auto& visit = record.visits[position.visit];
    bool clash = false;
    for (std::size_t i = 0; i < visit.size(); ++i) clash |= (i != position.slot && visit[i] == candidate);
    if (clash) continue;
    PatientRecord probe = record;
    probe.visits[position.visit][position.slot] = candidate;
    const double gain = direction * (victim.score(probe) - base);
    if (!best.code || gain > best.gain) best = {candidate, gain};
  }
  return best;
}

/// True when some set of at most `epsilon` substitutions within the first
/// `max_visits` visits, each drawn from the code's substitute set, yields a
/// duplicate-free record whose predicted label differs from `label`.
inline bool oracle_flippable(const VictimModel& victim, const PatientRecord& record, int label,
                             const CodeVocabulary& vocab, std::size_t epsilon,
                             std::size_t max_visits, std::size_t max_substitutes,
                             std::uint64_t seed) {
  std::vector<Position> positions;
  const std::size_t accessible = std::min(record.visits.size(), max_visits);
  for (std::size_t t = 0; t < accessible; ++t) {
    for (std::size_t i = 0; i < record.visits[t].size(); ++i) positions.push_back({t, i});
  }
  auto duplicate_free = [](const PatientRecord& r) {
    for (const auto& v : r.visits) {
      for (std::size_t a = 0; a < v.size(); ++a) {
        for (std::size_t b = a + 1; b < v.size(); ++b) {
          if (v[a] == v[b]) return false;
        }
      }
    }
    return true;
  };
  auto flipped = [&](const PatientRecord& r) {
    return label_from_score(victim.score(r), victim.threshold()) != label;
  };
  // Depth-first over increasing position indices, one substitute per chosen position.
  std::function<bool(std::size_t, std::size_t, PatientRecord&)> search =
      [&](std::size_t start, std::size_t budget, PatientRecord& current) -> bool {
    if (budget == 0) return false;
    for (std::size_t p = start; p < positions.size(); ++p) {
      const auto pos = positions[p];
      CodeId& slot = current.visits[pos.visit][pos.slot];
      const CodeId original = slot;
      for (CodeId candidate : substitute_set(original, vocab, max_substitutes, seed)) {
        slot = candidate;
        if (duplicate_free(current) && flipped(current)) {
          slot = original;
          return true;
        }
        if (search(p + 1, budget - 1, current)) {
          slot = original;
          return true;
        }
      }
      slot = original;
    }
    return false;
  };
  PatientRecord working = record;
  return search(0, epsilon, working);
}

/// Replays a trace from `original`, calling visit(step, state_before_step).
template <typename Fn>
void replay_trace(const PatientRecord& original, const EpisodeTrace& trace, Fn&& visit) {
  PatientRecord state = original;
  for (const auto& step : trace.steps) {
    visit(step, static_cast<const PatientRecord&>(state));
    state.visits[step.position.visit][step.position.slot] = step.new_code;
  }
}

}  // namespace ehrattack::testing
