#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "ehrattack/ehr.hpp"

namespace ehrattack {

/// Black-box risk scorer F: record -> probability. Implementations must be
/// deterministic, thread-safe for concurrent `score` calls, and accept records
/// with zero visits or empty visits (they return their base score there).
class VictimModel {
 public:
  virtual ~VictimModel() = default;

  virtual double score(const PatientRecord& record) const = 0;

  /// Classification cutoff δ.
  virtual double threshold() const { return 0.5; }

  /// False for a trainable model whose parameters were never fitted or loaded.
  virtual bool is_trained() const { return true; }
};

/// 1 iff score > δ; a score equal to δ predicts 0.
int label_from_score(double score, double threshold);
int predict_label(const VictimModel& model, const PatientRecord& record);

enum class QueryPhase : std::size_t { init = 0, rank = 1, substitute = 2 };
inline constexpr std::size_t kQueryPhaseCount = 3;

std::string_view phase_name(QueryPhase phase);

/// Per-phase counts of victim evaluations.
class QueryLedger {
 public:
  void record(QueryPhase phase) { ++by_phase_[static_cast<std::size_t>(phase)]; }

  std::size_t total() const;
  std::size_t count(QueryPhase phase) const { return by_phase_[static_cast<std::size_t>(phase)]; }

  bool operator==(const QueryLedger&) const = default;

 private:
  std::array<std::size_t, kQueryPhaseCount> by_phase_{};
};

/// The only route from attack code to a victim: every score is charged to the
/// ledger under a phase tag.
class BlackBox {
 public:
  BlackBox(const VictimModel& model, QueryLedger& ledger) : model_(model), ledger_(ledger) {}

  double counted_score(const PatientRecord& record, QueryPhase phase) {
    ledger_.record(phase);
    return model_.score(record);
  }

  double threshold() const { return model_.threshold(); }
  int label_for(double score) const { return label_from_score(score, model_.threshold()); }
  const QueryLedger& ledger() const { return ledger_; }

 private:
  const VictimModel& model_;
  QueryLedger& ledger_;
};

}  // namespace ehrattack
