#include "ehrattack/victim.hpp"

#include <numeric>

namespace ehrattack {

int label_from_score(double score, double threshold) { return score > threshold ? 1 : 0; }

int predict_label(const VictimModel& model, const PatientRecord& record) {
  return label_from_score(model.score(record), model.threshold());
}

std::string_view phase_name(QueryPhase phase) {
  switch (phase) {
    case QueryPhase::init:
      return "init";
    case QueryPhase::rank:
      return "rank";
    case QueryPhase::substitute:
      return "substitute";
  }
  return "unknown";
}

std::size_t QueryLedger::total() const {
  return std::accumulate(by_phase_.begin(), by_phase_.end(), std::size_t{0});
}

}  // namespace ehrattack
