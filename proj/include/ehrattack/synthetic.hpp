#pragma once

#include <cstdint>
#include <vector>

#include "ehrattack/ehr.hpp"

namespace ehrattack {

/// Defaults follow the heart-failure cohort statistics (12,320 patients,
/// 3,080 positive, 38.74 visits and 4.24 codes per visit, 8,692 codes).
struct GeneratorConfig {
  std::size_t n_patients = 12320;
  double positive_fraction = 0.25;
  double mean_visits = 38.74;
  double mean_codes_per_visit = 4.24;
  std::size_t vocab_size = 8692;
  std::size_t n_categories = 100;
  std::size_t n_risk_codes = 50;
  double recency_weight = 0.9;
  double label_noise = 0.02;
  double code_zipf_exponent = 1.0;  // code popularity ∝ 1 / rank^s over a seeded ranking; 0 = uniform
  std::uint64_t seed = 0;

  void validate() const;  // throws GenerationError
};

struct SyntheticDataset {
  CodeVocabulary vocab;
  std::vector<LabeledRecord> records;
  std::vector<CodeId> risk_codes;  // sorted
  double threshold = 0.0;          // label is 1 iff risk load exceeds this (before noise)
};

/// sum_t recency_weight^(T-t) * |risk ∩ v_t| over visits t = 1..T.
double recency_weighted_risk(const PatientRecord& record, const std::vector<char>& is_risk,
                             double recency_weight);

/// Poisson visit and code counts (clamped to >= 1), uniform code draws, and a
/// planted label: risk load above a calibrated threshold, then flipped with
/// probability `label_noise`. The threshold targets `positive_fraction` after noise.
SyntheticDataset generate_synthetic_dataset(const GeneratorConfig& cfg);

}  // namespace ehrattack
