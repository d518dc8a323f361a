#include "ehrattack/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

namespace {

enum Stream : std::uint64_t {
  kVocabulary = 1,
  kRiskCodes = 2,
  kRecords = 3,
  kNoise = 4,
  kPopularity = 5
};

}  // namespace

void GeneratorConfig::validate() const {
  if (n_patients < 1) throw GenerationError("generator: n_patients must be >= 1");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw GenerationError("generator: positive_fraction must lie in [0, 1]");
  }
  if (!(mean_visits > 0.0) || !(mean_codes_per_visit > 0.0)) {
    throw GenerationError("generator: mean_visits and mean_codes_per_visit must be positive");
  }
  if (n_categories < 1 || vocab_size < 2 * n_categories) {
    throw GenerationError("generator: need vocab_size >= 2 * n_categories >= 2");
  }
  if (n_risk_codes > vocab_size) throw GenerationError("generator: n_risk_codes > vocab_size");
  if (!(code_zipf_exponent >= 0.0)) throw GenerationError("generator: code_zipf_exponent must be >= 0");
  if (!(recency_weight > 0.0)) throw GenerationError("generator: recency_weight must be positive");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw GenerationError("generator: label_noise must lie in [0, 0.5)");
  }
  const double clean = (positive_fraction - label_noise) / (1.0 - 2.0 * label_noise);
  if (clean < 0.0 || clean > 1.0) {
    throw GenerationError(fmt::format(
        "generator: positive_fraction {} is unreachable with label_noise {}", positive_fraction,
        label_noise));
  }
}

double recency_weighted_risk(const PatientRecord& record, const std::vector<char>& is_risk,
                             double recency_weight) {
  double load = 0.0;
  double weight = 1.0;
  for (auto t = record.visits.size(); t-- > 0;) {
    std::size_t hits = 0;
    for (CodeId code : record.visits[t]) hits += is_risk[index_of(code)] ? 1 : 0;
    load += weight * static_cast<double>(hits);
    weight *= recency_weight;
  }
  return load;
}

SyntheticDataset generate_synthetic_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  SyntheticDataset data;
  data.vocab = build_vocabulary(cfg.vocab_size, cfg.n_categories, mix_seed(cfg.seed, kVocabulary));

  std::vector<std::size_t> all(cfg.vocab_size);
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  Rng risk_rng(mix_seed(cfg.seed, kRiskCodes));
  std::shuffle(all.begin(), all.end(), risk_rng);
  std::vector<char> is_risk(cfg.vocab_size, 0);
  for (std::size_t k = 0; k < cfg.n_risk_codes; ++k) {
    is_risk[all[k]] = 1;
    data.risk_codes.push_back(code_at(all[k]));
  }
  std::sort(data.risk_codes.begin(), data.risk_codes.end());

  Rng rng(mix_seed(cfg.seed, kRecords));
  std::poisson_distribution<int> visit_count(cfg.mean_visits);
  std::poisson_distribution<int> code_count(cfg.mean_codes_per_visit);
  std::vector<std::size_t> rank(cfg.vocab_size);
  for (std::size_t k = 0; k < rank.size(); ++k) rank[k] = k;
  Rng popularity_rng(mix_seed(cfg.seed, kPopularity));
  std::shuffle(rank.begin(), rank.end(), popularity_rng);
  std::vector<double> popularity(cfg.vocab_size);
  for (std::size_t k = 0; k < rank.size(); ++k) {
    popularity[k] = std::pow(static_cast<double>(rank[k] + 1), -cfg.code_zipf_exponent);
  }
  std::discrete_distribution<std::size_t> pick_code(popularity.begin(), popularity.end());
  const auto width = fmt::format("{}", cfg.n_patients - 1).size();

  std::vector<double> loads;
  loads.reserve(cfg.n_patients);
  data.records.reserve(cfg.n_patients);
  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    LabeledRecord labeled;
    labeled.record.patient_id = fmt::format("P{:0{}}", p, width);
    const auto n_visits = static_cast<std::size_t>(std::max(1, visit_count(rng)));
    labeled.record.visits.resize(n_visits);
    for (auto& visit : labeled.record.visits) {
      auto n_codes = static_cast<std::size_t>(std::max(1, code_count(rng)));
      n_codes = std::min(n_codes, cfg.vocab_size);
      visit.reserve(n_codes);
      while (visit.size() < n_codes) {
        const CodeId code = code_at(pick_code(rng));
        if (!visit_contains(visit, code)) visit.push_back(code);
      }
    }
    loads.push_back(recency_weighted_risk(labeled.record, is_risk, cfg.recency_weight));
    data.records.push_back(std::move(labeled));
  }

  // Calibrate the clean positive rate so that the post-noise rate hits the target.
  const double clean = (cfg.positive_fraction - cfg.label_noise) / (1.0 - 2.0 * cfg.label_noise);
  auto n_positive = static_cast<std::size_t>(std::llround(clean * static_cast<double>(cfg.n_patients)));
  std::vector<double> sorted = loads;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (n_positive == 0) {
    data.threshold = sorted.front();
  } else if (n_positive >= sorted.size()) {
    data.threshold = sorted.back() - 1.0;
  } else {
    data.threshold = sorted[n_positive];
  }

  Rng noise_rng(mix_seed(cfg.seed, kNoise));
  std::bernoulli_distribution flip(cfg.label_noise);
  for (std::size_t p = 0; p < cfg.n_patients; ++p) {
    const int clean_label = loads[p] > data.threshold ? 1 : 0;
    const bool flipped = flip(noise_rng);
    data.records[p].label = flipped ? 1 - clean_label : clean_label;
  }
  return data;
}

}  // namespace ehrattack
