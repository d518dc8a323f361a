#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ehrattack/eval.hpp"

namespace ehrattack {

struct SweepSpec {
  SweepParameter parameter = SweepParameter::epsilon;
  std::vector<std::size_t> values;
};

struct ExperimentFile {
  ExperimentConfig experiment;
  std::optional<SweepSpec> sweep;
};

// INI layout, every key optional:
//   [data]        records, vocabulary (paths, relative to the file) or generator
//                 keys patients, positive_fraction, mean_visits, mean_codes,
//                 vocab, categories, risk_codes, recency_weight, noise,
//                 zipf_exponent, seed
//   [victims]     models (comma list), epochs, learning_rate, batch_size,
//                 l2_penalty, embedding_dim, max_positions, recency_decay
//   [attack]      attackers (comma list), epsilon (list), max_visits (list),
//                 episodes, gamma, alpha, temperature, max_substitutes
//   [experiment]  seeds (list), test_limit, workers, per_sample
//   [sweep]       parameter (epsilon | max_visits), values (list)
// Errors are ConfigError messages of the form "<source>:<line>: <problem>".
ExperimentFile parse_experiment_config(std::istream& in, const std::string& source_name,
                                       const std::filesystem::path& base_dir = {});
ExperimentFile load_experiment_config(const std::filesystem::path& path);

}  // namespace ehrattack
