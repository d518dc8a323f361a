#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehrattack/baselines.hpp"
#include "ehrattack/models.hpp"
#include "ehrattack/synthetic.hpp"
#include "ehrattack/training.hpp"

namespace ehrattack {

struct VictimSpec {
  ModelKind kind = ModelKind::logistic;
  VictimHyperparameters hyper;
  TrainConfig train;  // train.seed is replaced by the experiment seed
};

/// Where the records come from: files on disk, or the generator.
struct DataSource {
  std::optional<std::filesystem::path> records_path;
  std::optional<std::filesystem::path> vocabulary_path;
  GeneratorConfig generator;
};

struct ExperimentConfig {
  DataSource data;
  std::vector<VictimSpec> victims;
  std::vector<AttackerKind> attackers;
  AttackConfig attack;  // epsilon, max_visits and seed are taken from the grid
  std::vector<std::size_t> epsilons{5};
  std::vector<std::size_t> max_visits{20};
  std::vector<std::uint64_t> seeds{0};
  std::size_t test_limit = 0;  // attack only the first N test records; 0 = all
  std::size_t workers = 1;
  bool per_sample_detail = false;

  void validate() const;  // throws ConfigError
};

struct CellKey {
  AttackerKind attacker = AttackerKind::medattacker;
  ModelKind victim = ModelKind::logistic;
  std::uint64_t seed = 0;
  std::size_t epsilon = 0;
  std::size_t max_visits = 0;
  bool operator==(const CellKey&) const = default;
};

struct CellMetrics {
  CellKey key;
  std::size_t successes = 0;
  std::size_t skipped = 0;
  std::size_t test_size = 0;
  double success_rate = 0.0;   // successes / test_size
  double mean_queries = 0.0;   // over attacked (non-skipped) records
  double mean_edits = 0.0;     // over successful records
  double mean_episodes = 0.0;  // over attacked records
  std::vector<AttackResult> results;  // one per test record, in test order
};

struct AttackerAverage {
  AttackerKind attacker = AttackerKind::medattacker;
  std::size_t epsilon = 0;
  std::size_t max_visits = 0;
  double average_success_rate = 0.0;  // mean over victims of the per-victim mean over seeds
};

struct VictimAccuracy {
  std::uint64_t seed = 0;
  ModelKind victim = ModelKind::logistic;
  double heldout_accuracy = 0.0;
};

struct ExperimentReport {
  std::vector<CellMetrics> cells;  // seed, victim, attacker, epsilon, max_visits order
  std::vector<AttackerAverage> averages;
  std::vector<VictimAccuracy> victims;
  bool single_seed = false;  // point estimates only
  bool per_sample_detail = false;
};

/// Runs `attack` over every record of `test_set` on `workers` threads. A record
/// listed in `carried` (same index) that already succeeded under a smaller
/// budget is reused as is rather than attacked again.
CellMetrics evaluate_attacker(const AttackerSpec& attacker, const VictimModel& victim,
                              const std::vector<LabeledRecord>& test_set,
                              const CodeVocabulary& vocab, std::size_t workers = 1,
                              const std::vector<const AttackResult*>* carried = nullptr);

/// Arithmetic mean; throws ConfigError on an empty list.
double average_success_rate(const std::vector<double>& rates);

struct LoadedData {
  CodeVocabulary vocab;
  std::vector<LabeledRecord> records;
};
LoadedData load_data(const DataSource& source);

/// Trains one victim per (seed, victim spec), then attacks the seeded test
/// split with every attacker over the (epsilon, max_visits) grid. Within a
/// grid, a success at a smaller budget is carried to every larger one, so
/// success counts never decrease along either axis.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const LoadedData& data);

enum class SweepParameter { epsilon, max_visits };
SweepParameter parse_sweep_parameter(std::string_view name);  // throws ConfigError
std::string_view sweep_parameter_name(SweepParameter parameter);

/// One cell per value of `parameter` (sorted ascending), the other knob fixed
/// at its first configured value.
ExperimentReport sweep(ExperimentConfig cfg, const LoadedData& data, SweepParameter parameter,
                       std::vector<std::size_t> values);

void write_report_csv(std::ostream& out, const ExperimentReport& report);
nlohmann::json report_json(const ExperimentReport& report, const CodeVocabulary& vocab);
/// Writes report.csv and report.json into `dir` (created if missing).
void write_report(const ExperimentReport& report, const CodeVocabulary& vocab,
                  const std::filesystem::path& dir);

}  // namespace ehrattack
