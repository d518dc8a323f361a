#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include <json.hpp>

#include "ehrattack/models.hpp"

namespace ehrattack {

struct TrainConfig {
  std::size_t epochs = 8;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double l2_penalty = 1e-4;
  std::uint64_t seed = 0;  // drives the train/test split and batch order

  void validate() const;  // throws ConfigError
};

struct DatasetSplit {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> test;
};

/// Seeded 80/20 split. The same seed always yields the same held-out records.
DatasetSplit split_dataset(const std::vector<LabeledRecord>& records, std::uint64_t seed,
                           double train_fraction = 0.8);

struct TrainingLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double heldout_accuracy = 0.0;
};

struct TrainOutcome {
  double heldout_accuracy = 0.0;
  std::vector<TrainingLogRow> log;
};

double accuracy(const VictimModel& model, const std::vector<LabeledRecord>& records);

/// Mini-batch Adam on mean binary cross-entropy plus (l2/2)·|θ|² over the
/// training split of `dataset`. Marks the model trained. Throws TrainingError
/// if the loss stops being finite.
TrainOutcome train_victim(TrainableVictim& model, const std::vector<LabeledRecord>& dataset,
                          const TrainConfig& cfg);

/// Same, on an explicit split.
TrainOutcome train_victim(TrainableVictim& model, const DatasetSplit& split,
                          const TrainConfig& cfg);

void write_training_log(std::ostream& out, const std::vector<TrainingLogRow>& log);

// Checkpoint: {"format": "ehrattack-victim", "kind": ..., "vocab_size": ...,
//   "hyperparameters": {...}, "split_seed": ..., "trained": ...,
//   "parameters": {"<block>": {"rows": r, "cols": c, "values": [...]}}}
nlohmann::json checkpoint_json(const TrainableVictim& model, std::uint64_t split_seed);

struct LoadedVictim {
  std::unique_ptr<TrainableVictim> model;
  std::uint64_t split_seed = 0;
};

LoadedVictim victim_from_json(const nlohmann::json& checkpoint);  // throws FormatError

void save_checkpoint(const std::filesystem::path& path, const TrainableVictim& model,
                     std::uint64_t split_seed);
LoadedVictim load_checkpoint(const std::filesystem::path& path);

}  // namespace ehrattack
