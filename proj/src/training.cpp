#include "ehrattack/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be a finite non-negative number");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(l2_penalty >= 0.0)) throw ConfigError("train: l2_penalty must be >= 0");
}

DatasetSplit split_dataset(const std::vector<LabeledRecord>& records, std::uint64_t seed,
                           double train_fraction) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5b1170));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(records.size())));
  // Keep original order inside each part so that output files follow the input.
  std::vector<char> in_train(records.size(), 0);
  for (std::size_t k = 0; k < n_train; ++k) in_train[order[k]] = 1;
  DatasetSplit split;
  for (std::size_t k = 0; k < records.size(); ++k) {
    (in_train[k] ? split.train : split.test).push_back(records[k]);
  }
  return split;
}

double accuracy(const VictimModel& model, const std::vector<LabeledRecord>& records) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) correct += predict_label(model, r.record) == r.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

TrainOutcome train_victim(TrainableVictim& model, const std::vector<LabeledRecord>& dataset,
                          const TrainConfig& cfg) {
  return train_victim(model, split_dataset(dataset, cfg.seed), cfg);
}

TrainOutcome train_victim(TrainableVictim& model, const DatasetSplit& split,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("train: empty training split");

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  auto params = model.parameters();
  const std::size_t n = params.size();
  std::vector<double> grad(n), m(n, 0.0), v(n, 0.0);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0x7a1e));
  std::size_t step = 0;

  TrainOutcome outcome;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& example = split.train[order[k]];
        batch_loss += model.accumulate_gradient(example.record, example.label, grad);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError(fmt::format(
            "{} training diverged at epoch {}, batch starting at {}: loss {} (learning rate {})",
            model_kind_name(model.kind()), epoch, start, batch_loss, cfg.learning_rate));
      }
      epoch_loss += batch_loss;
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t j = 0; j < n; ++j) {
        const double g = grad[j] * inv + cfg.l2_penalty * params[j];
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
        params[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + kEps);
      }
    }
    model.set_trained(true);
    TrainingLogRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(order.size());
    row.heldout_accuracy = accuracy(model, split.test);
    outcome.log.push_back(row);
  }
  outcome.heldout_accuracy = outcome.log.back().heldout_accuracy;
  return outcome;
}

void write_training_log(std::ostream& out, const std::vector<TrainingLogRow>& log) {
  out << "epoch,train_loss,heldout_acc\n";
  for (const auto& row : log) {
    out << fmt::format("{},{:.10g},{:.10g}\n", row.epoch, row.train_loss, row.heldout_accuracy);
  }
}

json checkpoint_json(const TrainableVictim& model, std::uint64_t split_seed) {
  const auto& hyper = model.hyperparameters();
  json params = json::object();
  const auto values = model.parameters();
  for (const auto& block : model.blocks()) {
    std::vector<double> slice(values.begin() + static_cast<std::ptrdiff_t>(block.offset),
                              values.begin() + static_cast<std::ptrdiff_t>(block.offset + block.size()));
    params[block.name] = {{"rows", block.rows}, {"cols", block.cols}, {"values", std::move(slice)}};
  }
  return json{{"format", "ehrattack-victim"},
              {"kind", model_kind_name(model.kind())},
              {"vocab_size", model.vocab_size()},
              {"hyperparameters",
               {{"embedding_dim", hyper.embedding_dim},
                {"max_positions", hyper.max_positions},
                {"recency_decay", hyper.recency_decay},
                {"threshold", hyper.threshold}}},
              {"split_seed", split_seed},
              {"trained", model.is_trained()},
              {"parameters", std::move(params)}};
}

LoadedVictim victim_from_json(const json& checkpoint) {
  try {
    if (checkpoint.at("format").get<std::string>() != "ehrattack-victim") {
      throw FormatError("not a victim checkpoint");
    }
    const auto kind = parse_model_kind(checkpoint.at("kind").get<std::string>());
    const auto& h = checkpoint.at("hyperparameters");
    VictimHyperparameters hyper;
    hyper.embedding_dim = h.at("embedding_dim").get<std::size_t>();
    hyper.max_positions = h.at("max_positions").get<std::size_t>();
    hyper.recency_decay = h.at("recency_decay").get<double>();
    hyper.threshold = h.at("threshold").get<double>();
    LoadedVictim loaded;
    loaded.model = make_victim(kind, checkpoint.at("vocab_size").get<std::size_t>(), hyper, 0);
    loaded.split_seed = checkpoint.at("split_seed").get<std::uint64_t>();
    auto values = loaded.model->parameters();
    const auto& params = checkpoint.at("parameters");
    for (const auto& block : loaded.model->blocks()) {
      const auto& entry = params.at(block.name);
      const auto data = entry.at("values").get<std::vector<double>>();
      if (entry.at("rows").get<std::size_t>() != block.rows ||
          entry.at("cols").get<std::size_t>() != block.cols || data.size() != block.size()) {
        throw FormatError(fmt::format("parameter block '{}' has the wrong shape", block.name));
      }
      std::copy(data.begin(), data.end(), values.begin() + static_cast<std::ptrdiff_t>(block.offset));
    }
    loaded.model->set_trained(checkpoint.at("trained").get<bool>());
    return loaded;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(fmt::format("checkpoint: {}", e.what()));
  }
}

void save_checkpoint(const std::filesystem::path& path, const TrainableVictim& model,
                     std::uint64_t split_seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
  out << checkpoint_json(model, split_seed).dump() << '\n';
}

LoadedVictim load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open '{}' for reading", path.string()));
  json checkpoint;
  try {
    in >> checkpoint;
  } catch (const std::exception& e) {
    throw FormatError(fmt::format("checkpoint '{}': {}", path.string(), e.what()));
  }
  return victim_from_json(checkpoint);
}

}  // namespace ehrattack
