#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehrattack/victim.hpp"

namespace ehrattack {

enum class ModelKind { logistic, attention, recurrent };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);  // throws ConfigError

struct VictimHyperparameters {
  std::size_t embedding_dim = 16;
  std::size_t max_positions = 128;  // attention position table; older visits share the last row
  double recency_decay = 0.9;       // bag-of-codes visit weight rho^(T-t)
  double threshold = 0.5;
};

/// Named slice of the flat parameter vector, row-major.
struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

/// A victim with a flat parameter vector and hand-derived binary cross-entropy
/// gradients. Parameters only change through `parameters()`, which the trainer
/// uses; attacks see the model as a const VictimModel.
class TrainableVictim : public VictimModel {
 public:
  TrainableVictim(ModelKind kind, std::size_t vocab_size, VictimHyperparameters hyper);

  ModelKind kind() const { return kind_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const VictimHyperparameters& hyperparameters() const { return hyper_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const ParameterBlock& block(std::string_view name) const;

  double threshold() const override { return hyper_.threshold; }
  bool is_trained() const override { return trained_; }
  void set_trained(bool trained) { trained_ = trained; }

  /// Adds dLoss/dθ of one example into `gradient` (same layout as parameters())
  /// and returns its loss, with Loss = softplus(z) - y z for the logit z.
  virtual double accumulate_gradient(const PatientRecord& record, int label,
                                     std::span<double> gradient) const = 0;

 protected:
  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols);
  void fill_normal(std::string_view block_name, double stddev, std::uint64_t seed);

  std::vector<double> params_;

 private:
  ModelKind kind_;
  std::size_t vocab_size_;
  VictimHyperparameters hyper_;
  std::vector<ParameterBlock> blocks_;
  bool trained_ = false;
};

/// sigmoid(b + sum_t rho^(T-t) sum_{c in v_t} w_c)
class BagOfCodesLogistic final : public TrainableVictim {
 public:
  BagOfCodesLogistic(std::size_t vocab_size, VictimHyperparameters hyper, std::uint64_t seed);

  double score(const PatientRecord& record) const override;
  double accumulate_gradient(const PatientRecord& record, int label,
                             std::span<double> gradient) const override;

 private:
  std::size_t w_ = 0;
  std::size_t b_ = 0;
};

/// Visit vector h_t = mean code embedding + embedding of the visit's distance
/// from the most recent visit; softmax attention over visits; logistic readout.
class TimeAwareAttentionScorer final : public TrainableVictim {
 public:
  TimeAwareAttentionScorer(std::size_t vocab_size, VictimHyperparameters hyper,
                           std::uint64_t seed);

  double score(const PatientRecord& record) const override;
  double accumulate_gradient(const PatientRecord& record, int label,
                             std::span<double> gradient) const override;

 private:
  double logit(const PatientRecord& record, std::vector<double>* visit_vectors,
               std::vector<double>* attention, std::vector<double>* pooled) const;

  std::size_t embed_ = 0, position_ = 0, attend_ = 0, readout_ = 0, bias_ = 0;
};

/// Gated recurrence over mean code embeddings:
///   z_t = σ(Wz x_t + Uz h_{t-1} + bz), c_t = tanh(Wx x_t + Wh h_{t-1} + bh),
///   h_t = (1 - z_t) h_{t-1} + z_t c_t, score = σ(w·h_T + b).
class RecurrentScorer final : public TrainableVictim {
 public:
  RecurrentScorer(std::size_t vocab_size, VictimHyperparameters hyper, std::uint64_t seed);

  double score(const PatientRecord& record) const override;
  double accumulate_gradient(const PatientRecord& record, int label,
                             std::span<double> gradient) const override;

 private:
  struct Tape;
  double forward(const PatientRecord& record, Tape* tape) const;

  std::size_t embed_ = 0, wz_ = 0, uz_ = 0, bz_ = 0, wx_ = 0, wh_ = 0, bh_ = 0, readout_ = 0,
              bias_ = 0;
};

std::unique_ptr<TrainableVictim> make_victim(ModelKind kind, std::size_t vocab_size,
                                             const VictimHyperparameters& hyper,
                                             std::uint64_t seed);

double sigmoid(double z);

}  // namespace ehrattack
