#include "ehrattack/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double bce_from_logit(double z, int label) { return softplus(z) - static_cast<double>(label) * z; }

double dot(const double* a, const double* b, std::size_t n) {
  // Four independent partial sums let the compiler vectorize the reduction.
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s[0] += a[k] * b[k];
    s[1] += a[k + 1] * b[k + 1];
    s[2] += a[k + 2] * b[k + 2];
    s[3] += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s[0] += a[k] * b[k];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

/// A visit's code indices in ascending order. Summing in this order makes every
/// per-visit aggregate exactly invariant to the order of codes inside the visit.
class SortedCodes {
 public:
  explicit SortedCodes(const Visit& visit) : size_(visit.size()) {
    std::size_t* out = inline_.data();
    if (size_ > inline_.size()) {
      heap_.resize(size_);
      out = heap_.data();
    }
    for (std::size_t k = 0; k < size_; ++k) {
      // Insertion sort: visits hold a handful of codes.
      const std::size_t v = index_of(visit[k]);
      std::size_t j = k;
      for (; j > 0 && out[j - 1] > v; --j) out[j] = out[j - 1];
      out[j] = v;
    }
    data_ = out;
  }
  const std::size_t* begin() const { return data_; }
  const std::size_t* end() const { return data_ + size_; }

 private:
  std::array<std::size_t, 16> inline_;
  std::vector<std::size_t> heap_;
  const std::size_t* data_ = nullptr;
  std::size_t size_ = 0;
};

/// out = mean of the visit's embedding rows (zero for an empty visit).
void mean_embedding(const Visit& visit, const double* table, std::size_t dim, double* out) {
  std::fill(out, out + dim, 0.0);
  if (visit.empty()) return;
  for (std::size_t index : SortedCodes(visit)) {
    const double* row = table + index * dim;
    for (std::size_t k = 0; k < dim; ++k) out[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(visit.size());
  for (std::size_t k = 0; k < dim; ++k) out[k] *= inv;
}

void scatter_mean_gradient(const Visit& visit, const double* grad_mean, std::size_t dim,
                           double* table_grad) {
  if (visit.empty()) return;
  const double inv = 1.0 / static_cast<double>(visit.size());
  for (CodeId code : visit) {
    double* row = table_grad + index_of(code) * dim;
    for (std::size_t k = 0; k < dim; ++k) row[k] += grad_mean[k] * inv;
  }
}

// y += M x for a row-major n×n matrix.
void matvec_add(const double* m, const double* x, std::size_t n, double* y) {
  for (std::size_t r = 0; r < n; ++r) y[r] += dot(m + r * n, x, n);
}

// y += M^T x
void matvec_t_add(const double* m, const double* x, std::size_t n, double* y) {
  for (std::size_t r = 0; r < n; ++r) {
    const double xr = x[r];
    const double* row = m + r * n;
    for (std::size_t c = 0; c < n; ++c) y[c] += row[c] * xr;
  }
}

// G += a b^T
void outer_add(const double* a, const double* b, std::size_t n, double* g) {
  for (std::size_t r = 0; r < n; ++r) {
    const double ar = a[r];
    double* row = g + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += ar * b[c];
  }
}

void check_codes(const PatientRecord& record, std::size_t vocab_size) {
  for (const auto& visit : record.visits) {
    for (CodeId code : visit) {
      if (index_of(code) >= vocab_size) {
        throw LookupError(fmt::format("code id {} outside model vocabulary of {}", index_of(code),
                                      vocab_size));
      }
    }
  }
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic:
      return "logistic";
    case ModelKind::attention:
      return "attention";
    case ModelKind::recurrent:
      return "recurrent";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "logistic") return ModelKind::logistic;
  if (name == "attention") return ModelKind::attention;
  if (name == "recurrent") return ModelKind::recurrent;
  throw ConfigError(fmt::format("unknown model kind '{}' (logistic|attention|recurrent)", name));
}

TrainableVictim::TrainableVictim(ModelKind kind, std::size_t vocab_size,
                                 VictimHyperparameters hyper)
    : kind_(kind), vocab_size_(vocab_size), hyper_(hyper) {
  if (vocab_size == 0) throw ConfigError("victim: empty vocabulary");
  if (hyper_.embedding_dim == 0 || hyper_.max_positions == 0) {
    throw ConfigError("victim: embedding_dim and max_positions must be positive");
  }
  if (!(hyper_.recency_decay > 0.0 && hyper_.recency_decay <= 1.0)) {
    throw ConfigError("victim: recency_decay must lie in (0, 1]");
  }
  if (!(hyper_.threshold > 0.0 && hyper_.threshold < 1.0)) {
    throw ConfigError("victim: threshold must lie in (0, 1)");
  }
}

const ParameterBlock& TrainableVictim::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw LookupError(fmt::format("no parameter block '{}'", name));
}

std::size_t TrainableVictim::add_block(std::string name, std::size_t rows, std::size_t cols) {
  const std::size_t offset = params_.size();
  blocks_.push_back({std::move(name), offset, rows, cols});
  params_.resize(offset + rows * cols, 0.0);
  return offset;
}

void TrainableVictim::fill_normal(std::string_view block_name, double stddev, std::uint64_t seed) {
  const auto& b = block(block_name);
  Rng rng(mix_seed(seed, stable_hash(block_name)));
  std::normal_distribution<double> normal(0.0, stddev);
  for (std::size_t k = 0; k < b.size(); ++k) params_[b.offset + k] = normal(rng);
}

// --- bag of codes -----------------------------------------------------------

BagOfCodesLogistic::BagOfCodesLogistic(std::size_t vocab_size, VictimHyperparameters hyper,
                                       std::uint64_t seed)
    : TrainableVictim(ModelKind::logistic, vocab_size, hyper) {
  w_ = add_block("w", vocab_size, 1);
  b_ = add_block("b", 1, 1);
  fill_normal("w", 0.01, seed);
}

double BagOfCodesLogistic::score(const PatientRecord& record) const {
  check_codes(record, vocab_size());
  const double rho = hyperparameters().recency_decay;
  double z = params_[b_];
  double weight = 1.0;
  for (auto t = record.visits.size(); t-- > 0;) {
    double visit_sum = 0.0;
    for (std::size_t index : SortedCodes(record.visits[t])) visit_sum += params_[w_ + index];
    z += weight * visit_sum;
    weight *= rho;
  }
  return sigmoid(z);
}

double BagOfCodesLogistic::accumulate_gradient(const PatientRecord& record, int label,
                                               std::span<double> gradient) const {
  check_codes(record, vocab_size());
  const double rho = hyperparameters().recency_decay;
  double z = params_[b_];
  double weight = 1.0;
  for (auto t = record.visits.size(); t-- > 0;) {
    double visit_sum = 0.0;
    for (std::size_t index : SortedCodes(record.visits[t])) visit_sum += params_[w_ + index];
    z += weight * visit_sum;
    weight *= rho;
  }
  const double dz = sigmoid(z) - static_cast<double>(label);
  gradient[b_] += dz;
  weight = 1.0;
  for (auto t = record.visits.size(); t-- > 0;) {
    for (CodeId code : record.visits[t]) gradient[w_ + index_of(code)] += dz * weight;
    weight *= rho;
  }
  return bce_from_logit(z, label);
}

// --- time-aware attention ---------------------------------------------------

TimeAwareAttentionScorer::TimeAwareAttentionScorer(std::size_t vocab_size,
                                                   VictimHyperparameters hyper, std::uint64_t seed)
    : TrainableVictim(ModelKind::attention, vocab_size, hyper) {
  const std::size_t d = hyper.embedding_dim;
  embed_ = add_block("E", vocab_size, d);
  position_ = add_block("P", hyper.max_positions, d);
  attend_ = add_block("u", d, 1);
  readout_ = add_block("w", d, 1);
  bias_ = add_block("b", 1, 1);
  fill_normal("E", 0.1, seed);
  fill_normal("P", 0.1, seed);
  fill_normal("u", 0.1, seed);
  fill_normal("w", 0.1, seed);
}

double TimeAwareAttentionScorer::logit(const PatientRecord& record,
                                       std::vector<double>* visit_vectors,
                                       std::vector<double>* attention,
                                       std::vector<double>* pooled_out) const {
  const std::size_t d = hyperparameters().embedding_dim;
  const std::size_t max_pos = hyperparameters().max_positions;
  const std::size_t T = record.visits.size();
  std::vector<double> local_h, local_a, local_pooled;
  auto& h = visit_vectors ? *visit_vectors : local_h;
  auto& a = attention ? *attention : local_a;
  auto& pooled = pooled_out ? *pooled_out : local_pooled;
  h.assign(T * d, 0.0);
  a.assign(T, 0.0);
  pooled.assign(d, 0.0);
  if (T == 0) return params_[bias_];

  const double* E = params_.data() + embed_;
  const double* P = params_.data() + position_;
  const double* u = params_.data() + attend_;
  double max_e = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < T; ++t) {
    double* ht = h.data() + t * d;
    mean_embedding(record.visits[t], E, d, ht);
    const double* pt = P + std::min(T - 1 - t, max_pos - 1) * d;
    for (std::size_t k = 0; k < d; ++k) ht[k] += pt[k];
    a[t] = dot(u, ht, d);
    max_e = std::max(max_e, a[t]);
  }
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    a[t] = std::exp(a[t] - max_e);
    total += a[t];
  }
  for (std::size_t t = 0; t < T; ++t) {
    a[t] /= total;
    const double* ht = h.data() + t * d;
    for (std::size_t k = 0; k < d; ++k) pooled[k] += a[t] * ht[k];
  }
  return dot(params_.data() + readout_, pooled.data(), d) + params_[bias_];
}

double TimeAwareAttentionScorer::score(const PatientRecord& record) const {
  check_codes(record, vocab_size());
  return sigmoid(logit(record, nullptr, nullptr, nullptr));
}

double TimeAwareAttentionScorer::accumulate_gradient(const PatientRecord& record, int label,
                                                     std::span<double> gradient) const {
  check_codes(record, vocab_size());
  const std::size_t d = hyperparameters().embedding_dim;
  const std::size_t max_pos = hyperparameters().max_positions;
  const std::size_t T = record.visits.size();
  std::vector<double> h, a, pooled;
  const double z = logit(record, &h, &a, &pooled);
  const double dz = sigmoid(z) - static_cast<double>(label);

  const double* u = params_.data() + attend_;
  const double* w = params_.data() + readout_;
  gradient[bias_] += dz;
  for (std::size_t k = 0; k < d; ++k) gradient[readout_ + k] += dz * pooled[k];

  const double pooled_readout = dot(w, pooled.data(), d);
  std::vector<double> dh(d);
  for (std::size_t t = 0; t < T; ++t) {
    const double* ht = h.data() + t * d;
    const double de = dz * a[t] * (dot(w, ht, d) - pooled_readout);
    for (std::size_t k = 0; k < d; ++k) {
      dh[k] = dz * a[t] * w[k] + de * u[k];
      gradient[attend_ + k] += de * ht[k];
    }
    double* dp = gradient.data() + position_ + std::min(T - 1 - t, max_pos - 1) * d;
    for (std::size_t k = 0; k < d; ++k) dp[k] += dh[k];
    scatter_mean_gradient(record.visits[t], dh.data(), d, gradient.data() + embed_);
  }
  return bce_from_logit(z, label);
}

// --- gated recurrence -------------------------------------------------------

struct RecurrentScorer::Tape {
  std::vector<double> x, z, c, h;  // h holds T + 1 states, h[0] = 0
};

RecurrentScorer::RecurrentScorer(std::size_t vocab_size, VictimHyperparameters hyper,
                                 std::uint64_t seed)
    : TrainableVictim(ModelKind::recurrent, vocab_size, hyper) {
  const std::size_t d = hyper.embedding_dim;
  embed_ = add_block("E", vocab_size, d);
  wz_ = add_block("Wz", d, d);
  uz_ = add_block("Uz", d, d);
  bz_ = add_block("bz", d, 1);
  wx_ = add_block("Wx", d, d);
  wh_ = add_block("Wh", d, d);
  bh_ = add_block("bh", d, 1);
  readout_ = add_block("w", d, 1);
  bias_ = add_block("b", 1, 1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  fill_normal("E", 0.1, seed);
  fill_normal("Wz", scale, seed);
  fill_normal("Uz", scale, seed);
  fill_normal("Wx", scale, seed);
  fill_normal("Wh", scale, seed);
  fill_normal("w", 0.1, seed);
  std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(bz_), d, -1.0);
}

double RecurrentScorer::forward(const PatientRecord& record, Tape* tape) const {
  const std::size_t d = hyperparameters().embedding_dim;
  const std::size_t T = record.visits.size();
  const double* p = params_.data();
  std::vector<double> x(d), zg(d), cg(d), h(d, 0.0);
  if (tape) {
    tape->x.assign(T * d, 0.0);
    tape->z.assign(T * d, 0.0);
    tape->c.assign(T * d, 0.0);
    tape->h.assign((T + 1) * d, 0.0);
  }
  for (std::size_t t = 0; t < T; ++t) {
    mean_embedding(record.visits[t], p + embed_, d, x.data());
    std::copy_n(p + bz_, d, zg.begin());
    matvec_add(p + wz_, x.data(), d, zg.data());
    matvec_add(p + uz_, h.data(), d, zg.data());
    std::copy_n(p + bh_, d, cg.begin());
    matvec_add(p + wx_, x.data(), d, cg.data());
    matvec_add(p + wh_, h.data(), d, cg.data());
    for (std::size_t k = 0; k < d; ++k) {
      zg[k] = sigmoid(zg[k]);
      cg[k] = 1.0 - 2.0 / (std::exp(2.0 * cg[k]) + 1.0);  // tanh
      h[k] = (1.0 - zg[k]) * h[k] + zg[k] * cg[k];
    }
    if (tape) {
      std::copy(x.begin(), x.end(), tape->x.begin() + static_cast<std::ptrdiff_t>(t * d));
      std::copy(zg.begin(), zg.end(), tape->z.begin() + static_cast<std::ptrdiff_t>(t * d));
      std::copy(cg.begin(), cg.end(), tape->c.begin() + static_cast<std::ptrdiff_t>(t * d));
      std::copy(h.begin(), h.end(), tape->h.begin() + static_cast<std::ptrdiff_t>((t + 1) * d));
    }
  }
  return dot(p + readout_, h.data(), d) + p[bias_];
}

double RecurrentScorer::score(const PatientRecord& record) const {
  check_codes(record, vocab_size());
  return sigmoid(forward(record, nullptr));
}

double RecurrentScorer::accumulate_gradient(const PatientRecord& record, int label,
                                            std::span<double> gradient) const {
  check_codes(record, vocab_size());
  const std::size_t d = hyperparameters().embedding_dim;
  const std::size_t T = record.visits.size();
  Tape tape;
  const double out = forward(record, &tape);
  const double dout = sigmoid(out) - static_cast<double>(label);
  const double* p = params_.data();
  double* g = gradient.data();

  g[bias_] += dout;
  const double* h_last = tape.h.data() + T * d;
  std::vector<double> dh(d), dz_pre(d), dc_pre(d), dx(d), dh_prev(d);
  for (std::size_t k = 0; k < d; ++k) {
    g[readout_ + k] += dout * h_last[k];
    dh[k] = dout * p[readout_ + k];
  }
  for (std::size_t t = T; t-- > 0;) {
    const double* x = tape.x.data() + t * d;
    const double* z = tape.z.data() + t * d;
    const double* c = tape.c.data() + t * d;
    const double* hp = tape.h.data() + t * d;
    for (std::size_t k = 0; k < d; ++k) {
      dz_pre[k] = dh[k] * (c[k] - hp[k]) * z[k] * (1.0 - z[k]);
      dc_pre[k] = dh[k] * z[k] * (1.0 - c[k] * c[k]);
      dh_prev[k] = dh[k] * (1.0 - z[k]);
      g[bz_ + k] += dz_pre[k];
      g[bh_ + k] += dc_pre[k];
    }
    outer_add(dz_pre.data(), x, d, g + wz_);
    outer_add(dz_pre.data(), hp, d, g + uz_);
    outer_add(dc_pre.data(), x, d, g + wx_);
    outer_add(dc_pre.data(), hp, d, g + wh_);
    std::fill(dx.begin(), dx.end(), 0.0);
    matvec_t_add(p + wz_, dz_pre.data(), d, dx.data());
    matvec_t_add(p + wx_, dc_pre.data(), d, dx.data());
    scatter_mean_gradient(record.visits[t], dx.data(), d, g + embed_);
    matvec_t_add(p + uz_, dz_pre.data(), d, dh_prev.data());
    matvec_t_add(p + wh_, dc_pre.data(), d, dh_prev.data());
    dh.swap(dh_prev);
  }
  return bce_from_logit(out, label);
}

std::unique_ptr<TrainableVictim> make_victim(ModelKind kind, std::size_t vocab_size,
                                             const VictimHyperparameters& hyper,
                                             std::uint64_t seed) {
  switch (kind) {
    case ModelKind::logistic:
      return std::make_unique<BagOfCodesLogistic>(vocab_size, hyper, seed);
    case ModelKind::attention:
      return std::make_unique<TimeAwareAttentionScorer>(vocab_size, hyper, seed);
    case ModelKind::recurrent:
      return std::make_unique<RecurrentScorer>(vocab_size, hyper, seed);
  }
  throw ConfigError("make_victim: unknown model kind");
}

}  // namespace ehrattack
