#include "ehrattack/eval.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"
#include "ehrattack/io.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

namespace {

bool strictly_ascending(const std::vector<std::size_t>& values) {
  return std::adjacent_find(values.begin(), values.end(),
                            [](std::size_t a, std::size_t b) { return a >= b; }) == values.end();
}

std::string format_rate(double value) { return fmt::format("{:.6f}", value); }

}  // namespace

void ExperimentConfig::validate() const {
  if (victims.empty()) throw ConfigError("experiment: at least one victim is required");
  if (attackers.empty()) throw ConfigError("experiment: at least one attacker is required");
  if (epsilons.empty() || max_visits.empty()) {
    throw ConfigError("experiment: epsilon and max_visits grids must be non-empty");
  }
  if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("experiment: seeds must be distinct");
  }
  if (!strictly_ascending(epsilons) || !strictly_ascending(max_visits)) {
    throw ConfigError("experiment: epsilon and max_visits grids must be strictly ascending");
  }
  if (epsilons.front() < 1 || max_visits.front() < 1) {
    throw ConfigError("experiment: epsilon and max_visits values must be >= 1");
  }
  if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
  if (std::set<AttackerKind>(attackers.begin(), attackers.end()).size() != attackers.size()) {
    throw ConfigError("experiment: attackers must be distinct");
  }
  std::set<ModelKind> kinds;
  for (const auto& victim : victims) {
    if (!kinds.insert(victim.kind).second) throw ConfigError("experiment: victims must be distinct");
    victim.train.validate();
  }
  attack.validate();
}

CellMetrics evaluate_attacker(const AttackerSpec& attacker, const VictimModel& victim,
                              const std::vector<LabeledRecord>& test_set,
                              const CodeVocabulary& vocab, std::size_t workers,
                              const std::vector<const AttackResult*>* carried) {
  if (!victim.is_trained()) throw ConfigError("evaluate: victim model is not trained");
  if (carried && carried->size() != test_set.size()) {
    throw ConfigError("evaluate: carried results do not match the test set");
  }
  attacker.cfg.validate();

  CellMetrics cell;
  cell.key.attacker = attacker.kind;
  cell.key.epsilon = attacker.cfg.epsilon;
  cell.key.max_visits = attacker.cfg.max_visits;
  cell.key.seed = attacker.cfg.seed;
  cell.test_size = test_set.size();
  cell.results.resize(test_set.size());

  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::size_t failure_index = test_set.size();
  auto work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= test_set.size()) return;
      try {
        const AttackResult* reuse = carried ? (*carried)[k] : nullptr;
        cell.results[k] = reuse && reuse->success
                              ? *reuse
                              : run_attacker(attacker, victim, test_set[k], vocab);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (k < failure_index) {
          failure_index = k;
          failure = std::current_exception();
        }
      }
    }
  };
  const std::size_t n_threads = std::min(std::max<std::size_t>(workers, 1), test_set.size());
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::size_t attacked = 0;
  double queries = 0.0, edits = 0.0, episodes = 0.0;
  for (const auto& result : cell.results) {
    if (result.skipped) {
      ++cell.skipped;
      continue;
    }
    ++attacked;
    queries += static_cast<double>(result.queries.total());
    episodes += static_cast<double>(result.episodes_used);
    if (result.success) {
      ++cell.successes;
      edits += static_cast<double>(result.edits.size());
    }
  }
  if (cell.test_size > 0) {
    cell.success_rate = static_cast<double>(cell.successes) / static_cast<double>(cell.test_size);
  }
  if (attacked > 0) {
    cell.mean_queries = queries / static_cast<double>(attacked);
    cell.mean_episodes = episodes / static_cast<double>(attacked);
  }
  if (cell.successes > 0) cell.mean_edits = edits / static_cast<double>(cell.successes);
  return cell;
}

double average_success_rate(const std::vector<double>& rates) {
  if (rates.empty()) throw ConfigError("average_success_rate: no rates given");
  double sum = 0.0;
  for (double r : rates) sum += r;
  return sum / static_cast<double>(rates.size());
}

LoadedData load_data(const DataSource& source) {
  if (source.records_path) {
    if (!source.vocabulary_path) {
      throw ConfigError("data: a records file needs a vocabulary file alongside it");
    }
    LoadedData data{load_vocabulary(*source.vocabulary_path), {}};
    data.records = load_records(*source.records_path, data.vocab);
    return data;
  }
  auto generated = generate_synthetic_dataset(source.generator);
  return {std::move(generated.vocab), std::move(generated.records)};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const LoadedData& data) {
  cfg.validate();
  ExperimentReport report;
  report.single_seed = cfg.seeds.size() < 3;
  report.per_sample_detail = cfg.per_sample_detail;

  for (std::uint64_t seed : cfg.seeds) {
    const auto split = split_dataset(data.records, seed);
    std::vector<LabeledRecord> test = split.test;
    if (cfg.test_limit > 0 && test.size() > cfg.test_limit) test.resize(cfg.test_limit);

    for (const auto& spec : cfg.victims) {
      auto model = make_victim(spec.kind, data.vocab.size(), spec.hyper,
                               mix_seed(seed, static_cast<std::uint64_t>(spec.kind) + 1));
      TrainConfig train = spec.train;
      train.seed = seed;
      const auto outcome = train_victim(*model, split, train);
      report.victims.push_back({seed, spec.kind, outcome.heldout_accuracy});

      for (AttackerKind kind : cfg.attackers) {
        const std::size_t first_cell = report.cells.size();
        for (std::size_t e : cfg.epsilons) {
          for (std::size_t m : cfg.max_visits) {
            // Earliest dominated success per record (smaller or equal budget on both axes).
            std::vector<const AttackResult*> carried(test.size(), nullptr);
            for (std::size_t c = first_cell; c < report.cells.size(); ++c) {
              const auto& prior = report.cells[c];
              if (prior.key.epsilon > e || prior.key.max_visits > m) continue;
              for (std::size_t k = 0; k < test.size(); ++k) {
                if (!carried[k] && prior.results[k].success) carried[k] = &prior.results[k];
              }
            }
            AttackerSpec attacker{kind, cfg.attack};
            attacker.cfg.epsilon = e;
            attacker.cfg.max_visits = m;
            attacker.cfg.seed = seed;
            auto cell = evaluate_attacker(attacker, *model, test, data.vocab, cfg.workers, &carried);
            cell.key.victim = spec.kind;
            report.cells.push_back(std::move(cell));
          }
        }
      }
    }
  }

  // Per attacker and grid point: mean over victims of the per-victim mean over seeds.
  for (AttackerKind kind : cfg.attackers) {
    for (std::size_t e : cfg.epsilons) {
      for (std::size_t m : cfg.max_visits) {
        std::vector<double> per_victim;
        for (const auto& spec : cfg.victims) {
          std::vector<double> per_seed;
          for (const auto& cell : report.cells) {
            if (cell.key.attacker == kind && cell.key.victim == spec.kind &&
                cell.key.epsilon == e && cell.key.max_visits == m) {
              per_seed.push_back(cell.success_rate);
            }
          }
          per_victim.push_back(average_success_rate(per_seed));
        }
        report.averages.push_back({kind, e, m, average_success_rate(per_victim)});
      }
    }
  }
  if (!cfg.per_sample_detail) {
    for (auto& cell : report.cells) {
      cell.results.clear();
      cell.results.shrink_to_fit();
    }
  }
  return report;
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "epsilon") return SweepParameter::epsilon;
  if (name == "max_visits") return SweepParameter::max_visits;
  throw ConfigError(fmt::format("unknown sweep parameter '{}' (expected epsilon or max_visits)", name));
}

std::string_view sweep_parameter_name(SweepParameter parameter) {
  return parameter == SweepParameter::epsilon ? "epsilon" : "max_visits";
}

ExperimentReport sweep(ExperimentConfig cfg, const LoadedData& data, SweepParameter parameter,
                       std::vector<std::size_t> values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  if (!strictly_ascending(values)) throw ConfigError("sweep: values must be strictly ascending");
  if (parameter == SweepParameter::epsilon) {
    cfg.epsilons = std::move(values);
    cfg.max_visits.resize(1);
  } else {
    cfg.max_visits = std::move(values);
    cfg.epsilons.resize(1);
  }
  return run_experiment(cfg, data);
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "attacker,victim,seed,epsilon,max_visits,successes,test_size,success_rate,"
         "mean_queries,mean_edits,mean_episodes,skipped\n";
  for (const auto& cell : report.cells) {
    out << fmt::format("{},{},{},{},{},{},{},{},{:.3f},{:.3f},{:.3f},{}\n",
                       attacker_kind_name(cell.key.attacker), model_kind_name(cell.key.victim),
                       cell.key.seed, cell.key.epsilon, cell.key.max_visits, cell.successes,
                       cell.test_size, format_rate(cell.success_rate), cell.mean_queries,
                       cell.mean_edits, cell.mean_episodes, cell.skipped);
  }
}

nlohmann::json report_json(const ExperimentReport& report, const CodeVocabulary& vocab) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json j{{"attacker", attacker_kind_name(cell.key.attacker)},
                     {"victim", model_kind_name(cell.key.victim)},
                     {"seed", cell.key.seed},
                     {"epsilon", cell.key.epsilon},
                     {"max_visits", cell.key.max_visits},
                     {"successes", cell.successes},
                     {"skipped", cell.skipped},
                     {"test_size", cell.test_size},
                     {"success_rate", cell.success_rate},
                     {"mean_queries", cell.mean_queries},
                     {"mean_edits", cell.mean_edits},
                     {"mean_episodes", cell.mean_episodes}};
    if (report.per_sample_detail) {
      nlohmann::json samples = nlohmann::json::array();
      for (const auto& result : cell.results) samples.push_back(attack_result_json(result, vocab));
      j["samples"] = std::move(samples);
    }
    cells.push_back(std::move(j));
  }
  nlohmann::json averages = nlohmann::json::array();
  for (const auto& avg : report.averages) {
    averages.push_back({{"attacker", attacker_kind_name(avg.attacker)},
                        {"epsilon", avg.epsilon},
                        {"max_visits", avg.max_visits},
                        {"average_success_rate", avg.average_success_rate}});
  }
  nlohmann::json victims = nlohmann::json::array();
  for (const auto& v : report.victims) {
    victims.push_back({{"seed", v.seed},
                       {"victim", model_kind_name(v.victim)},
                       {"heldout_accuracy", v.heldout_accuracy}});
  }
  return {{"single_seed", report.single_seed},
          {"victims", std::move(victims)},
          {"cells", std::move(cells)},
          {"averages", std::move(averages)}};
}

void write_report(const ExperimentReport& report, const CodeVocabulary& vocab,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError(fmt::format("cannot create report directory {}: {}", dir.string(), ec.message()));
  std::ofstream csv(dir / "report.csv");
  std::ofstream json(dir / "report.json");
  if (!csv || !json) throw ConfigError(fmt::format("cannot write report files in {}", dir.string()));
  write_report_csv(csv, report);
  json << report_json(report, vocab).dump(2) << '\n';
  if (!csv || !json) throw ConfigError(fmt::format("failed writing report files in {}", dir.string()));
}

}  // namespace ehrattack
