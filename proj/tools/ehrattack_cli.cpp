// Command-line entry point: gen-data, train-victim, attack, evaluate, sweep.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ehrattack/config.hpp"
#include "ehrattack/errors.hpp"
#include "ehrattack/eval.hpp"
#include "ehrattack/io.hpp"

namespace fs = std::filesystem;
using namespace ehrattack;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kVocabularyFile = "vocab.csv";

LoadedData read_data_dir(const fs::path& dir) {
  DataSource source;
  source.records_path = dir / kRecordsFile;
  source.vocabulary_path = dir / kVocabularyFile;
  return load_data(source);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

struct GenDataArgs {
  fs::path out;
  GeneratorConfig gen;
};

void run_gen_data(const GenDataArgs& args) {
  const auto data = generate_synthetic_dataset(args.gen);
  fs::create_directories(args.out);
  save_records(args.out / kRecordsFile, data.records, data.vocab);
  save_vocabulary(args.out / kVocabularyFile, data.vocab);
  std::size_t positives = 0;
  for (const auto& r : data.records) positives += static_cast<std::size_t>(r.label);
  fmt::print("wrote {} records ({} positive) and {} codes to {}\n", data.records.size(), positives,
             data.vocab.size(), args.out.string());
}

struct TrainArgs {
  fs::path data;
  std::string model = "logistic";
  fs::path out;
  fs::path log;
  TrainConfig train;
  VictimHyperparameters hyper;
};

void run_train(TrainArgs args) {
  const ModelKind kind = parse_model_kind(args.model);
  args.train.validate();
  const auto data = read_data_dir(args.data);
  const auto split = split_dataset(data.records, args.train.seed);
  auto model = make_victim(kind, data.vocab.size(), args.hyper, args.train.seed);
  const auto outcome = train_victim(*model, split, args.train);
  save_checkpoint(args.out, *model, args.train.seed);
  fs::path log = args.log;
  if (log.empty()) log = fs::path(args.out).replace_extension(".log.csv");
  auto log_out = open_output(log);
  write_training_log(log_out, outcome.log);
  fmt::print("{} held-out accuracy {:.4f} ({} test records)\n", model_kind_name(kind),
             outcome.heldout_accuracy, split.test.size());
}

struct AttackArgs {
  fs::path data;
  fs::path victim;
  std::string attacker = "medattacker";
  fs::path out;
  fs::path trace;
  AttackConfig cfg;
  std::size_t workers = 1;
  std::size_t limit = 0;
};

void run_attack(AttackArgs args) {
  const AttackerKind kind = parse_attacker_kind(args.attacker);
  args.cfg.keep_traces = !args.trace.empty();
  args.cfg.validate();
  const auto data = read_data_dir(args.data);
  const auto loaded = load_checkpoint(args.victim);
  if (loaded.model->vocab_size() != data.vocab.size()) {
    throw ConfigError(fmt::format("checkpoint expects {} codes but the data has {}",
                                  loaded.model->vocab_size(), data.vocab.size()));
  }
  auto test = split_dataset(data.records, loaded.split_seed).test;
  if (args.limit > 0 && test.size() > args.limit) test.resize(args.limit);

  const auto cell = evaluate_attacker({kind, args.cfg}, *loaded.model, test, data.vocab, args.workers);
  auto out = open_output(args.out);
  for (const auto& result : cell.results) out << attack_result_json(result, data.vocab).dump() << '\n';
  if (!args.trace.empty()) {
    auto trace = open_output(args.trace);
    for (const auto& result : cell.results) {
      for (std::size_t e = 0; e < result.traces.size(); ++e) {
        trace << episode_trace_json(result.traces[e], e + 1, result.patient_id, data.vocab).dump()
              << '\n';
      }
    }
  }
  fmt::print("{}: {} / {} successful ({:.2f}%), {} skipped, mean queries {:.1f}\n",
             attacker_kind_name(kind), cell.successes, cell.test_size, 100.0 * cell.success_rate,
             cell.skipped, cell.mean_queries);
}

struct ExperimentArgs {
  fs::path config;
  fs::path out;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> test_limit;
  std::string parameter;
  std::vector<std::size_t> values;
};

void print_averages(const ExperimentReport& report) {
  for (const auto& avg : report.averages) {
    fmt::print("{:<18} epsilon {:>3} max_visits {:>3}  average success rate {:.4f}\n",
               attacker_kind_name(avg.attacker), avg.epsilon, avg.max_visits,
               avg.average_success_rate);
  }
  if (report.single_seed) fmt::print("note: fewer than 3 seeds; rates are point estimates\n");
}

ExperimentFile read_experiment(const ExperimentArgs& args) {
  auto file = load_experiment_config(args.config);
  if (args.workers) file.experiment.workers = *args.workers;
  if (args.test_limit) file.experiment.test_limit = *args.test_limit;
  file.experiment.validate();
  return file;
}

void run_evaluate(const ExperimentArgs& args) {
  const auto file = read_experiment(args);
  const auto data = load_data(file.experiment.data);
  const auto report = run_experiment(file.experiment, data);
  write_report(report, data.vocab, args.out);
  print_averages(report);
}

void run_sweep(const ExperimentArgs& args) {
  const auto file = read_experiment(args);
  SweepSpec spec = file.sweep.value_or(SweepSpec{});
  if (!args.parameter.empty()) spec.parameter = parse_sweep_parameter(args.parameter);
  if (!args.values.empty()) spec.values = args.values;
  if (spec.values.empty()) throw ConfigError("sweep: no values given (use --values or [sweep] values)");
  const auto data = load_data(file.experiment.data);
  const auto report = sweep(file.experiment, data, spec.parameter, spec.values);
  write_report(report, data.vocab, args.out);
  print_averages(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial attacks on visit-sequence risk classifiers"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic labelled record set");
  gen_cmd->add_option("--out", gen.out, "Output directory (records.jsonl, vocab.csv)")->required();
  gen_cmd->add_option("--patients", gen.gen.n_patients, "Number of patients")->capture_default_str();
  gen_cmd->add_option("--positive-frac", gen.gen.positive_fraction, "Target positive fraction")
      ->capture_default_str();
  gen_cmd->add_option("--mean-visits", gen.gen.mean_visits, "Mean visits per patient")->capture_default_str();
  gen_cmd->add_option("--mean-codes", gen.gen.mean_codes_per_visit, "Mean codes per visit")
      ->capture_default_str();
  gen_cmd->add_option("--vocab", gen.gen.vocab_size, "Number of diagnosis codes")->capture_default_str();
  gen_cmd->add_option("--categories", gen.gen.n_categories, "Number of code categories")
      ->capture_default_str();
  gen_cmd->add_option("--risk-codes", gen.gen.n_risk_codes, "Number of planted risk codes")
      ->capture_default_str();
  gen_cmd->add_option("--recency-weight", gen.gen.recency_weight, "Per-visit decay of risk evidence")
      ->capture_default_str();
  gen_cmd->add_option("--zipf", gen.gen.code_zipf_exponent, "Code popularity exponent (0 = uniform)")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.gen.label_noise, "Label flip probability")->capture_default_str();
  gen_cmd->add_option("--seed", gen.gen.seed, "Random seed")->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-victim", "Train a victim classifier");
  train_cmd->add_option("--data", train.data, "Data directory written by gen-data")->required();
  train_cmd->add_option("--model", train.model, "logistic | attention | recurrent")
      ->capture_default_str()
      ->check(CLI::IsMember({"logistic", "attention", "recurrent"}));
  train_cmd->add_option("--epochs", train.train.epochs, "Training epochs (>= 1)")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
  train_cmd->add_option("--lr", train.train.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", train.train.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--l2", train.train.l2_penalty, "L2 penalty")->capture_default_str();
  train_cmd->add_option("--embedding-dim", train.hyper.embedding_dim, "Embedding width")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed, "Split, initialization and batch-order seed")
      ->capture_default_str();
  train_cmd->add_option("--out", train.out, "Checkpoint path (JSON)")->required();
  train_cmd->add_option("--log", train.log, "Training log CSV (default: <out stem>.log.csv)");

  AttackArgs atk;
  auto* attack_cmd = app.add_subcommand("attack", "Attack every held-out record of a data set");
  attack_cmd->add_option("--data", atk.data, "Data directory written by gen-data")->required();
  attack_cmd->add_option("--victim", atk.victim, "Victim checkpoint")->required();
  attack_cmd->add_option("--attacker", atk.attacker,
                         "random | greedy_saliency | greedy_pwws | rl_uniform | rl_flat | "
                         "rl_stochastic_sub | medattacker")
      ->capture_default_str();
  attack_cmd->add_option("--epsilon", atk.cfg.epsilon, "Maximum substituted codes")->capture_default_str();
  attack_cmd->add_option("--max-visits", atk.cfg.max_visits, "Attackable leading visits")
      ->capture_default_str();
  attack_cmd->add_option("--episodes", atk.cfg.episodes, "Learning episodes per record")
      ->capture_default_str();
  attack_cmd->add_option("--gamma", atk.cfg.gamma, "Reward discount")->capture_default_str();
  attack_cmd->add_option("--alpha", atk.cfg.alpha, "Policy learning rate")->capture_default_str();
  attack_cmd->add_option("--temperature", atk.cfg.temperature, "Policy initialization temperature")
      ->capture_default_str();
  attack_cmd->add_option("--max-substitutes", atk.cfg.max_substitutes, "Substitute set size")
      ->capture_default_str();
  attack_cmd->add_option("--seed", atk.cfg.seed, "Attack seed")->capture_default_str();
  attack_cmd->add_option("--workers", atk.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  attack_cmd->add_option("--limit", atk.limit, "Attack only the first N test records (0 = all)")
      ->capture_default_str();
  attack_cmd->add_option("--out", atk.out, "Result JSONL, one line per test record")->required();
  attack_cmd->add_option("--trace", atk.trace, "Optional per-episode trace JSONL");

  ExperimentArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run an attacker x victim x budget grid");
  ExperimentArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Vary epsilon or max_visits with other knobs fixed");
  for (auto [cmd, args] : {std::pair{eval_cmd, &eval_args}, std::pair{sweep_cmd, &sweep_args}}) {
    cmd->add_option("--config", args->config, "Experiment INI file")->required();
    cmd->add_option("--out", args->out, "Report directory (report.csv, report.json)")->required();
    cmd->add_option("--workers", args->workers, "Worker threads (overrides the file; default 1)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--test-limit", args->test_limit, "Attack only the first N test records (overrides the file)");
  }
  sweep_cmd->add_option("--param", sweep_args.parameter, "epsilon | max_visits (overrides [sweep])");
  sweep_cmd->add_option("--values", sweep_args.values, "Ascending values, e.g. 5,10,15")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    if (*train_cmd) run_train(train);
    if (*attack_cmd) run_attack(atk);
    if (*eval_cmd) run_evaluate(eval_args);
    if (*sweep_cmd) run_sweep(sweep_args);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const LookupError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const GenerationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
