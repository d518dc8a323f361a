#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ehrattack/config.hpp"
#include "ehrattack/errors.hpp"
#include "ehrattack/eval.hpp"
#include "support.hpp"

using namespace ehrattack;
using namespace ehrattack::testing;
using Catch::Matchers::WithinAbs;

namespace {

/// Two categories: G0 = {C0, C2, C4}, G1 = {C1, C3, C5}. The victim scores 0.9
/// when C0 is present, so only records holding C0 can be flipped.
struct FlipFixture {
  CodeVocabulary vocab = grid_vocabulary(2, 3);
  CodeCountVictim victim{vocab.find("C0"), 0.9};

  LabeledRecord flippable(std::size_t k) const {
    return {PatientRecord{"F" + std::to_string(k), {{vocab.find("C0")}}}, 1};
  }
  LabeledRecord robust(std::size_t k) const {
    return {PatientRecord{"R" + std::to_string(k), {{vocab.find("C1")}}}, 0};
  }
  LabeledRecord misclassified(std::size_t k) const {
    return {PatientRecord{"M" + std::to_string(k), {{vocab.find("C0")}}}, 0};
  }
};

LoadedData small_data() {
  GeneratorConfig g;
  g.n_patients = 300;
  g.vocab_size = 120;
  g.n_categories = 8;
  g.n_risk_codes = 8;
  g.mean_visits = 6;
  g.mean_codes_per_visit = 3;
  g.seed = 5;
  auto data = generate_synthetic_dataset(g);
  return {std::move(data.vocab), std::move(data.records)};
}

ExperimentConfig small_experiment() {
  ExperimentConfig cfg;
  VictimSpec spec;
  spec.train.epochs = 2;
  cfg.victims = {spec};
  cfg.attackers = {AttackerKind::random, AttackerKind::greedy_saliency, AttackerKind::medattacker};
  cfg.attack.episodes = 20;
  cfg.epsilons = {1, 3};
  cfg.max_visits = {2, 20};
  cfg.seeds = {0, 1};
  cfg.test_limit = 25;
  return cfg;
}

std::string csv_of(const ExperimentReport& report) {
  std::ostringstream out;
  write_report_csv(out, report);
  return out.str();
}

}  // namespace

TEST_CASE("random attack never succeeds against a constant victim", "[baselines][random]") {
  const auto vocab = grid_vocabulary(2, 4);
  ConstantVictim victim(0.8);
  Rng rng(1);
  LabeledRecord sample{random_record(vocab, 4, 3, rng), 1};
  AttackConfig cfg;
  cfg.episodes = 7;
  cfg.epsilon = 2;
  const auto result = random_attack(victim, sample, vocab, cfg);
  REQUIRE_FALSE(result.success);
  REQUIRE(result.episodes_used == 7);
  std::size_t slots = 0;
  for (const auto& v : sample.record.visits) slots += v.size();
  REQUIRE(result.queries.total() == 1 + 7 * std::min<std::size_t>(2, slots));
}

TEST_CASE("random attack stops at the first flip", "[baselines][random]") {
  FlipFixture f;
  AttackConfig cfg;
  const auto result = random_attack(f.victim, f.flippable(0), f.vocab, cfg);
  REQUIRE(result.success);
  REQUIRE(result.edits.size() == 1);
  REQUIRE(result.queries.total() == 2);
  REQUIRE(result.episodes_used == 1);
}

TEST_CASE("greedy saliency edits positions in saliency order", "[baselines][greedy]") {
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    auto inst = random_instance(rng, 3, 5, 5, 4);
    AttackConfig cfg;
    cfg.epsilon = 10;
    cfg.keep_traces = true;
    const auto result = greedy_attack(inst.victim, inst.sample, inst.vocab, cfg, GreedyRanking::saliency);
    REQUIRE(result.queries.count(QueryPhase::rank) == 0);
    if (!result.success) continue;
    const auto& record = inst.sample.record;
    const double sign = inst.sample.label == 1 ? 1.0 : -1.0;
    auto key = [&](Position p) {
      return sign * (inst.victim.score(record) - inst.victim.score(remove_code(record, p)));
    };
    for (std::size_t k = 1; k < result.edits.size(); ++k) {
      REQUIRE(key(result.edits[k - 1].position) >= key(result.edits[k].position));
    }
  }
}

TEST_CASE("greedy attacks are deterministic and charge ranking queries", "[baselines][greedy]") {
  Rng rng(5);
  for (int n = 0; n < 30; ++n) {
    auto inst = random_instance(rng, 3, 5, 5, 4);
    AttackConfig cfg;
    cfg.epsilon = 2;
    for (auto ranking : {GreedyRanking::saliency, GreedyRanking::saliency_times_gain}) {
      const auto a = greedy_attack(inst.victim, inst.sample, inst.vocab, cfg, ranking);
      const auto b = greedy_attack(inst.victim, inst.sample, inst.vocab, cfg, ranking);
      REQUIRE(attack_result_json(a, inst.vocab) == attack_result_json(b, inst.vocab));
      REQUIRE(a.episodes_used == 1);
      std::size_t codes = 0, open = 0;
      SubstituteTable table(inst.vocab, cfg.max_substitutes, cfg.seed);
      for (std::size_t t = 0; t < inst.sample.record.visits.size(); ++t) {
        codes += inst.sample.record.visits[t].size();
        for (std::size_t i = 0; i < inst.sample.record.visits[t].size(); ++i) {
          open += open_substitutes(table, inst.sample.record, {t, i}).size();
        }
      }
      REQUIRE(a.queries.count(QueryPhase::init) == 1 + codes);
      REQUIRE(a.queries.count(QueryPhase::rank) ==
              (ranking == GreedyRanking::saliency_times_gain ? open : 0));
    }
  }
}

TEST_CASE("the uniform ablation starts from an exactly uniform policy", "[baselines][ablation]") {
  Rng rng(7);
  for (int n = 0; n < 30; ++n) {
    auto inst = random_instance(rng, 3, 5, 5, 4);
    AttackConfig cfg;
    cfg.episodes = 1;
    cfg.keep_traces = true;
    const auto result = ablation_variant(AttackerKind::rl_uniform, inst.victim, inst.sample, inst.vocab, cfg);
    const auto& step = result.traces.at(0).steps.at(0);
    std::size_t open_visits = 0, open_slots = 0;
    for (const auto& row : step.mask) open_visits += std::count(row.begin(), row.end(), 0) > 0;
    for (char c : step.mask[step.position.visit]) open_slots += c == 0;
    REQUIRE(step.log_prob == Catch::Approx(-std::log(double(open_visits)) - std::log(double(open_slots))).epsilon(1e-12));
  }
  REQUIRE_THROWS_AS(rl_variant_for(AttackerKind::greedy_pwws), ConfigError);
}

TEST_CASE("success rate counts every test record in the denominator", "[eval][metrics]") {
  FlipFixture f;
  std::vector<LabeledRecord> test;
  for (std::size_t k = 0; k < 1848; ++k) test.push_back(k < 426 ? f.flippable(k) : f.robust(k));
  AttackerSpec spec{AttackerKind::greedy_saliency, {}};
  const auto cell = evaluate_attacker(spec, f.victim, test, f.vocab);
  REQUIRE(cell.successes == 426);
  REQUIRE(cell.test_size == 1848);
  REQUIRE(std::round(cell.success_rate * 1e4) / 1e4 == 0.2305);
  REQUIRE(cell.mean_edits == 1.0);

  std::vector<LabeledRecord> mixed{f.flippable(0), f.misclassified(1), f.robust(2), f.robust(3)};
  const auto m = evaluate_attacker(spec, f.victim, mixed, f.vocab);
  REQUIRE(m.skipped == 1);
  REQUIRE(m.success_rate == 0.25);
  // Each attacked record costs F(V), one saliency probe, then a baseline and two candidates.
  REQUIRE(m.mean_queries == 5.0);
}

TEST_CASE("average success rate is the arithmetic mean", "[eval][metrics]") {
  const double avg = average_success_rate({0.2305, 0.0898, 0.0346});
  REQUIRE(std::round(avg * 1e4) / 1e4 == 0.1183);
  REQUIRE_THROWS_AS(average_success_rate({}), ConfigError);
}

TEST_CASE("evaluation rejects an untrained victim", "[eval][errors]") {
  const auto vocab = grid_vocabulary(2, 3);
  auto model = make_victim(ModelKind::logistic, vocab.size(), {}, 0);
  std::vector<LabeledRecord> test{{PatientRecord{"A", {{code_at(0)}}}, 0}};
  REQUIRE_THROWS_AS(evaluate_attacker({AttackerKind::random, {}}, *model, test, vocab), ConfigError);
}

TEST_CASE("worker count does not change results", "[eval][determinism]") {
  Rng rng(9);
  auto inst = random_instance(rng, 3, 5, 5, 4);
  std::vector<LabeledRecord> test;
  for (int k = 0; k < 40; ++k) {
    LabeledRecord s{random_record(inst.vocab, 5, 4, rng, "S" + std::to_string(k)), 0};
    s.label = label_from_score(inst.victim.score(s.record), 0.5);
    test.push_back(s);
  }
  for (auto kind : {AttackerKind::random, AttackerKind::medattacker}) {
    AttackerSpec spec{kind, {}};
    spec.cfg.episodes = 30;
    const auto one = evaluate_attacker(spec, inst.victim, test, inst.vocab, 1);
    const auto four = evaluate_attacker(spec, inst.victim, test, inst.vocab, 4);
    REQUIRE(one.successes == four.successes);
    for (std::size_t k = 0; k < test.size(); ++k) {
      REQUIRE(attack_result_json(one.results[k], inst.vocab) == attack_result_json(four.results[k], inst.vocab));
    }
  }
}

TEST_CASE("experiment grid produces one row per cell and is reproducible", "[eval][experiment]") {
  const auto data = small_data();
  const auto cfg = small_experiment();
  const auto report = run_experiment(cfg, data);
  REQUIRE(report.cells.size() == 3 * 1 * 2 * 2 * 2);
  REQUIRE(report.single_seed);  // fewer than three seeds
  REQUIRE(report.victims.size() == 2);
  REQUIRE(report.averages.size() == 3 * 2 * 2);
  const auto csv = csv_of(report);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 24);

  auto parallel = cfg;
  parallel.workers = 3;
  REQUIRE(csv_of(run_experiment(parallel, data)) == csv);

  ExperimentReport empty;
  REQUIRE(csv_of(empty) ==
          "attacker,victim,seed,epsilon,max_visits,successes,test_size,success_rate,"
          "mean_queries,mean_edits,mean_episodes,skipped\n");
}

TEST_CASE("success counts never fall as the budget grows", "[eval][experiment][property]") {
  const auto data = small_data();
  auto cfg = small_experiment();
  cfg.seeds = {3};
  cfg.epsilons = {1, 2, 4};
  cfg.max_visits = {1, 3, 20};
  const auto report = run_experiment(cfg, data);
  REQUIRE(report.single_seed);
  for (const auto& a : report.cells) {
    for (const auto& b : report.cells) {
      if (a.key.attacker != b.key.attacker) continue;
      if (a.key.epsilon <= b.key.epsilon && a.key.max_visits <= b.key.max_visits) {
        REQUIRE(a.successes <= b.successes);
      }
    }
  }
  const auto swept = sweep(cfg, data, SweepParameter::epsilon, {1, 2, 4});
  REQUIRE(swept.cells.size() == 3 * 3);
  for (const auto& c : swept.cells) REQUIRE(c.key.max_visits == 1);
  REQUIRE_THROWS_AS(sweep(cfg, data, SweepParameter::epsilon, {2, 1}), ConfigError);
}

TEST_CASE("experiment configuration is validated", "[eval][errors]") {
  auto base = small_experiment();
  REQUIRE_NOTHROW(base.validate());
  auto c = base;
  c.victims.clear();
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = base;
  c.epsilons = {3, 3};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = base;
  c.seeds = {1, 1};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = base;
  c.workers = 0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = base;
  c.max_visits = {0, 2};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  REQUIRE(parse_sweep_parameter("max_visits") == SweepParameter::max_visits);
  REQUIRE_THROWS_AS(parse_sweep_parameter("alpha"), ConfigError);
}

TEST_CASE("report files are written as CSV and JSON", "[eval][report]") {
  const auto data = small_data();
  auto cfg = small_experiment();
  cfg.seeds = {0};
  cfg.epsilons = {2};
  cfg.max_visits = {20};
  cfg.per_sample_detail = true;
  const auto report = run_experiment(cfg, data);
  const auto dir = std::filesystem::temp_directory_path() / "ehrattack_report_test";
  std::filesystem::remove_all(dir);
  write_report(report, data.vocab, dir);
  std::ifstream json_in(dir / "report.json");
  const auto j = nlohmann::json::parse(json_in);
  REQUIRE(j["single_seed"] == true);
  REQUIRE(j["cells"].size() == 3);
  REQUIRE(j["cells"][0]["samples"].size() == 25);
  std::ifstream csv_in(dir / "report.csv");
  std::stringstream csv;
  csv << csv_in.rdbuf();
  REQUIRE(csv.str() == csv_of(report));
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment files parse into configurations", "[config]") {
  std::istringstream in(R"([data]
patients = 200
vocab = 100
categories = 5
seed = 4

[victims]
models = logistic, attention
epochs = 3

[attack]
attackers = random, medattacker
epsilon = 1, 5
episodes = 50

[experiment]
seeds = 0, 1, 2
test_limit = 10

[sweep]
parameter = max_visits
values = 5, 10
)");
  const auto file = parse_experiment_config(in, "exp.ini");
  const auto& e = file.experiment;
  REQUIRE(e.data.generator.n_patients == 200);
  REQUIRE(e.data.generator.seed == 4);
  REQUIRE(e.victims.size() == 2);
  REQUIRE(e.victims[1].kind == ModelKind::attention);
  REQUIRE(e.victims[0].train.epochs == 3);
  REQUIRE(e.attackers == std::vector<AttackerKind>{AttackerKind::random, AttackerKind::medattacker});
  REQUIRE(e.epsilons == std::vector<std::size_t>{1, 5});
  REQUIRE(e.attack.episodes == 50);
  REQUIRE(e.seeds == std::vector<std::uint64_t>{0, 1, 2});
  REQUIRE(e.test_limit == 10);
  REQUIRE(file.sweep);
  REQUIRE(file.sweep->parameter == SweepParameter::max_visits);
  REQUIRE(file.sweep->values == std::vector<std::size_t>{5, 10});
}

TEST_CASE("experiment file errors name the offending line", "[config][errors]") {
  auto message_for = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      parse_experiment_config(in, "exp.ini");
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  REQUIRE(message_for("[attack]\nepisodes = 10\nepsilon = 3, x\n").find("exp.ini:3") != std::string::npos);
  REQUIRE(message_for("[victims]\nmodels = logistic, forest\n").find("exp.ini:2") != std::string::npos);
  REQUIRE(message_for("[data]\n\nunknown_key = 1\n").find("exp.ini:3") != std::string::npos);
  REQUIRE(message_for("[bogus]\nx = 1\n").find("exp.ini:1") != std::string::npos);
  REQUIRE(message_for("[data]\npatients 3\n").find("exp.ini:2") != std::string::npos);
  REQUIRE(message_for("[experiment]\nworkers = 0\n") != "");
  REQUIRE(message_for("[attack]\nalpha = -1\n") != "");
}

TEST_CASE("shipped experiment files parse", "[config]") {
  for (const char* name : {"benchmark.ini", "ablation.ini", "sweep.ini"}) {
    INFO(name);
    const auto file = load_experiment_config(std::filesystem::path(EHRATTACK_SOURCE_DIR) / "configs" / name);
    REQUIRE_NOTHROW(file.experiment.validate());
  }
  REQUIRE(load_experiment_config(std::filesystem::path(EHRATTACK_SOURCE_DIR) / "configs" / "sweep.ini").sweep);
}
