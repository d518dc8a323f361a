#include "ehrattack/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "ehrattack/errors.hpp"

namespace ehrattack {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

/// Line numbers of section headers and keys, for error messages.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const auto t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(std::string_view(t).substr(1, t.size() - 2));
        lines_.emplace(section, n);
      } else if (const auto eq = t.find('='); eq != std::string::npos) {
        lines_.emplace(section + "." + trim(std::string_view(t).substr(0, eq)), n);
      }
    }
  }
  std::size_t line_of(const std::string& path) const {
    const auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, std::size_t> lines_;
};

class Reader {
 public:
  Reader(const pt::ptree& tree, const LineIndex& index, std::string source)
      : tree_(tree), index_(index), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& problem) const {
    throw ConfigError(fmt::format("{}:{}: {}", source_, index_.line_of(path), problem));
  }

  void check_keys(const std::map<std::string, std::set<std::string>>& allowed) const {
    for (const auto& [section, body] : tree_) {
      const auto it = allowed.find(section);
      if (it == allowed.end()) fail(section, fmt::format("unknown section [{}]", section));
      if (!body.data().empty()) fail(section, fmt::format("key '{}' outside any section", section));
      for (const auto& [key, value] : body) {
        if (!it->second.count(key)) {
          fail(section + "." + key, fmt::format("unknown key '{}' in [{}]", key, section));
        }
      }
    }
  }

  std::optional<std::string> text(const std::string& section, const std::string& key) const {
    const auto node = tree_.get_child_optional(pt::ptree::path_type(section + "." + key, '.'));
    if (!node) return std::nullopt;
    return trim(node->data());
  }

  template <typename T>
  void number(const std::string& section, const std::string& key, T& out) const {
    if (auto v = text(section, key)) out = parse_number<T>(section + "." + key, *v);
  }

  template <typename T>
  void list(const std::string& section, const std::string& key, std::vector<T>& out) const {
    const auto v = text(section, key);
    if (!v) return;
    out.clear();
    for (const auto& item : split(section + "." + key, *v)) out.push_back(parse_number<T>(section + "." + key, item));
  }

  std::vector<std::string> split(const std::string& path, const std::string& value) const {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty()) fail(path, fmt::format("empty item in list '{}'", value));
      items.push_back(item);
    }
    if (items.empty()) fail(path, "empty list");
    return items;
  }

  template <typename T>
  T parse_number(const std::string& path, const std::string& value) const {
    T parsed{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, parsed);
    if (ec != std::errc() || ptr != end) {
      fail(path, fmt::format("'{}' is not a valid {}", value,
                             std::is_floating_point_v<T> ? "number" : "non-negative integer"));
    }
    return parsed;
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    const auto v = text(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail(section + "." + key, fmt::format("'{}' is not a boolean", *v));
  }

 private:
  const pt::ptree& tree_;
  const LineIndex& index_;
  std::string source_;
};

}  // namespace

ExperimentFile parse_experiment_config(std::istream& in, const std::string& source_name,
                                       const std::filesystem::path& base_dir) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  pt::ptree tree;
  try {
    std::istringstream stream(text);
    pt::ini_parser::read_ini(stream, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source_name, e.line(), e.message()));
  }
  const LineIndex index(text);
  const Reader r(tree, index, source_name);
  r.check_keys({
      {"data",
       {"records", "vocabulary", "patients", "positive_fraction", "mean_visits", "mean_codes",
        "vocab", "categories", "risk_codes", "recency_weight", "noise", "zipf_exponent", "seed"}},
      {"victims",
       {"models", "epochs", "learning_rate", "batch_size", "l2_penalty", "embedding_dim",
        "max_positions", "recency_decay"}},
      {"attack",
       {"attackers", "epsilon", "max_visits", "episodes", "gamma", "alpha", "temperature",
        "max_substitutes"}},
      {"experiment", {"seeds", "test_limit", "workers", "per_sample"}},
      {"sweep", {"parameter", "values"}},
  });

  ExperimentFile file;
  auto& cfg = file.experiment;

  auto& gen = cfg.data.generator;
  if (auto v = r.text("data", "records")) cfg.data.records_path = base_dir / *v;
  if (auto v = r.text("data", "vocabulary")) cfg.data.vocabulary_path = base_dir / *v;
  if (cfg.data.records_path.has_value() != cfg.data.vocabulary_path.has_value()) {
    r.fail(cfg.data.records_path ? "data.records" : "data.vocabulary",
           "records and vocabulary must be given together");
  }
  r.number("data", "patients", gen.n_patients);
  r.number("data", "positive_fraction", gen.positive_fraction);
  r.number("data", "mean_visits", gen.mean_visits);
  r.number("data", "mean_codes", gen.mean_codes_per_visit);
  r.number("data", "vocab", gen.vocab_size);
  r.number("data", "categories", gen.n_categories);
  r.number("data", "risk_codes", gen.n_risk_codes);
  r.number("data", "recency_weight", gen.recency_weight);
  r.number("data", "noise", gen.label_noise);
  r.number("data", "zipf_exponent", gen.code_zipf_exponent);
  r.number("data", "seed", gen.seed);

  VictimSpec victim;
  r.number("victims", "epochs", victim.train.epochs);
  r.number("victims", "learning_rate", victim.train.learning_rate);
  r.number("victims", "batch_size", victim.train.batch_size);
  r.number("victims", "l2_penalty", victim.train.l2_penalty);
  r.number("victims", "embedding_dim", victim.hyper.embedding_dim);
  r.number("victims", "max_positions", victim.hyper.max_positions);
  r.number("victims", "recency_decay", victim.hyper.recency_decay);
  const auto models = r.text("victims", "models").value_or("logistic, attention, recurrent");
  for (const auto& name : r.split("victims.models", models)) {
    try {
      victim.kind = parse_model_kind(name);
    } catch (const ConfigError& e) {
      r.fail("victims.models", e.what());
    }
    cfg.victims.push_back(victim);
  }

  const auto attackers =
      r.text("attack", "attackers").value_or("random, greedy_saliency, greedy_pwws, medattacker");
  for (const auto& name : r.split("attack.attackers", attackers)) {
    try {
      cfg.attackers.push_back(parse_attacker_kind(name));
    } catch (const ConfigError& e) {
      r.fail("attack.attackers", e.what());
    }
  }
  r.list("attack", "epsilon", cfg.epsilons);
  r.list("attack", "max_visits", cfg.max_visits);
  r.number("attack", "episodes", cfg.attack.episodes);
  r.number("attack", "gamma", cfg.attack.gamma);
  r.number("attack", "alpha", cfg.attack.alpha);
  r.number("attack", "temperature", cfg.attack.temperature);
  r.number("attack", "max_substitutes", cfg.attack.max_substitutes);

  r.list("experiment", "seeds", cfg.seeds);
  r.number("experiment", "test_limit", cfg.test_limit);
  r.number("experiment", "workers", cfg.workers);
  cfg.per_sample_detail = r.boolean("experiment", "per_sample", false);

  if (r.text("sweep", "parameter") || r.text("sweep", "values")) {
    SweepSpec spec;
    try {
      spec.parameter = parse_sweep_parameter(r.text("sweep", "parameter").value_or("epsilon"));
    } catch (const ConfigError& e) {
      r.fail("sweep.parameter", e.what());
    }
    r.list("sweep", "values", spec.values);
    if (spec.values.empty()) r.fail("sweep", "sweep needs a values list");
    file.sweep = std::move(spec);
  }

  // Cross-field checks, attributed to the section that holds the offending value.
  try {
    gen.validate();
  } catch (const std::exception& e) {
    r.fail("data", e.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const std::string message = e.what();
    const char* section = message.find("train:") == 0    ? "victims"
                          : message.find("attack:") == 0 ? "attack"
                          : message.find("epsilon") != std::string::npos ? "attack"
                                                                           : "experiment";
    r.fail(section, message);
  }
  return file;
}

ExperimentFile load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  return parse_experiment_config(in, path.string(), path.parent_path());
}

}  // namespace ehrattack
