#include "ehrattack/ehr.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "ehrattack/errors.hpp"
#include "ehrattack/random.hpp"

namespace ehrattack {

CodeVocabulary::CodeVocabulary(std::vector<std::string> names,
                               const std::vector<std::string>& category_names)
    : names_(std::move(names)) {
  if (names_.size() != category_names.size()) {
    throw ConfigError("vocabulary: code and category lists differ in length");
  }
  std::unordered_map<std::string, std::uint32_t> category_index;
  category_of_.reserve(names_.size());
  for (std::size_t k = 0; k < names_.size(); ++k) {
    const auto& name = names_[k];
    if (!is_valid_code_token(name)) {
      throw ConfigError(fmt::format("vocabulary: invalid code token '{}'", name));
    }
    if (!index_.emplace(name, code_at(k)).second) {
      throw ConfigError(fmt::format("vocabulary: duplicate code '{}'", name));
    }
    auto [it, inserted] =
        category_index.emplace(category_names[k], static_cast<std::uint32_t>(members_.size()));
    if (inserted) {
      category_names_.push_back(category_names[k]);
      members_.emplace_back();
    }
    category_of_.push_back(it->second);
    members_[it->second].push_back(code_at(k));
  }
  for (std::size_t c = 0; c < members_.size(); ++c) {
    if (members_[c].size() < 2) {
      throw ConfigError(
          fmt::format("vocabulary: category '{}' has fewer than two codes", category_names_[c]));
    }
  }
}

const std::string& CodeVocabulary::name(CodeId code) const {
  if (!contains(code)) throw LookupError(fmt::format("unknown code id {}", index_of(code)));
  return names_[index_of(code)];
}

CodeId CodeVocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw LookupError(fmt::format("unknown code '{}'", name));
  return it->second;
}

std::uint32_t CodeVocabulary::category_of(CodeId code) const {
  if (!contains(code)) throw LookupError(fmt::format("unknown code id {}", index_of(code)));
  return category_of_[index_of(code)];
}

const std::string& CodeVocabulary::category_name(std::uint32_t category) const {
  if (category >= category_names_.size()) {
    throw LookupError(fmt::format("unknown category {}", category));
  }
  return category_names_[category];
}

std::span<const CodeId> CodeVocabulary::members_of(std::uint32_t category) const {
  if (category >= members_.size()) throw LookupError(fmt::format("unknown category {}", category));
  return members_[category];
}

bool CodeVocabulary::operator==(const CodeVocabulary& other) const {
  return names_ == other.names_ && category_of_ == other.category_of_ &&
         category_names_ == other.category_names_;
}

bool is_valid_code_token(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '.' || c == '_' || c == '-';
  });
}

CodeVocabulary build_vocabulary(std::size_t vocab_size, std::size_t n_categories,
                                std::uint64_t seed) {
  if (n_categories < 1 || vocab_size < 2 * n_categories) {
    throw ConfigError(fmt::format(
        "build_vocabulary: need vocab_size >= 2 * n_categories >= 2 (got {} codes, {} categories)",
        vocab_size, n_categories));
  }
  const auto width = std::max<std::size_t>(4, fmt::format("{}", vocab_size - 1).size());
  std::vector<std::string> names(vocab_size);
  for (std::size_t k = 0; k < vocab_size; ++k) names[k] = fmt::format("D{:0{}}", k, width);

  std::vector<std::size_t> order(vocab_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> raw_category(vocab_size);
  for (std::size_t k = 0; k < vocab_size; ++k) raw_category[order[k]] = k % n_categories;

  // Relabel by first appearance so that a CSV round trip reproduces the ids.
  std::vector<std::size_t> relabel(n_categories, n_categories);
  std::size_t next = 0;
  std::vector<std::string> category_names(vocab_size);
  for (std::size_t k = 0; k < vocab_size; ++k) {
    auto& label = relabel[raw_category[k]];
    if (label == n_categories) label = next++;
    category_names[k] = fmt::format("G{:03}", label);
  }
  return CodeVocabulary(std::move(names), category_names);
}

std::vector<CodeId> substitute_set(CodeId code, const CodeVocabulary& vocab, std::size_t max_size,
                                   std::uint64_t seed) {
  const auto members = vocab.members_of(vocab.category_of(code));
  std::vector<CodeId> candidates;
  candidates.reserve(members.size() - 1);
  for (CodeId member : members) {
    if (member != code) candidates.push_back(member);
  }
  Rng rng(mix_seed(seed, index_of(code)));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  if (candidates.size() > max_size) candidates.resize(max_size);
  return candidates;
}

bool visit_contains(const Visit& visit, CodeId code) {
  return std::find(visit.begin(), visit.end(), code) != visit.end();
}

PatientRecord apply_substitution(const PatientRecord& record, Position position, CodeId new_code) {
  if (position.visit >= record.visits.size() ||
      position.slot >= record.visits[position.visit].size()) {
    throw EditError(fmt::format("substitution at ({}, {}) is out of range", position.visit,
                                position.slot));
  }
  const auto& visit = record.visits[position.visit];
  for (std::size_t i = 0; i < visit.size(); ++i) {
    if (i != position.slot && visit[i] == new_code) {
      throw EditError(fmt::format("substitution at ({}, {}) duplicates a code in the visit",
                                  position.visit, position.slot));
    }
  }
  PatientRecord out = record;
  out.visits[position.visit][position.slot] = new_code;
  return out;
}

bool same_shape(const PatientRecord& a, const PatientRecord& b) {
  if (a.visits.size() != b.visits.size()) return false;
  for (std::size_t t = 0; t < a.visits.size(); ++t) {
    if (a.visits[t].size() != b.visits[t].size()) return false;
  }
  return true;
}

std::size_t edit_distance(const PatientRecord& a, const PatientRecord& b) {
  if (!same_shape(a, b)) throw ComparisonError("edit_distance: records differ in shape");
  std::size_t distance = 0;
  for (std::size_t t = 0; t < a.visits.size(); ++t) {
    for (std::size_t i = 0; i < a.visits[t].size(); ++i) {
      if (a.visits[t][i] != b.visits[t][i]) ++distance;
    }
  }
  return distance;
}

std::size_t accessible_visit_count(const PatientRecord& record, std::size_t max_visits) {
  return std::min(record.visits.size(), max_visits);
}

PatientRecord truncate_accessible(const PatientRecord& record, std::size_t max_visits) {
  if (max_visits < 1) throw ConfigError("truncate_accessible: max_visits must be >= 1");
  return prefix(record, accessible_visit_count(record, max_visits));
}

PatientRecord prefix(const PatientRecord& record, std::size_t length) {
  PatientRecord out;
  out.patient_id = record.patient_id;
  const auto n = std::min(length, record.visits.size());
  out.visits.assign(record.visits.begin(), record.visits.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

PatientRecord remove_code(const PatientRecord& record, Position position) {
  if (position.visit >= record.visits.size() ||
      position.slot >= record.visits[position.visit].size()) {
    throw EditError("remove_code: position out of range");
  }
  PatientRecord out = record;
  auto& visit = out.visits[position.visit];
  visit.erase(visit.begin() + static_cast<std::ptrdiff_t>(position.slot));
  return out;
}

void validate_record(const PatientRecord& record, const CodeVocabulary& vocab) {
  if (record.visits.empty()) {
    throw FormatError(fmt::format("record '{}' has no visits", record.patient_id));
  }
  for (std::size_t t = 0; t < record.visits.size(); ++t) {
    const auto& visit = record.visits[t];
    if (visit.empty()) {
      throw FormatError(fmt::format("record '{}' visit {} is empty", record.patient_id, t));
    }
    for (std::size_t i = 0; i < visit.size(); ++i) {
      if (!vocab.contains(visit[i])) {
        throw FormatError(fmt::format("record '{}' has a code outside the vocabulary",
                                      record.patient_id));
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (visit[j] == visit[i]) {
          throw FormatError(fmt::format("record '{}' visit {} repeats code '{}'",
                                        record.patient_id, t, vocab.name(visit[i])));
        }
      }
    }
  }
}

std::uint64_t record_hash(const PatientRecord& record) {
  std::uint64_t h = stable_hash(record.patient_id);
  for (const auto& visit : record.visits) {
    h = mix_seed(h, 0xffffffffULL);
    for (CodeId code : visit) h = mix_seed(h, index_of(code));
  }
  return h;
}

}  // namespace ehrattack
