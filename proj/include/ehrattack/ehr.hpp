#pragma once

#include <cstddef>
#include <cstdint>
#include <compare>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ehrattack {

/// Interned diagnosis code. The textual token lives in the owning CodeVocabulary.
enum class CodeId : std::uint32_t {};

constexpr std::size_t index_of(CodeId code) { return static_cast<std::size_t>(code); }
constexpr CodeId code_at(std::size_t index) { return static_cast<CodeId>(index); }

using Visit = std::vector<CodeId>;

/// Slot (visit index, code index within the visit), both zero-based.
struct Position {
  std::size_t visit = 0;
  std::size_t slot = 0;

  auto operator<=>(const Position&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  std::size_t visit_count() const { return visits.size(); }
  bool operator==(const PatientRecord&) const = default;
};

struct LabeledRecord {
  PatientRecord record;
  int label = 0;

  bool operator==(const LabeledRecord&) const = default;
};

/// Flat code categories. Every category holds at least two codes so that each
/// code has a same-category substitute.
class CodeVocabulary {
 public:
  CodeVocabulary() = default;

  /// `category_names[k]` names the category of code `names[k]`. Category ids are
  /// assigned in order of first appearance.
  CodeVocabulary(std::vector<std::string> names, const std::vector<std::string>& category_names);

  std::size_t size() const { return names_.size(); }
  std::size_t category_count() const { return members_.size(); }

  const std::string& name(CodeId code) const;
  CodeId find(std::string_view name) const;  // throws LookupError
  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  bool contains(CodeId code) const { return index_of(code) < names_.size(); }

  std::uint32_t category_of(CodeId code) const;
  const std::string& category_name(std::uint32_t category) const;
  std::span<const CodeId> members_of(std::uint32_t category) const;

  bool operator==(const CodeVocabulary& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::uint32_t> category_of_;
  std::vector<std::string> category_names_;
  std::vector<std::vector<CodeId>> members_;
  std::unordered_map<std::string, CodeId> index_;
};

/// True for tokens matching `[A-Za-z0-9._-]+`.
bool is_valid_code_token(std::string_view token);

/// Codes "D0000".. are partitioned round-robin over a seeded permutation, so
/// category sizes differ by at most one.
CodeVocabulary build_vocabulary(std::size_t vocab_size, std::size_t n_categories, std::uint64_t seed);

/// Up to `max_size` same-category codes other than `code`, in seeded random order.
std::vector<CodeId> substitute_set(CodeId code, const CodeVocabulary& vocab, std::size_t max_size,
                                   std::uint64_t seed);

/// Copy of `record` with one slot replaced. Throws EditError on a bad index or
/// when `new_code` already sits elsewhere in the same visit.
PatientRecord apply_substitution(const PatientRecord& record, Position position, CodeId new_code);

/// Number of slots whose codes differ. Throws ComparisonError on shape mismatch.
std::size_t edit_distance(const PatientRecord& a, const PatientRecord& b);

bool same_shape(const PatientRecord& a, const PatientRecord& b);

/// min(T, max_visits): how many leading visits the attacker may edit.
std::size_t accessible_visit_count(const PatientRecord& record, std::size_t max_visits);

/// The attackable prefix. Victims still score the full record.
PatientRecord truncate_accessible(const PatientRecord& record, std::size_t max_visits);

/// First `length` visits.
PatientRecord prefix(const PatientRecord& record, std::size_t length);

/// The record with one code deleted; the visit may become empty.
PatientRecord remove_code(const PatientRecord& record, Position position);

bool visit_contains(const Visit& visit, CodeId code);

/// Structural checks for records entering the system: T >= 1, non-empty
/// duplicate-free visits, codes known to the vocabulary. Throws FormatError.
void validate_record(const PatientRecord& record, const CodeVocabulary& vocab);

/// Order-sensitive 64-bit digest of the record contents.
std::uint64_t record_hash(const PatientRecord& record);

}  // namespace ehrattack
