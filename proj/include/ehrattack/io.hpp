#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ehrattack/ehr.hpp"

namespace ehrattack {

// Records: one JSON object per line,
//   {"patient_id": "P01", "label": 1, "visits": [["D0001", "D0042"], ["D0007"]]}
void write_records(std::ostream& out, const std::vector<LabeledRecord>& records,
                   const CodeVocabulary& vocab);
std::vector<LabeledRecord> read_records(std::istream& in, const CodeVocabulary& vocab);

// Vocabulary: CSV with header `code,category`, one code per row.
void write_vocabulary(std::ostream& out, const CodeVocabulary& vocab);
CodeVocabulary read_vocabulary(std::istream& in);

void save_records(const std::filesystem::path& path, const std::vector<LabeledRecord>& records,
                  const CodeVocabulary& vocab);
std::vector<LabeledRecord> load_records(const std::filesystem::path& path,
                                        const CodeVocabulary& vocab);
void save_vocabulary(const std::filesystem::path& path, const CodeVocabulary& vocab);
CodeVocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace ehrattack
