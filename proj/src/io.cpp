#include "ehrattack/io.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "ehrattack/errors.hpp"

namespace ehrattack {

using nlohmann::json;

void write_records(std::ostream& out, const std::vector<LabeledRecord>& records,
                   const CodeVocabulary& vocab) {
  for (const auto& labeled : records) {
    json visits = json::array();
    for (const auto& visit : labeled.record.visits) {
      json codes = json::array();
      for (CodeId code : visit) codes.push_back(vocab.name(code));
      visits.push_back(std::move(codes));
    }
    json row = {{"patient_id", labeled.record.patient_id},
                {"label", labeled.label},
                {"visits", std::move(visits)}};
    out << row.dump() << '\n';
  }
}

std::vector<LabeledRecord> read_records(std::istream& in, const CodeVocabulary& vocab) {
  std::vector<LabeledRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json row = json::parse(line);
      LabeledRecord labeled;
      labeled.record.patient_id = row.at("patient_id").get<std::string>();
      labeled.label = row.at("label").get<int>();
      if (labeled.label != 0 && labeled.label != 1) throw FormatError("label must be 0 or 1");
      for (const auto& visit_json : row.at("visits")) {
        Visit visit;
        for (const auto& code : visit_json) visit.push_back(vocab.find(code.get<std::string>()));
        labeled.record.visits.push_back(std::move(visit));
      }
      validate_record(labeled.record, vocab);
      records.push_back(std::move(labeled));
    } catch (const std::exception& e) {
      throw FormatError(fmt::format("records line {}: {}", line_no, e.what()));
    }
  }
  return records;
}

void write_vocabulary(std::ostream& out, const CodeVocabulary& vocab) {
  out << "code,category\n";
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    const CodeId code = code_at(k);
    out << vocab.name(code) << ',' << vocab.category_name(vocab.category_of(code)) << '\n';
  }
}

CodeVocabulary read_vocabulary(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("vocabulary: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "code,category") throw FormatError("vocabulary: expected header 'code,category'");
  std::vector<std::string> names;
  std::vector<std::string> categories;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw FormatError(fmt::format("vocabulary line {}: expected two fields", line_no));
    }
    names.push_back(line.substr(0, comma));
    categories.push_back(line.substr(comma + 1));
  }
  try {
    return CodeVocabulary(std::move(names), categories);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

}  // namespace

void save_records(const std::filesystem::path& path, const std::vector<LabeledRecord>& records,
                  const CodeVocabulary& vocab) {
  auto out = open_out(path);
  write_records(out, records, vocab);
}

std::vector<LabeledRecord> load_records(const std::filesystem::path& path,
                                        const CodeVocabulary& vocab) {
  auto in = open_in(path);
  return read_records(in, vocab);
}

void save_vocabulary(const std::filesystem::path& path, const CodeVocabulary& vocab) {
  auto out = open_out(path);
  write_vocabulary(out, vocab);
}

CodeVocabulary load_vocabulary(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_vocabulary(in);
}

}  // namespace ehrattack
