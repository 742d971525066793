#pragma once

// Verbal-autopsy record model, cause taxonomy, label encoding and the
// stratified split / fold / subsample machinery.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vaforge/csv.hpp"
#include "vaforge/errors.hpp"
#include "vaforge/rng.hpp"

namespace vaforge {

enum class Response { Yes, No, DontKnow, Missing };
enum class AgeGroup { Adult, Other };
enum class LabelLevel { L1, L2, L3 };

inline std::string_view response_name(Response r) {
  switch (r) {
    case Response::Yes: return "Yes";
    case Response::No: return "No";
    case Response::DontKnow: return "DontKnow";
    case Response::Missing: return "Missing";
  }
  return "Missing";
}

// CSV short code: Y / N / DK / empty.
inline std::string_view response_code(Response r) {
  switch (r) {
    case Response::Yes: return "Y";
    case Response::No: return "N";
    case Response::DontKnow: return "DK";
    case Response::Missing: return "";
  }
  return "";
}

inline std::optional<Response> parse_response(std::string_view s) {
  std::string v;
  for (char c : s) {
    if (c != ' ' && c != '\t') v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (v == "y" || v == "yes") return Response::Yes;
  if (v == "n" || v == "no") return Response::No;
  if (v == "dk" || v == "dontknow" || v == "don'tknow") return Response::DontKnow;
  if (v.empty() || v == "missing" || v == ".") return Response::Missing;
  return std::nullopt;
}

inline std::optional<LabelLevel> parse_label_level(std::string_view s) {
  if (s == "L1" || s == "1" || s == "level1") return LabelLevel::L1;
  if (s == "L2" || s == "2" || s == "level2") return LabelLevel::L2;
  if (s == "L3" || s == "3" || s == "level3") return LabelLevel::L3;
  return std::nullopt;
}

inline std::string_view label_level_name(LabelLevel l) {
  switch (l) {
    case LabelLevel::L1: return "L1";
    case LabelLevel::L2: return "L2";
    case LabelLevel::L3: return "L3";
  }
  return "L2";
}

inline bool is_question_column(const std::string& name) {
  static const std::regex pattern(R"(^i\d+[a-z]?$)");
  return std::regex_match(name, pattern);
}

struct VARecord {
  std::string id;
  AgeGroup age_group = AgeGroup::Adult;
  std::string narrative;
  std::map<std::string, Response> questions;
  std::optional<std::string> cause_icd10;
  std::optional<std::string> cause_level1;
  std::optional<std::string> cause_level2;
  std::optional<std::string> cause_level3;
  std::optional<int> sufficiency_score;

  const std::optional<std::string>& cause(LabelLevel level) const {
    switch (level) {
      case LabelLevel::L1: return cause_level1;
      case LabelLevel::L2: return cause_level2;
      case LabelLevel::L3: return cause_level3;
    }
    return cause_level2;
  }
  std::optional<std::string>& cause(LabelLevel level) {
    return const_cast<std::optional<std::string>&>(std::as_const(*this).cause(level));
  }

  Response response(const std::string& indicator) const {
    const auto it = questions.find(indicator);
    return it == questions.end() ? Response::Missing : it->second;
  }
};

struct IcdMapping {
  std::string code;  // single code ("A16") or inclusive range ("A15-A19")
  std::string level1, level2, level3;

  // Prefix match for single codes, lexicographic 3-character block
  // comparison for ranges.
  bool matches(std::string_view icd) const {
    const auto dash = code.find('-');
    if (dash == std::string::npos) return icd.substr(0, code.size()) == code;
    const std::string lo = code.substr(0, dash);
    const std::string hi = code.substr(dash + 1);
    const std::string_view head = icd.substr(0, std::max(lo.size(), hi.size()));
    return head >= std::string_view(lo) && head.substr(0, hi.size()) <= std::string_view(hi);
  }
};

class CauseTaxonomy {
 public:
  CauseTaxonomy() = default;
  CauseTaxonomy(std::vector<std::string> level1, std::vector<std::string> level2,
                std::vector<std::string> level3, std::vector<IcdMapping> icd10_map = {})
      : lists_{std::move(level1), std::move(level2), std::move(level3)}, icd10_map_(std::move(icd10_map)) {
    for (int l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < lists_[l].size(); ++i) {
        if (!index_[l].emplace(lists_[l][i], static_cast<int>(i)).second) {
          throw SchemaError("duplicate class '" + lists_[l][i] + "' in taxonomy level " + std::to_string(l + 1));
        }
      }
    }
    for (const auto& m : icd10_map_) {
      const std::string* targets[3] = {&m.level1, &m.level2, &m.level3};
      for (int l = 0; l < 3; ++l) {
        if (!targets[l]->empty() && !index_[l].contains(*targets[l])) {
          throw SchemaError("ICD-10 mapping " + m.code + " targets unknown level-" + std::to_string(l + 1) +
                            " class '" + *targets[l] + "'");
        }
      }
    }
  }

  // Level-3 grouping shipped by default; levels 1 and 2 are user supplied.
  static CauseTaxonomy default_level3() {
    return CauseTaxonomy({}, {}, default_level3_names());
  }

  static std::vector<std::string> default_level3_names() {
    return {"HIV and pulmonary TB", "non-HIV/TB infections", "non-communicable causes",
            "injuries", "maternal conditions", "indeterminate"};
  }

  const std::vector<std::string>& classes(LabelLevel level) const { return lists_[slot(level)]; }
  const std::vector<IcdMapping>& icd10_map() const { return icd10_map_; }

  std::optional<int> encode(LabelLevel level, const std::string& label) const {
    const auto& idx = index_[slot(level)];
    const auto it = idx.find(label);
    if (it == idx.end()) return std::nullopt;
    return it->second;
  }

  const std::string& decode(LabelLevel level, int index) const {
    const auto& list = lists_[slot(level)];
    if (index < 0 || static_cast<std::size_t>(index) >= list.size()) {
      throw LabelError("class index " + std::to_string(index) + " out of range");
    }
    return list[static_cast<std::size_t>(index)];
  }

  // First mapping entry whose code matches.
  const IcdMapping* map_icd10(std::string_view icd) const {
    for (const auto& m : icd10_map_) {
      if (!m.code.empty() && m.matches(icd)) return &m;
    }
    return nullptr;
  }

 private:
  static int slot(LabelLevel level) { return static_cast<int>(level); }

  std::vector<std::string> lists_[3];
  std::unordered_map<std::string, int> index_[3];
  std::vector<IcdMapping> icd10_map_;
};

// Taxonomy CSV with header icd10,level1,level2,level3. Class order is order
// of first appearance per column; rows with an empty icd10 only declare
// classes.
inline CauseTaxonomy load_taxonomy_csv(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw SchemaError("taxonomy file is empty: " + path);
  const auto& header = rows.front().fields;
  const std::vector<std::string> expected = {"icd10", "level1", "level2", "level3"};
  if (header != expected) throw SchemaError("taxonomy header must be icd10,level1,level2,level3");
  std::vector<std::string> lists[3];
  std::set<std::string> seen[3];
  std::vector<IcdMapping> mapping;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 4) throw ParseError(rows[r].line, "expected 4 taxonomy columns");
    for (int l = 0; l < 3; ++l) {
      const auto& name = f[static_cast<std::size_t>(l) + 1];
      if (!name.empty() && seen[l].insert(name).second) lists[l].push_back(name);
    }
    if (!f[0].empty()) mapping.push_back({f[0], f[1], f[2], f[3]});
  }
  return CauseTaxonomy(std::move(lists[0]), std::move(lists[1]), std::move(lists[2]), std::move(mapping));
}

enum class Format { Jsonl, Csv };

inline std::optional<Format> parse_format(std::string_view s) {
  if (s == "jsonl") return Format::Jsonl;
  if (s == "csv") return Format::Csv;
  return std::nullopt;
}

inline Format format_from_path(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? Format::Csv : Format::Jsonl;
}

struct Diagnostic {
  enum class Kind { Parse, Schema, Label, Duplicate, Range };
  Kind kind;
  std::size_t line;
  std::string record_id;
  std::string message;
};

struct LoadResult {
  std::vector<VARecord> records;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline void check_record(const VARecord& rec, std::size_t line, const CauseTaxonomy& tax,
                         std::unordered_set<std::string>& ids, std::vector<Diagnostic>& diags) {
  using K = Diagnostic::Kind;
  if (rec.id.empty()) diags.push_back({K::Schema, line, rec.id, "empty id"});
  if (!rec.id.empty() && !ids.insert(rec.id).second) {
    diags.push_back({K::Duplicate, line, rec.id, "duplicate id '" + rec.id + "'"});
  }
  for (LabelLevel level : {LabelLevel::L1, LabelLevel::L2, LabelLevel::L3}) {
    const auto& label = rec.cause(level);
    if (label && !tax.encode(level, *label)) {
      diags.push_back({K::Label, line, rec.id,
                       "record '" + rec.id + "': cause_level" + std::string(label_level_name(level)).substr(1) +
                           " '" + *label + "' is not in the taxonomy"});
    }
  }
  if (rec.sufficiency_score && (*rec.sufficiency_score < 1 || *rec.sufficiency_score > 5)) {
    diags.push_back({K::Range, line, rec.id, "sufficiency_score must be in 1..5"});
  }
}

// Fill absent level labels from the ICD-10 mapping.
inline void apply_icd10(VARecord& rec, const CauseTaxonomy& tax) {
  if (!rec.cause_icd10 || rec.cause_icd10->empty()) return;
  const IcdMapping* m = tax.map_icd10(*rec.cause_icd10);
  if (!m) return;
  if (!rec.cause_level1 && !m->level1.empty()) rec.cause_level1 = m->level1;
  if (!rec.cause_level2 && !m->level2.empty()) rec.cause_level2 = m->level2;
  if (!rec.cause_level3 && !m->level3.empty()) rec.cause_level3 = m->level3;
}

inline std::optional<std::string> optional_field(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  const auto s = it->get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

inline AgeGroup parse_age_group(std::string_view s) {
  if (s.empty() || s == "adult") return AgeGroup::Adult;
  if (s == "other") return AgeGroup::Other;
  throw SchemaError("age_group must be 'adult' or 'other'");
}

inline std::optional<int> parse_score(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw SchemaError("sufficiency_score '" + s + "' is not an integer");
  }
  if (pos != s.size()) throw SchemaError("sufficiency_score '" + s + "' is not an integer");
  return v;
}

inline VARecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  for (const char* key : {"id", "narrative", "questions"}) {
    if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  }
  VARecord rec;
  rec.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  if (!j.at("narrative").is_null()) rec.narrative = j.at("narrative").get<std::string>();
  if (const auto age = optional_field(j, "age_group")) rec.age_group = parse_age_group(*age);
  const auto& qs = j.at("questions");
  if (!qs.is_object()) throw SchemaError("'questions' must be an object");
  for (const auto& [k, v] : qs.items()) {
    const std::string raw = v.is_null() ? std::string() : v.get<std::string>();
    const auto r = parse_response(raw);
    if (!r) throw SchemaError("question '" + k + "' has unknown response '" + raw + "'");
    rec.questions[k] = *r;
  }
  rec.cause_icd10 = optional_field(j, "cause_icd10");
  rec.cause_level1 = optional_field(j, "cause_level1");
  rec.cause_level2 = optional_field(j, "cause_level2");
  rec.cause_level3 = optional_field(j, "cause_level3");
  if (const auto it = j.find("sufficiency_score"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw SchemaError("sufficiency_score must be an integer");
    rec.sufficiency_score = it->get<int>();
  }
  return rec;
}

}  // namespace detail

// Parses every record, collecting per-record diagnostics instead of
// stopping at the first problem.
inline LoadResult read_records(const std::string& path, Format format, const CauseTaxonomy& tax) {
  LoadResult out;
  std::unordered_set<std::string> ids;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open dataset: " + path);
  using K = Diagnostic::Kind;
  if (format == Format::Jsonl) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        out.diagnostics.push_back({K::Parse, lineno, "", e.what()});
        continue;
      }
      try {
        VARecord rec = detail::record_from_json(j);
        detail::apply_icd10(rec, tax);
        detail::check_record(rec, lineno, tax, ids, out.diagnostics);
        out.records.push_back(std::move(rec));
      } catch (const SchemaError& e) {
        out.diagnostics.push_back({K::Schema, lineno, "", e.what()});
      } catch (const nlohmann::json::exception& e) {
        out.diagnostics.push_back({K::Schema, lineno, "", e.what()});
      }
    }
    return out;
  }

  std::vector<csv::Row> rows;
  try {
    rows = csv::read_all(in);
  } catch (const ParseError& e) {
    out.diagnostics.push_back({K::Parse, e.line(), "", e.what()});
    return out;
  }
  if (rows.empty()) {
    out.diagnostics.push_back({K::Schema, 1, "", "empty CSV file"});
    return out;
  }
  const auto& header = rows.front().fields;
  std::map<std::string, std::size_t> col;
  std::vector<std::pair<std::string, std::size_t>> question_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    col[header[c]] = c;
    if (is_question_column(header[c])) question_cols.emplace_back(header[c], c);
  }
  for (const char* key : {"id", "narrative"}) {
    if (!col.contains(key)) {
      out.diagnostics.push_back({K::Schema, 1, "", std::string("missing column '") + key + "'"});
      return out;
    }
  }
  auto get = [&](const csv::Row& row, const char* key) -> std::string {
    const auto it = col.find(key);
    if (it == col.end() || it->second >= row.fields.size()) return {};
    return row.fields[it->second];
  };
  auto opt = [&](const csv::Row& row, const char* key) -> std::optional<std::string> {
    auto v = get(row, key);
    if (v.empty()) return std::nullopt;
    return v;
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      out.diagnostics.push_back({K::Parse, row.line, "",
                                 "expected " + std::to_string(header.size()) + " columns, found " +
                                     std::to_string(row.fields.size())});
      continue;
    }
    try {
      VARecord rec;
      rec.id = get(row, "id");
      rec.narrative = get(row, "narrative");
      rec.age_group = detail::parse_age_group(get(row, "age_group"));
      for (const auto& [name, c] : question_cols) {
        const auto resp = parse_response(row.fields[c]);
        if (!resp) throw SchemaError("question '" + name + "' has unknown response '" + row.fields[c] + "'");
        rec.questions[name] = *resp;
      }
      rec.cause_icd10 = opt(row, "cause_icd10");
      rec.cause_level1 = opt(row, "cause_level1");
      rec.cause_level2 = opt(row, "cause_level2");
      rec.cause_level3 = opt(row, "cause_level3");
      rec.sufficiency_score = detail::parse_score(get(row, "sufficiency_score"));
      detail::apply_icd10(rec, tax);
      detail::check_record(rec, row.line, tax, ids, out.diagnostics);
      out.records.push_back(std::move(rec));
    } catch (const SchemaError& e) {
      out.diagnostics.push_back({K::Schema, row.line, get(row, "id"), e.what()});
    }
  }
  return out;
}

inline void write_records_jsonl(std::ostream& out, const std::vector<VARecord>& records) {
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["age_group"] = r.age_group == AgeGroup::Adult ? "adult" : "other";
    j["narrative"] = r.narrative;
    nlohmann::json qs = nlohmann::json::object();
    for (const auto& [k, v] : r.questions) qs[k] = std::string(response_name(v));
    j["questions"] = qs;
    if (r.cause_icd10) j["cause_icd10"] = *r.cause_icd10;
    if (r.cause_level1) j["cause_level1"] = *r.cause_level1;
    if (r.cause_level2) j["cause_level2"] = *r.cause_level2;
    if (r.cause_level3) j["cause_level3"] = *r.cause_level3;
    if (r.sufficiency_score) j["sufficiency_score"] = *r.sufficiency_score;
    out << j.dump() << '\n';
  }
}

// Question columns are the sorted union of indicators across records;
// responses use the short codes Y/N/DK/empty.
inline void write_records_csv(std::ostream& out, const std::vector<VARecord>& records) {
  std::set<std::string> indicators;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.questions) indicators.insert(k);
  }
  std::vector<std::string> header = {"id",           "age_group",    "narrative",    "cause_icd10",
                                     "cause_level1", "cause_level2", "cause_level3", "sufficiency_score"};
  header.insert(header.end(), indicators.begin(), indicators.end());
  csv::write_row(out, header);
  for (const auto& r : records) {
    std::vector<std::string> f = {r.id,
                                  r.age_group == AgeGroup::Adult ? "adult" : "other",
                                  r.narrative,
                                  r.cause_icd10.value_or(""),
                                  r.cause_level1.value_or(""),
                                  r.cause_level2.value_or(""),
                                  r.cause_level3.value_or(""),
                                  r.sufficiency_score ? std::to_string(*r.sufficiency_score) : ""};
    for (const auto& ind : indicators) f.emplace_back(response_code(r.response(ind)));
    csv::write_row(out, f);
  }
}

inline void write_records(const std::string& path, Format format, const std::vector<VARecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write dataset: " + path);
  if (format == Format::Csv) {
    write_records_csv(out, records);
  } else {
    write_records_jsonl(out, records);
  }
}

// Immutable labeled view over a record list. Class index = position in the
// taxonomy's list for the chosen level.
class Dataset {
 public:
  Dataset(std::vector<VARecord> records, std::shared_ptr<const CauseTaxonomy> taxonomy, LabelLevel level)
      : records_(std::move(records)), taxonomy_(std::move(taxonomy)), level_(level) {
    if (!taxonomy_) throw SchemaError("dataset requires a taxonomy");
    std::unordered_set<std::string> ids;
    labels_.reserve(records_.size());
    for (const auto& r : records_) {
      if (r.id.empty()) throw SchemaError("record with empty id");
      if (!ids.insert(r.id).second) throw DuplicateIdError("duplicate record id '" + r.id + "'");
      for (LabelLevel l : {LabelLevel::L1, LabelLevel::L2, LabelLevel::L3}) {
        const auto& lab = r.cause(l);
        if (lab && !taxonomy_->encode(l, *lab)) {
          throw LabelError("record '" + r.id + "': label '" + *lab + "' is not in the taxonomy");
        }
      }
      if (r.sufficiency_score && (*r.sufficiency_score < 1 || *r.sufficiency_score > 5)) {
        throw SchemaError("record '" + r.id + "': sufficiency_score out of range");
      }
      const auto& lab = r.cause(level_);
      labels_.push_back(lab ? taxonomy_->encode(level_, *lab) : std::nullopt);
    }
  }

  Dataset(std::vector<VARecord> records, CauseTaxonomy taxonomy, LabelLevel level)
      : Dataset(std::move(records), std::make_shared<const CauseTaxonomy>(std::move(taxonomy)), level) {}

  const std::vector<VARecord>& records() const noexcept { return records_; }
  const VARecord& record(std::size_t i) const { return records_.at(i); }
  std::size_t size() const noexcept { return records_.size(); }
  const CauseTaxonomy& taxonomy() const noexcept { return *taxonomy_; }
  std::shared_ptr<const CauseTaxonomy> taxonomy_ptr() const noexcept { return taxonomy_; }
  LabelLevel label_level() const noexcept { return level_; }
  const std::vector<std::string>& classes() const { return taxonomy_->classes(level_); }
  std::size_t class_count() const { return classes().size(); }
  const std::optional<int>& label(std::size_t i) const { return labels_.at(i); }

  std::vector<std::size_t> labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i]) out.push_back(i);
    }
    return out;
  }

  std::vector<std::string> ids(const std::vector<std::size_t>& indices) const {
    std::vector<std::string> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(records_.at(i).id);
    return out;
  }

  std::vector<int> labels_at(const std::vector<std::size_t>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) {
      const auto& l = labels_.at(i);
      if (!l) throw LabelError("record '" + records_[i].id + "' has no label");
      out.push_back(*l);
    }
    return out;
  }

  // New dataset over a subset of records (same taxonomy and level).
  Dataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<VARecord> recs;
    recs.reserve(indices.size());
    for (auto i : indices) recs.push_back(records_.at(i));
    return Dataset(std::move(recs), taxonomy_, level_);
  }

 private:
  std::vector<VARecord> records_;
  std::shared_ptr<const CauseTaxonomy> taxonomy_;
  LabelLevel level_;
  std::vector<std::optional<int>> labels_;
};

// Loads and validates; any diagnostic aborts with the error type of the
// first problem and a message listing all of them.
inline Dataset load_dataset(const std::string& path, Format format, CauseTaxonomy taxonomy, LabelLevel level) {
  auto res = read_records(path, format, taxonomy);
  if (!res.diagnostics.empty()) {
    std::ostringstream msg;
    for (const auto& d : res.diagnostics) msg << "line " << d.line << ": " << d.message << "\n";
    const auto& first = res.diagnostics.front();
    switch (first.kind) {
      case Diagnostic::Kind::Parse: throw ParseError(first.line, msg.str());
      case Diagnostic::Kind::Label: throw LabelError(msg.str());
      case Diagnostic::Kind::Duplicate: throw DuplicateIdError(msg.str());
      default: throw SchemaError(msg.str());
    }
  }
  return Dataset(std::move(res.records), std::move(taxonomy), level);
}

struct SplitPlan {
  std::vector<std::size_t> train_indices;  // ascending record positions
  std::vector<std::size_t> test_indices;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

struct Fold {
  std::vector<std::size_t> train;  // positions into the labeled item list
  std::vector<std::size_t> val;
};

namespace detail {

// Groups item positions by class; each class must be non-empty.
inline std::vector<std::vector<std::size_t>> by_class(std::span<const int> labels, std::size_t n_classes) {
  std::vector<std::vector<std::size_t>> groups(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) throw LabelError("label index out of range");
    groups[static_cast<std::size_t>(c)].push_back(i);
  }
  return groups;
}

// Per-class count to draw: round-half-up of size*fraction, clamped to [0, size].
inline std::size_t stratum_take(std::size_t size, double fraction) {
  const auto want = static_cast<std::size_t>(std::floor(static_cast<double>(size) * fraction + 0.5));
  return std::min(want, size);
}

}  // namespace detail

// Stratified holdout over an arbitrary labeled item list. Within each class
// the items are shuffled by the seeded engine and the first round(n*f)
// become test items (at least one item per class stays in training when the
// class has two or more).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_indices(
    std::span<const int> labels, std::size_t n_classes, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw RangeError("test_fraction must be in (0,1)");
  auto groups = detail::by_class(labels, n_classes);
  Engine gen = make_engine(seed);
  std::vector<std::size_t> train, test;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& g = groups[c];
    if (g.empty()) throw EmptyClassError("class " + std::to_string(c) + " has no records");
    shuffle(std::span<std::size_t>(g), gen);
    std::size_t n_test = detail::stratum_take(g.size(), test_fraction);
    if (g.size() >= 2 && n_test == g.size()) n_test = g.size() - 1;
    test.insert(test.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), g.begin() + static_cast<std::ptrdiff_t>(n_test), g.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

// Stratified k folds. Each class is shuffled and cut into k contiguous
// slices whose sizes differ by at most one; the slice that receives the
// extra item rotates across classes so that total fold sizes stay balanced.
inline std::vector<Fold> stratified_kfold_indices(std::span<const int> labels, std::size_t n_classes, int k,
                                                  std::uint64_t seed) {
  if (k < 2) throw FoldError("k must be at least 2");
  const auto K = static_cast<std::size_t>(k);
  auto groups = detail::by_class(labels, n_classes);
  Engine gen = make_engine(seed);
  std::vector<int> fold_of(labels.size(), -1);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    if (g.size() < K) {
      throw FoldError("class " + std::to_string(c) + " has " + std::to_string(g.size()) + " records, fewer than k=" +
                      std::to_string(k));
    }
    shuffle(std::span<std::size_t>(g), gen);
    const std::size_t base = g.size() / K;
    const std::size_t extra = g.size() % K;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < K; ++s) {
      const std::size_t fold = (s + offset) % K;
      const std::size_t len = base + (s < extra ? 1 : 0);
      for (std::size_t j = 0; j < len; ++j) fold_of[g[pos++]] = static_cast<int>(fold);
    }
    offset = (offset + extra) % K;
  }
  std::vector<Fold> folds(K);
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (std::size_t f = 0; f < K; ++f) {
      (static_cast<std::size_t>(fold_of[i]) == f ? folds[f].val : folds[f].train).push_back(i);
    }
  }
  return folds;
}

// Stratified draw of round(n*f) items per class, returned ascending.
inline std::vector<std::size_t> stratified_sample_indices(std::span<const int> labels, std::size_t n_classes,
                                                          double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw RangeError("fraction must be in (0,1]");
  auto groups = detail::by_class(labels, n_classes);
  std::vector<std::size_t> keep;
  if (fraction == 1.0) {
    keep.resize(labels.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    return keep;
  }
  Engine gen = make_engine(seed);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& g = groups[c];
    if (g.empty()) throw EmptyClassError("class " + std::to_string(c) + " has no records");
    shuffle(std::span<std::size_t>(g), gen);
    const std::size_t take = detail::stratum_take(g.size(), fraction);
    keep.insert(keep.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

// Unlabeled records never enter a split.
inline SplitPlan stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  const auto labeled = ds.labeled_indices();
  const auto labels = ds.labels_at(labeled);
  auto [tr, te] = stratified_split_indices(labels, ds.class_count(), test_fraction, seed);
  SplitPlan plan;
  plan.seed = seed;
  plan.test_fraction = test_fraction;
  for (auto i : tr) plan.train_indices.push_back(labeled[i]);
  for (auto i : te) plan.test_indices.push_back(labeled[i]);
  plan.train_ids = ds.ids(plan.train_indices);
  plan.test_ids = ds.ids(plan.test_indices);
  return plan;
}

// Folds over the labeled records; Fold positions are record positions in ds.
inline std::vector<Fold> stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
  const auto labeled = ds.labeled_indices();
  const auto labels = ds.labels_at(labeled);
  auto folds = stratified_kfold_indices(labels, ds.class_count(), k, seed);
  for (auto& f : folds) {
    for (auto& i : f.train) i = labeled[i];
    for (auto& i : f.val) i = labeled[i];
  }
  return folds;
}

// Stratified subsample of the labeled records. Subsamples at different
// fractions with the same seed are not guaranteed to be nested.
inline Dataset subsample_training(const Dataset& ds, double fraction, std::uint64_t seed) {
  const auto labeled = ds.labeled_indices();
  if (fraction == 1.0) return ds.subset(labeled);
  const auto labels = ds.labels_at(labeled);
  const auto keep = stratified_sample_indices(labels, ds.class_count(), fraction, seed);
  std::vector<std::size_t> picked;
  picked.reserve(keep.size());
  for (auto i : keep) picked.push_back(labeled[i]);
  return ds.subset(picked);
}

}  // namespace vaforge
