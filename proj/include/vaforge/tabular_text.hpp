#pragma once

// Verbalizes structured question responses and builds the all-text
// documents used for data-level fusion.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vaforge/core_data.hpp"
#include "vaforge/csv.hpp"
#include "vaforge/errors.hpp"

namespace vaforge {

struct QuestionTemplate {
  std::string indicator;
  std::string yes_text;
  std::optional<std::string> no_text;
  std::set<Response> skip_on = {Response::Missing, Response::DontKnow};
};

class TemplateTable {
 public:
  static constexpr std::string_view kSeparator = "\n";

  TemplateTable() = default;

  // Templates render in the given order. Indicators listed together in an
  // exclusive group yield at most one sentence (the first member, in render
  // order, that produces one).
  explicit TemplateTable(std::vector<QuestionTemplate> templates,
                         std::vector<std::vector<std::string>> exclusive_groups = {{"i019a", "i019b"}}) {
    for (auto& t : templates) {
      if (t.yes_text.empty()) throw SchemaError("template '" + t.indicator + "' has empty yes_text");
      check_sentence(t.indicator, t.yes_text);
      if (t.no_text) check_sentence(t.indicator, *t.no_text);
      if (!templates_.emplace(t.indicator, t).second) {
        throw SchemaError("duplicate template for indicator '" + t.indicator + "'");
      }
      render_order_.push_back(t.indicator);
    }
    for (std::size_t g = 0; g < exclusive_groups.size(); ++g) {
      for (const auto& ind : exclusive_groups[g]) group_of_[ind] = g;
    }
  }

  const std::vector<std::string>& render_order() const noexcept { return render_order_; }
  bool contains(const std::string& indicator) const { return templates_.contains(indicator); }

  const QuestionTemplate& at(const std::string& indicator) const {
    const auto it = templates_.find(indicator);
    if (it == templates_.end()) throw UnknownIndicatorError("no template for indicator '" + indicator + "'");
    return it->second;
  }

  std::optional<std::size_t> group_of(const std::string& indicator) const {
    const auto it = group_of_.find(indicator);
    if (it == group_of_.end()) return std::nullopt;
    return it->second;
  }

 private:
  static void check_sentence(const std::string& ind, const std::string& s) {
    if (s.empty() || s.back() != '.') throw SchemaError("template '" + ind + "' sentence must end with a period");
  }

  std::map<std::string, QuestionTemplate> templates_;
  std::vector<std::string> render_order_;
  std::map<std::string, std::size_t> group_of_;
};

// Yes -> yes_text, No -> no_text when defined; skip_on responses render
// nothing.
inline std::optional<std::string> render_question(const std::string& indicator, Response response,
                                                  const TemplateTable& table) {
  const auto& t = table.at(indicator);
  if (t.skip_on.contains(response)) return std::nullopt;
  if (response == Response::Yes) return t.yes_text;
  if (response == Response::No) return t.no_text;
  return std::nullopt;
}

// Rendered sentences in table order; unanswered indicators count as Missing.
inline std::vector<std::string> render_sentences(const VARecord& rec, const TemplateTable& table) {
  std::vector<std::string> out;
  std::set<std::size_t> used_groups;
  for (const auto& ind : table.render_order()) {
    const auto group = table.group_of(ind);
    if (group && used_groups.contains(*group)) continue;
    auto s = render_question(ind, rec.response(ind), table);
    if (!s) continue;
    if (group) used_groups.insert(*group);
    out.push_back(std::move(*s));
  }
  return out;
}

// Narrative, separator line, then the rendered sentences joined by spaces.
inline std::string build_fused_document(const VARecord& rec, const TemplateTable& table) {
  std::string out = rec.narrative;
  out += TemplateTable::kSeparator;
  const auto sentences = render_sentences(rec, table);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out.push_back(' ');
    out += sentences[i];
  }
  return out;
}

inline std::optional<Response> parse_response_name(std::string_view s) {
  if (s == "Yes") return Response::Yes;
  if (s == "No") return Response::No;
  if (s == "DontKnow") return Response::DontKnow;
  if (s == "Missing") return Response::Missing;
  return std::nullopt;
}

// CSV: indicator,yes_text,no_text,skip_on. skip_on is a '|' separated list
// of response names; empty means the default {Missing, DontKnow}.
inline TemplateTable load_template_csv(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw SchemaError("template table is empty: " + path);
  const std::vector<std::string> expected = {"indicator", "yes_text", "no_text", "skip_on"};
  if (rows.front().fields != expected) throw SchemaError("template header must be indicator,yes_text,no_text,skip_on");
  std::vector<QuestionTemplate> templates;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 4) throw ParseError(rows[r].line, "expected 4 template columns");
    QuestionTemplate t;
    t.indicator = f[0];
    t.yes_text = f[1];
    if (!f[2].empty()) t.no_text = f[2];
    if (!f[3].empty()) {
      t.skip_on.clear();
      std::stringstream ss(f[3]);
      std::string item;
      while (std::getline(ss, item, '|')) {
        const auto resp = parse_response_name(item);
        if (!resp) throw ParseError(rows[r].line, "unknown response '" + item + "' in skip_on");
        t.skip_on.insert(*resp);
      }
    }
    templates.push_back(std::move(t));
  }
  return TemplateTable(std::move(templates));
}

// Starter templates for the worked example indicators. The age-band
// indicator i022c is kept for lookups but never verbalized.
inline TemplateTable starter_template_table() {
  const std::set<Response> never = {Response::Yes, Response::No, Response::DontKnow, Response::Missing};
  return TemplateTable({
      {"i019a", "The deceased was a male.", std::nullopt, {Response::Missing, Response::DontKnow}},
      {"i019b", "The deceased was a female.", std::nullopt, {Response::Missing, Response::DontKnow}},
      {"i022c", "The deceased was aged 15 to 49 years at death.", std::nullopt, never},
      {"i147o", "The deceased had fever.", "The deceased did not have fever.",
       {Response::Missing, Response::DontKnow}},
      {"i148a", "The deceased had fever less than one week before death.", std::nullopt,
       {Response::Missing, Response::DontKnow}},
      {"i174o", "The deceased had chest pain.", "The deceased did not have chest pain.",
       {Response::Missing, Response::DontKnow}},
  });
}

}  // namespace vaforge
