#pragma once

// Minimal RFC 4180 reader/writer: comma separated, double-quote escaping,
// quoted fields may span lines. Used for every CSV surface of the library.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vaforge/errors.hpp"

namespace vaforge::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns nullopt at end of input. Blank lines are skipped.
  std::optional<Row> next() {
    for (;;) {
      if (!in_.good() || in_.peek() == std::char_traits<char>::eof()) return std::nullopt;
      Row row;
      row.line = line_ + 1;
      std::string field;
      bool quoted = false;
      bool field_started = false;
      bool any = false;
      for (;;) {
        const int ch = in_.get();
        if (ch == std::char_traits<char>::eof()) {
          if (quoted) throw ParseError(row.line, "unterminated quoted field");
          break;
        }
        const char c = static_cast<char>(ch);
        if (quoted) {
          if (c == '"') {
            if (in_.peek() == '"') {
              in_.get();
              field.push_back('"');
            } else {
              quoted = false;
            }
          } else {
            if (c == '\n') ++line_;
            field.push_back(c);
          }
          continue;
        }
        if (c == '"' && !field_started) {
          quoted = true;
          field_started = true;
          any = true;
          continue;
        }
        if (c == ',') {
          row.fields.push_back(std::move(field));
          field.clear();
          field_started = false;
          any = true;
          continue;
        }
        if (c == '\r') continue;
        if (c == '\n') {
          ++line_;
          break;
        }
        field.push_back(c);
        field_started = true;
        any = true;
      }
      if (!any) continue;
      row.fields.push_back(std::move(field));
      return row;
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

inline std::vector<Row> read_all(std::istream& in) {
  Reader reader(in);
  std::vector<Row> rows;
  while (auto row = reader.next()) rows.push_back(std::move(*row));
  return rows;
}

inline std::vector<Row> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open file: " + path);
  return read_all(in);
}

inline std::string escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos ||
                            (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

// Shortest decimal that round-trips; keeps CSV output byte-stable.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace vaforge::csv
