#pragma once
// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, CRLF or LF.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sono/error.hpp"

namespace sono::csv {

using Table = std::vector<std::vector<std::string>>;

inline Table parse(std::istream& in, char delimiter = ',') {
  Table table;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  bool any_in_row = false;
  char ch;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (any_in_row || field_started || !row.empty()) {
      end_field();
      table.push_back(std::move(row));
    }
    row.clear();
    any_in_row = false;
  };

  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
      any_in_row = true;
    } else if (ch == delimiter) {
      end_field();
      any_in_row = true;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      end_row();
    } else if (ch == '\n') {
      end_row();
    } else {
      field += ch;
      field_started = true;
      any_in_row = true;
    }
  }
  if (quoted) throw IngestionError("csv: unterminated quoted field");
  end_row();
  return table;
}

inline Table parse_string(std::string_view text, char delimiter = ',') {
  std::istringstream in{std::string(text)};
  return parse(in, delimiter);
}

inline Table read_file(const std::string& path, char delimiter = ',') {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  return parse(in, delimiter);
}

inline std::string escape(std::string_view value, char delimiter = ',') {
  const bool needs_quotes = value.find_first_of(std::string{delimiter, '"', '\r', '\n'}) != std::string_view::npos;
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& row, char delimiter = ',') {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j) out << delimiter;
    out << escape(row[j], delimiter);
  }
  out << "\r\n";
}

}  // namespace sono::csv
