#pragma once
// Cleaning recipes for the five UCI corpora. Raw files are read in either the
// original UCI packaging (.data / .csv) or the Orange .tab packaging (three
// header lines, tab separated). Nothing is downloaded.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "sono/csv.hpp"
#include "sono/error.hpp"

namespace sono::recipes {

struct KnownFile {
  std::string file_name;
  std::uint64_t fnv1a64;
};

struct Recipe {
  std::string name;
  std::string summary;
  std::vector<std::string> sources;
  std::vector<std::string> uci_columns;  // header for headerless UCI .data files
  std::size_t expected_rows;
  std::size_t expected_columns;
  std::vector<KnownFile> known_files;
};

inline const std::vector<Recipe>& all() {
  static const std::vector<Recipe> recipes = {
      {"solar-flare",
       "both flare files concatenated; drop the C/M/X flare counts; 10 variables",
       {"https://archive.ics.uci.edu/dataset/89/solar+flare (flare.data1 + flare.data2)"},
       {"Zurich_class", "largest_spot_size", "spot_distribution", "activity", "evolution", "previous24",
        "hist_complex", "became_complex", "area", "area_of_largest", "C_class", "M_class", "X_class"},
       1389,
       10,
       {{"flare1.tab", 0x2c76ad374b02575aull}, {"flare2.tab", 0x29f3cfaf40a65c43ull}}},
      {"thyroid",
       "drop Age and the Recurred target; 15 variables",
       {"https://archive.ics.uci.edu/dataset/915/differentiated+thyroid+cancer+recurrence"},
       {},
       383,
       15,
       {}},
      {"primary-tumor",
       "drop the tumour-location class; drop rows with missing values; 17 variables",
       {"https://archive.ics.uci.edu/dataset/83/primary+tumor"},
       {"class", "age", "sex", "histologic_type", "degree_of_diffe", "bone", "bone_marrow", "lung", "pleura",
        "peritoneum", "liver", "brain", "skin", "neck", "supraclavicular", "axillar", "mediastinum", "abdominal"},
       132,
       17,
       {{"primary-tumor.tab", 0xcbda420b00cfd674ull}}},
      {"lymphography",
       "drop the class variable; 18 variables",
       {"https://archive.ics.uci.edu/dataset/63/lymphography"},
       {"class", "lymphatics", "bl_affere", "bl_lymph_c", "bl_lymph_s", "by_pass", "extravasates", "regen",
        "early_uptake", "lym_dimin", "lym_enlar", "changes_lym", "defect", "changes_node", "changes_stru",
        "spec_forms", "dislocation", "exclusion", "no_nodes"},
       148,
       18,
       {{"lymphography.tab", 0x864054733f04a9e5ull}}},
      {"diabetes",
       "drop Age and class; 15 variables",
       {"https://archive.ics.uci.edu/dataset/529/early+stage+diabetes+risk+prediction+dataset"},
       {},
       520,
       15,
       {}},
  };
  return recipes;
}

inline const Recipe& find(const std::string& name) {
  for (const auto& r : all())
    if (r.name == name) return r;
  std::string names;
  for (const auto& r : all()) names += (names.empty() ? "" : ", ") + r.name;
  throw DomainError("unknown dataset '" + name + "' (known: " + names + ")");
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RawTable {
  std::vector<std::string> header;
  csv::Table rows;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Reads one raw file. `.tab`: Orange layout. `.csv`: comma separated with a
/// header. Anything else: headerless UCI data, whitespace separated when the
/// first line has no comma.
inline RawTable read_raw(const std::string& path, const Recipe& recipe) {
  const std::string ext = std::filesystem::path(path).extension().string();
  const std::string bytes = read_bytes(path);
  RawTable out;
  if (ext == ".tab") {
    // The third header line may be empty, so split the header off by lines.
    std::size_t body = 0;
    for (int line = 0; line < 3; ++line) {
      body = bytes.find('\n', body);
      if (body == std::string::npos) throw IngestionError(path + ": Orange .tab file needs three header lines");
      ++body;
    }
    const auto head = csv::parse_string(std::string_view(bytes).substr(0, bytes.find('\n')), '\t');
    if (head.empty()) throw IngestionError(path + ": missing header line");
    out.header = head[0];
    auto table = csv::parse_string(std::string_view(bytes).substr(body), '\t');
    for (auto& row : table) {
      if (std::all_of(row.begin(), row.end(), [](const std::string& s) { return trim(s).empty(); })) continue;
      out.rows.push_back(std::move(row));
    }
  } else if (ext == ".csv") {
    auto table = csv::parse_string(bytes, ',');
    if (table.empty()) throw IngestionError(path + ": empty file");
    out.header = table[0];
    out.rows.assign(table.begin() + 1, table.end());
  } else {
    const bool commas = bytes.substr(0, bytes.find('\n')).find(',') != std::string::npos;
    std::istringstream in(bytes);
    std::string line;
    out.header = recipe.uci_columns;
    while (std::getline(in, line)) {
      std::vector<std::string> row;
      if (commas) {
        auto parsed = csv::parse_string(line, ',');
        if (!parsed.empty()) row = parsed[0];
      } else {
        std::istringstream fields(line);
        std::string f;
        while (fields >> f) row.push_back(f);
      }
      // flare.data1 and flare.data2 open with a one-line description.
      if (row.size() != recipe.uci_columns.size()) continue;
      out.rows.push_back(std::move(row));
    }
  }
  for (auto& h : out.header) h = trim(h);
  for (auto& row : out.rows)
    for (auto& f : row) f = trim(f);
  return out;
}

struct Prepared {
  csv::Table table;  // header row first
  std::vector<std::string> warnings;
};

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                                const std::string& path) {
  for (std::size_t j = 0; j < header.size(); ++j) {
    std::string h = header[j];
    std::transform(h.begin(), h.end(), h.begin(), [](unsigned char ch) { return std::tolower(ch); });
    std::string want = name;
    std::transform(want.begin(), want.end(), want.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (h == want) return j;
  }
  throw IngestionError(path + ": column '" + name + "' not found");
}

/// Applies the named recipe to the raw files (solar-flare takes both flare files).
inline Prepared prepare(const std::string& name, const std::vector<std::string>& paths) {
  const Recipe& recipe = find(name);
  if (paths.empty()) throw IngestionError("prepare: no raw file given");
  Prepared out;

  RawTable merged;
  for (const auto& path : paths) {
    const auto file = std::filesystem::path(path).filename().string();
    const auto sum = fnv1a64(read_bytes(path));
    bool known = false;
    for (const auto& k : recipe.known_files) {
      if (k.file_name != file) continue;
      known = true;
      if (k.fnv1a64 != sum)
        out.warnings.push_back("checksum mismatch for " + file + "; applying the recipe anyway");
    }
    if (!known) out.warnings.push_back("no reference checksum for " + file);
    auto raw = read_raw(path, recipe);
    if (merged.header.empty()) {
      merged.header = raw.header;
    } else if (raw.header != merged.header) {
      throw IngestionError(path + ": columns differ from the first file");
    }
    merged.rows.insert(merged.rows.end(), raw.rows.begin(), raw.rows.end());
  }
  for (const auto& row : merged.rows)
    if (row.size() != merged.header.size()) throw IngestionError("ragged raw table for " + name);

  std::vector<std::size_t> keep;
  bool drop_missing = false;
  if (name == "solar-flare") {
    for (std::size_t j = 0; j < 10 && j < merged.header.size(); ++j) keep.push_back(j);
  } else {
    std::vector<std::size_t> drop;
    if (name == "thyroid") {
      drop = {column_index(merged.header, "Age", paths[0]), column_index(merged.header, "Recurred", paths[0])};
    } else if (name == "diabetes") {
      drop = {column_index(merged.header, "Age", paths[0]), column_index(merged.header, "class", paths[0])};
    } else {
      drop = {0};  // class variable leads the primary-tumor and lymphography files
      drop_missing = name == "primary-tumor";
    }
    for (std::size_t j = 0; j < merged.header.size(); ++j)
      if (std::find(drop.begin(), drop.end(), j) == drop.end()) keep.push_back(j);
  }

  std::vector<std::string> header;
  for (auto j : keep) header.push_back(merged.header[j]);
  out.table.push_back(header);
  for (const auto& row : merged.rows) {
    std::vector<std::string> cleaned;
    bool missing = false;
    for (auto j : keep) {
      missing = missing || row[j] == "?" || row[j].empty();
      cleaned.push_back(row[j]);
    }
    if (drop_missing && missing) continue;
    out.table.push_back(std::move(cleaned));
  }
  const std::size_t rows = out.table.size() - 1;
  if (rows != recipe.expected_rows || header.size() != recipe.expected_columns)
    out.warnings.push_back("cleaned table is " + std::to_string(rows) + "x" + std::to_string(header.size()) +
                           ", expected " + std::to_string(recipe.expected_rows) + "x" +
                           std::to_string(recipe.expected_columns));
  return out;
}

}  // namespace sono::recipes
