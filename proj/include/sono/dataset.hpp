#pragma once
// Nominal dataset, itemsets, and the product-Multinomial probability model.

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sono/csv.hpp"
#include "sono/error.hpp"

namespace sono {

using LevelCode = std::uint32_t;  // 1-based
using VarIndex = std::uint32_t;   // 0-based column index
using VarMask = std::uint64_t;    // bit j set <=> variable j is in the subset

inline constexpr std::size_t kMaxVariables = 64;

inline std::vector<VarIndex> mask_to_vars(VarMask mask) {
  std::vector<VarIndex> vars;
  vars.reserve(static_cast<std::size_t>(std::popcount(mask)));
  while (mask) {
    vars.push_back(static_cast<VarIndex>(std::countr_zero(mask)));
    mask &= mask - 1;
  }
  return vars;
}

inline VarMask vars_to_mask(std::span<const VarIndex> vars) {
  VarMask mask = 0;
  for (VarIndex v : vars) mask |= VarMask{1} << v;
  return mask;
}

class Dataset {
 public:
  Dataset() = default;

  /// Builds a dataset from 1-based codes; validates every invariant.
  Dataset(std::vector<std::vector<LevelCode>> rows, std::vector<std::string> variable_names,
          std::vector<std::vector<std::string>> level_labels, std::size_t dropped_rows = 0)
      : names_(std::move(variable_names)), labels_(std::move(level_labels)), dropped_rows_(dropped_rows) {
    n_ = rows.size();
    p_ = names_.size();
    if (n_ == 0) throw EmptyDataset("dataset has no rows");
    if (p_ == 0) throw DomainError("dataset has no variables");
    if (p_ > kMaxVariables) throw DomainError("at most 64 variables are supported");
    if (labels_.size() != p_) throw DomainError("one label list per variable is required");
    std::unordered_set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != p_) throw DomainError("variable names must be unique");
    for (const auto& l : labels_)
      if (l.empty()) throw DomainError("every variable needs at least one level");
    codes_.reserve(n_ * p_);
    for (const auto& row : rows) {
      if (row.size() != p_) throw DomainError("row width differs from the number of variables");
      for (std::size_t j = 0; j < p_; ++j) {
        if (row[j] < 1 || row[j] > labels_[j].size())
          throw DomainError("level code out of range for variable " + names_[j]);
        codes_.push_back(row[j]);
      }
    }
  }

  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  LevelCode code(std::size_t row, std::size_t var) const { return codes_[row * p_ + var]; }
  std::span<const LevelCode> row(std::size_t i) const { return {codes_.data() + i * p_, p_}; }
  std::size_t level_count(std::size_t var) const { return labels_[var].size(); }
  std::vector<std::size_t> level_counts() const {
    std::vector<std::size_t> out;
    for (const auto& l : labels_) out.push_back(l.size());
    return out;
  }
  const std::vector<std::string>& variable_names() const { return names_; }
  const std::vector<std::string>& level_labels(std::size_t var) const { return labels_[var]; }
  const std::string& level_label(std::size_t var, LevelCode code) const { return labels_[var][code - 1]; }
  std::size_t dropped_rows() const { return dropped_rows_; }

  /// Reverse of the encoding: the raw strings of each row.
  csv::Table decode() const {
    csv::Table out(n_, std::vector<std::string>(p_));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < p_; ++j) out[i][j] = level_label(j, code(i, j));
    return out;
  }

  /// Copy with every row repeated `times` times (row order: all rows, then again).
  Dataset replicated(std::size_t times) const {
    std::vector<std::vector<LevelCode>> rows;
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < n_; ++i) rows.emplace_back(row(i).begin(), row(i).end());
    return Dataset(std::move(rows), names_, labels_);
  }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<LevelCode> codes_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> labels_;
  std::size_t dropped_rows_ = 0;
};

enum class MissingPolicy { DropRow, TreatAsLevel };
enum class LevelOrder { FirstAppearance, Lexicographic };

struct IngestionOptions {
  char delimiter = ',';
  bool header = true;
  std::vector<std::string> missing_markers{"?", ""};
  MissingPolicy missing = MissingPolicy::DropRow;
  LevelOrder level_order = LevelOrder::FirstAppearance;
  std::vector<std::string> drop_columns;
};

/// Encodes a table of strings. Levels get codes 1..l_j in first-appearance
/// order (or lexicographic order when requested).
inline Dataset load_dataset(const csv::Table& table, const IngestionOptions& options = {}) {
  if (table.empty()) throw EmptyDataset("input table is empty");
  const std::size_t width = table.front().size();
  for (std::size_t r = 0; r < table.size(); ++r)
    if (table[r].size() != width)
      throw IngestionError("ragged table: row " + std::to_string(r + 1) + " has " +
                           std::to_string(table[r].size()) + " fields, expected " + std::to_string(width));

  std::vector<std::string> names;
  std::size_t first_data = 0;
  if (options.header) {
    names = table.front();
    first_data = 1;
  } else {
    for (std::size_t j = 0; j < width; ++j) names.push_back("V" + std::to_string(j + 1));
  }

  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < width; ++j) {
    if (std::find(options.drop_columns.begin(), options.drop_columns.end(), names[j]) == options.drop_columns.end())
      keep.push_back(j);
  }
  for (const auto& dropped : options.drop_columns)
    if (std::find(names.begin(), names.end(), dropped) == names.end())
      throw IngestionError("column to drop not found: " + dropped);
  if (keep.empty()) throw IngestionError("no columns left after dropping");

  auto is_missing = [&](const std::string& cell) {
    return std::find(options.missing_markers.begin(), options.missing_markers.end(), cell) !=
           options.missing_markers.end();
  };

  std::vector<const std::vector<std::string>*> rows;
  std::size_t dropped = 0;
  for (std::size_t r = first_data; r < table.size(); ++r) {
    const auto& raw = table[r];
    const bool missing = std::any_of(keep.begin(), keep.end(), [&](std::size_t j) { return is_missing(raw[j]); });
    if (missing && options.missing == MissingPolicy::DropRow) {
      ++dropped;
      continue;
    }
    rows.push_back(&raw);
  }
  if (rows.empty()) throw EmptyDataset("no rows left after removing rows with missing values");

  const std::size_t p = keep.size();
  std::vector<std::vector<std::string>> labels(p);
  std::vector<std::unordered_map<std::string, LevelCode>> index(p);
  for (std::size_t j = 0; j < p; ++j) {
    for (const auto* raw : rows) {
      const auto& cell = (*raw)[keep[j]];
      if (index[j].emplace(cell, 0).second) labels[j].push_back(cell);
    }
    if (options.level_order == LevelOrder::Lexicographic) std::sort(labels[j].begin(), labels[j].end());
    for (std::size_t l = 0; l < labels[j].size(); ++l) index[j][labels[j][l]] = static_cast<LevelCode>(l + 1);
  }

  std::vector<std::vector<LevelCode>> codes;
  codes.reserve(rows.size());
  for (const auto* raw : rows) {
    std::vector<LevelCode> row(p);
    for (std::size_t j = 0; j < p; ++j) row[j] = index[j].at((*raw)[keep[j]]);
    codes.push_back(std::move(row));
  }
  std::vector<std::string> kept_names;
  for (std::size_t j : keep) kept_names.push_back(names[j]);
  return Dataset(std::move(codes), std::move(kept_names), std::move(labels), dropped);
}

struct Item {
  VarIndex var = 0;
  LevelCode level = 1;
  auto operator<=>(const Item&) const = default;
};

/// A set of (variable, level) pairs over distinct variables, kept sorted by variable.
class Itemset {
 public:
  Itemset() = default;
  explicit Itemset(std::vector<Item> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end());
    if (entries_.empty()) throw DomainError("itemset must not be empty");
    for (std::size_t k = 1; k < entries_.size(); ++k)
      if (entries_[k].var == entries_[k - 1].var) throw DomainError("itemset repeats a variable");
  }

  /// The itemset of observation `row` restricted to the variables in `mask`.
  static Itemset of_row(const Dataset& ds, std::size_t row, VarMask mask) {
    Itemset out;
    for (VarIndex v : mask_to_vars(mask)) out.entries_.push_back({v, ds.code(row, v)});
    return out;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Item>& entries() const { return entries_; }
  VarMask mask() const {
    VarMask m = 0;
    for (const auto& e : entries_) m |= VarMask{1} << e.var;
    return m;
  }
  bool contained_in_row(const Dataset& ds, std::size_t row) const {
    return std::all_of(entries_.begin(), entries_.end(), [&](const Item& e) { return ds.code(row, e.var) == e.level; });
  }
  bool is_subset_of(const Itemset& other) const {
    return std::includes(other.entries_.begin(), other.entries_.end(), entries_.begin(), entries_.end());
  }

  auto operator<=>(const Itemset& other) const {
    // Shorter itemsets first, then lexicographic on (var, level).
    if (auto c = entries_.size() <=> other.entries_.size(); c != 0) return c;
    return entries_ <=> other.entries_;
  }
  bool operator==(const Itemset&) const = default;

  std::string to_string(const Dataset* ds = nullptr) const {
    std::string out = "{";
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (k) out += ", ";
      const auto& e = entries_[k];
      if (ds) {
        out += ds->variable_names()[e.var] + "=" + ds->level_label(e.var, e.level);
      } else {
        out += "X" + std::to_string(e.var + 1) + "=" + std::to_string(e.level);
      }
    }
    return out + "}";
  }

 private:
  std::vector<Item> entries_;
};

enum class ModelSource { Empirical, UserSupplied };

struct ProbabilityModel {
  std::vector<std::vector<double>> pi;  // pi[j][l - 1] = P(X_j = l)
  ModelSource source = ModelSource::Empirical;

  std::size_t p() const { return pi.size(); }

  void validate() const {
    for (std::size_t j = 0; j < pi.size(); ++j) {
      double total = 0.0;
      for (double v : pi[j]) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("probability outside [0, 1] for variable " + std::to_string(j));
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw DomainError("probabilities of variable " + std::to_string(j) + " sum to " + std::to_string(total));
    }
  }
};

/// pi[j][l] = (count of level l in variable j) / n.
inline ProbabilityModel empirical_model(const Dataset& ds) {
  ProbabilityModel model;
  model.source = ModelSource::Empirical;
  model.pi.resize(ds.p());
  for (std::size_t j = 0; j < ds.p(); ++j) {
    std::vector<std::size_t> counts(ds.level_count(j), 0);
    for (std::size_t i = 0; i < ds.n(); ++i) ++counts[ds.code(i, j) - 1];
    for (std::size_t c : counts) model.pi[j].push_back(static_cast<double>(c) / static_cast<double>(ds.n()));
  }
  return model;
}

/// User probabilities keyed by variable name then level label. Variables not
/// listed fall back to empirical frequencies. Every observed level of a listed
/// variable must be present; labels that never occur in the data are appended
/// after the observed levels and take part in the threshold tables.
inline ProbabilityModel user_model(const Dataset& ds,
                                   const std::map<std::string, std::map<std::string, double>>& probs) {
  ProbabilityModel model = empirical_model(ds);
  bool any = false;
  for (const auto& [name, levels] : probs) {
    const auto& names = ds.variable_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw IngestionError("probability file names unknown variable " + name);
    const auto j = static_cast<std::size_t>(it - names.begin());
    const auto& observed = ds.level_labels(j);
    std::vector<double> vec;
    for (const auto& label : observed) {
      auto f = levels.find(label);
      if (f == levels.end()) throw IngestionError("probability file lacks level '" + label + "' of " + name);
      vec.push_back(f->second);
    }
    for (const auto& [label, value] : levels)
      if (std::find(observed.begin(), observed.end(), label) == observed.end()) vec.push_back(value);
    model.pi[j] = std::move(vec);
    any = true;
  }
  if (any) model.source = ModelSource::UserSupplied;
  model.validate();
  return model;
}

/// Independence-model probability of an itemset: product of its levels' pi.
inline double cell_probability(const ProbabilityModel& model, const Itemset& d) {
  double prob = 1.0;
  for (const auto& e : d.entries()) {
    if (e.var >= model.pi.size()) throw DomainError("itemset variable outside the model");
    const auto& vec = model.pi[e.var];
    if (e.level < 1 || e.level > vec.size()) throw DomainError("level code out of range in cell_probability");
    prob *= vec[e.level - 1];
  }
  return prob;
}

/// Same product for the row's levels on `mask`, multiplied in increasing variable order.
inline double cell_probability(const ProbabilityModel& model, const Dataset& ds, std::size_t row, VarMask mask) {
  double prob = 1.0;
  while (mask) {
    const auto v = static_cast<std::size_t>(std::countr_zero(mask));
    prob *= model.pi[v][ds.code(row, v) - 1];
    mask &= mask - 1;
  }
  return prob;
}

}  // namespace sono

template <>
struct std::hash<sono::Itemset> {
  std::size_t operator()(const sono::Itemset& d) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (const auto& e : d.entries()) {
      h ^= (static_cast<std::size_t>(e.var) << 32) ^ e.level;
      h *= 1099511628211ull;
    }
    return h;
  }
};
