#pragma once
// Support thresholds sigma_d per variable subset, and the maxlen search.
//
// Every cell of the |S|-way table shares one c (and gamma) from the one-sided
// interval at level 1 - 2 alpha. Cells are held as groups of equal
// probability, so a table is never enumerated cell by cell.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/multinomial_ci.hpp"

namespace sono {

enum class Mode { Infrequent, Frequent };

inline constexpr double kDefaultCellCap = 1e7;

struct ThresholdOptions {
  double alpha = 0.05;
  NuMethod method = NuMethod::Auto;
  double cell_cap = kDefaultCellCap;
};

struct ThresholdTable {
  std::vector<VarIndex> subset;
  VarMask mask = 0;
  std::int64_t n = 0;
  std::int64_t c = 0;
  double gamma = 0.0;
  double cells = 0.0;            // size of the Kronecker table
  std::size_t distinct_probs = 0;
  double min_prob = 0.0;         // smallest / largest cell probability
  double max_prob = 0.0;

  double sigma(double cell_prob, Mode mode) const {
    const double expected = static_cast<double>(n) * cell_prob;
    const auto cd = static_cast<double>(c);
    return mode == Mode::Infrequent ? expected - cd : expected + cd + 2.0 * gamma;
  }
  double min_sigma(Mode mode = Mode::Infrequent) const { return sigma(min_prob, mode); }
  double max_sigma(Mode mode = Mode::Infrequent) const { return sigma(max_prob, mode); }
};

/// Probabilities of all cells of the table over `subset`, grouped by value.
/// Products are taken in increasing variable order, as in cell_probability().
inline std::vector<CellGroup> kronecker_groups(const ProbabilityModel& model, std::span<const VarIndex> subset) {
  std::map<double, std::uint64_t> current{{1.0, 1}};
  for (VarIndex v : subset) {
    std::map<double, std::uint64_t> next;
    for (const auto& [prob, count] : current)
      for (double q : model.pi.at(v)) next[prob * q] += count;
    current.swap(next);
  }
  std::vector<CellGroup> groups;
  groups.reserve(current.size());
  for (const auto& [prob, count] : current) groups.push_back({prob, count});
  return groups;
}

inline double table_cells(const ProbabilityModel& model, std::span<const VarIndex> subset) {
  double cells = 1.0;
  for (VarIndex v : subset) cells *= static_cast<double>(model.pi.at(v).size());
  return cells;
}

inline std::string subset_name(std::span<const VarIndex> subset) {
  std::string out = "{";
  for (std::size_t i = 0; i < subset.size(); ++i) out += (i ? "," : "") + std::to_string(subset[i] + 1);
  return out + "}";
}

/// Threshold table for one variable subset. sigma values are not clamped and
/// may be <= 0. Throws TableExplosion when the table exceeds options.cell_cap.
inline ThresholdTable sigma_for_subset(const ProbabilityModel& model, std::int64_t n,
                                       std::span<const VarIndex> subset, const ThresholdOptions& options = {}) {
  if (subset.empty()) throw DomainError("sigma_for_subset: empty subset");
  if (!std::is_sorted(subset.begin(), subset.end()) ||
      std::adjacent_find(subset.begin(), subset.end()) != subset.end())
    throw DomainError("sigma_for_subset: subset must be sorted and distinct");
  if (!(options.alpha > 0.0 && options.alpha <= 0.5)) throw DomainError("alpha must lie in (0, 0.5]");
  if (n < 1) throw DomainError("sigma_for_subset: n must be positive");

  ThresholdTable table;
  table.subset.assign(subset.begin(), subset.end());
  table.mask = vars_to_mask(subset);
  table.n = n;
  table.cells = table_cells(model, subset);
  if (table.cells > options.cell_cap)
    throw TableExplosion("table over variables " + subset_name(subset) + " has " +
                         std::to_string(static_cast<std::uint64_t>(table.cells)) + " cells (cap " +
                         std::to_string(static_cast<std::uint64_t>(options.cell_cap)) + ")");

  const auto groups = kronecker_groups(model, subset);
  table.distinct_probs = groups.size();
  table.min_prob = groups.front().prob;
  table.max_prob = groups.back().prob;
  const auto [c, gamma] = find_c(groups, n, 1.0 - 2.0 * options.alpha, options.method);
  table.c = c;
  table.gamma = gamma;
  return table;
}

/// Every cell of a (small) table with its sigma, keyed by level codes in subset order.
inline std::map<std::vector<LevelCode>, double> sigma_map(const ProbabilityModel& model, const ThresholdTable& table,
                                                          Mode mode, double cap = 1e6) {
  if (table.cells > cap) throw TableExplosion("sigma_map: table too large to enumerate");
  std::map<std::vector<LevelCode>, double> out;
  std::vector<LevelCode> codes(table.subset.size(), 1);
  while (true) {
    double prob = 1.0;
    for (std::size_t i = 0; i < codes.size(); ++i) prob *= model.pi[table.subset[i]][codes[i] - 1];
    out.emplace(codes, table.sigma(prob, mode));
    std::size_t i = codes.size();
    while (i > 0) {
      --i;
      if (codes[i] < model.pi[table.subset[i]].size()) {
        ++codes[i];
        break;
      }
      codes[i] = 1;
      if (i == 0) return out;
    }
  }
}

/// Thread-safe cache of threshold tables keyed by variable mask. Two threads
/// asking for the same missing key may both compute it; the result is
/// deterministic so the second insertion is simply dropped.
class ThresholdEngine {
 public:
  ThresholdEngine(const ProbabilityModel& model, std::int64_t n, ThresholdOptions options = {})
      : model_(model), n_(n), options_(options) {
    model_.validate();
    if (!(options_.alpha > 0.0 && options_.alpha <= 0.5)) throw DomainError("alpha must lie in (0, 0.5]");
  }

  const ProbabilityModel& model() const { return model_; }
  std::int64_t n() const { return n_; }
  const ThresholdOptions& options() const { return options_; }

  std::shared_ptr<const ThresholdTable> get(VarMask mask) const {
    {
      std::shared_lock lock(mutex_);
      if (auto it = tables_.find(mask); it != tables_.end()) return it->second;
    }
    const auto vars = mask_to_vars(mask);
    std::shared_ptr<const ThresholdTable> table;
    if (auto seeded = seed_lookup(mask)) {
      auto t = std::make_shared<ThresholdTable>(describe(vars));
      t->c = seeded->c;
      t->gamma = seeded->gamma;
      table = t;
    } else {
      table = std::make_shared<const ThresholdTable>(sigma_for_subset(model_, n_, vars, options_));
    }
    std::unique_lock lock(mutex_);
    return tables_.emplace(mask, table).first->second;
  }

  /// Preloads (c, gamma) for a mask, e.g. from an on-disk spill.
  void seed(VarMask mask, CSearch value) {
    std::unique_lock lock(mutex_);
    seeds_[mask] = value;
  }

  std::vector<std::shared_ptr<const ThresholdTable>> tables() const {
    std::shared_lock lock(mutex_);
    std::vector<std::shared_ptr<const ThresholdTable>> out;
    for (const auto& [mask, t] : tables_) out.push_back(t);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return std::popcount(a->mask) != std::popcount(b->mask) ? std::popcount(a->mask) < std::popcount(b->mask)
                                                              : a->mask < b->mask;
    });
    return out;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return tables_.size();
  }

 private:
  ThresholdTable describe(const std::vector<VarIndex>& vars) const {
    ThresholdTable t;
    t.subset = vars;
    t.mask = vars_to_mask(vars);
    t.n = n_;
    t.cells = table_cells(model_, vars);
    if (t.cells > options_.cell_cap) throw TableExplosion("table over variables " + subset_name(vars) + " too large");
    t.min_prob = 1.0;
    t.max_prob = 1.0;
    for (VarIndex v : vars) {
      const auto& pi = model_.pi[v];
      t.min_prob *= *std::min_element(pi.begin(), pi.end());
      t.max_prob *= *std::max_element(pi.begin(), pi.end());
    }
    t.distinct_probs = 0;
    return t;
  }

  std::optional<CSearch> seed_lookup(VarMask mask) const {
    std::shared_lock lock(mutex_);
    if (auto it = seeds_.find(mask); it != seeds_.end()) return it->second;
    return std::nullopt;
  }

  ProbabilityModel model_;
  std::int64_t n_;
  ThresholdOptions options_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<VarMask, std::shared_ptr<const ThresholdTable>> tables_;
  std::unordered_map<VarMask, CSearch> seeds_;
};

// ---------------------------------------------------------------------------
// maxlen

/// Which tables are inspected at size M.
enum class MaxlenScope {
  AllSubsets,        // every M-variable subset
  LeadingVariables,  // only the table of the first M variables
};

/// Which cells of an inspected table must have sigma >= 2.
enum class MaxlenQuantifier {
  EveryCell,          // all cells of the full Kronecker table
  EveryObservedCell,  // cells present in at least one row
  SomeCell,           // the table fails only when every sigma is below 2
  SomeObservedCell,   // as SomeCell, over cells present in at least one row
};

struct MaxlenRule {
  MaxlenScope scope = MaxlenScope::LeadingVariables;
  MaxlenQuantifier quantifier = MaxlenQuantifier::SomeObservedCell;
};

inline std::string to_string(const MaxlenRule& rule) {
  std::string out = rule.scope == MaxlenScope::AllSubsets ? "all-subsets" : "leading-variables";
  switch (rule.quantifier) {
    case MaxlenQuantifier::EveryCell: return out + "/every-cell";
    case MaxlenQuantifier::EveryObservedCell: return out + "/every-observed-cell";
    case MaxlenQuantifier::SomeCell: return out + "/some-cell";
    case MaxlenQuantifier::SomeObservedCell: return out + "/some-observed-cell";
  }
  return out;
}

inline constexpr MaxlenRule kSpecMaxlenRule{MaxlenScope::AllSubsets, MaxlenQuantifier::EveryCell};

struct MaxlenDecision {
  int maxlen = 1;
  std::optional<std::vector<VarIndex>> violating_subset;  // failing table at size maxlen + 1
  double violating_sigma = 0.0;                           // the sigma that failed there
  MaxlenRule rule;
};

namespace detail {

// Smallest (Every*) or largest (Some*) infrequent sigma the rule looks at
// for this table.
inline double maxlen_statistic(const ThresholdTable& t, const Dataset& ds, const ProbabilityModel& model,
                               MaxlenQuantifier q) {
  switch (q) {
    case MaxlenQuantifier::EveryCell: return t.min_sigma();
    case MaxlenQuantifier::SomeCell: return t.max_sigma();
    case MaxlenQuantifier::EveryObservedCell: {
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ds.n(); ++i)
        lo = std::min(lo, t.sigma(cell_probability(model, ds, i, t.mask), Mode::Infrequent));
      return lo;
    }
    case MaxlenQuantifier::SomeObservedCell: {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ds.n(); ++i)
        hi = std::max(hi, t.sigma(cell_probability(model, ds, i, t.mask), Mode::Infrequent));
      return hi;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Largest M such that every size 1..M passes the rule; at least 1. The
/// criterion always uses the infrequent lower bounds, whatever the scoring mode.
inline MaxlenDecision determine_maxlen(const ThresholdEngine& engine, const Dataset& ds, MaxlenRule rule = {},
                                       int limit = 0) {
  const int p = static_cast<int>(ds.p());
  const int top = limit > 0 ? std::min(limit, p) : p;
  MaxlenDecision decision;
  decision.rule = rule;
  decision.maxlen = 1;
  for (int m = 1; m <= top; ++m) {
    std::vector<VarIndex> subset(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) subset[static_cast<std::size_t>(i)] = static_cast<VarIndex>(i);
    bool passed = true;
    while (true) {
      const auto table = engine.get(vars_to_mask(subset));
      const double stat = detail::maxlen_statistic(*table, ds, engine.model(), rule.quantifier);
      if (stat < 2.0) {
        passed = false;
        decision.violating_subset = subset;
        decision.violating_sigma = stat;
        break;
      }
      if (rule.scope == MaxlenScope::LeadingVariables) break;
      int i = m - 1;
      while (i >= 0 && subset[static_cast<std::size_t>(i)] == static_cast<VarIndex>(p - m + i)) --i;
      if (i < 0) break;
      ++subset[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < m; ++k) subset[static_cast<std::size_t>(k)] = subset[static_cast<std::size_t>(k - 1)] + 1;
    }
    if (!passed) return decision;
    decision.maxlen = m;
  }
  decision.violating_subset.reset();
  return decision;
}

}  // namespace sono
