#pragma once
// Support counting and the itemset lattice search.
//
// Itemsets inside one observation are identified by their variable mask; the
// level codes come from the row. Work is done level by level: candidates of
// every row are grouped by mask, each mask is evaluated once (supports, then
// thresholds only when some row could be flagged), and the rows are updated
// after a barrier. Results do not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <unordered_map>
#include <vector>

#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/thresholds.hpp"

namespace sono {

/// Observed counts of the cells of one variable subset.
class SupportIndex {
 public:
  SupportIndex() = default;
  SupportIndex(const Dataset& ds, VarMask mask) : mask_(mask) {
    if (mask == 0) throw DomainError("count_support: empty subset");
    if (static_cast<std::size_t>(std::bit_width(mask)) > ds.p()) throw DomainError("count_support: variable outside the dataset");
    // Mixed-radix key over the observed level counts.
    long double span = 1.0L;
    for (VarMask m = mask; m; m &= m - 1) {
      const auto v = static_cast<VarIndex>(std::countr_zero(m));
      radix_.push_back({v, ds.level_count(v)});
      span *= static_cast<long double>(ds.level_count(v));
    }
    if (span > static_cast<long double>(std::numeric_limits<std::uint64_t>::max() / 2))
      throw TableExplosion("count_support: cell index does not fit in 64 bits");
    keys_.resize(ds.n());
    counts_.reserve(std::min<std::size_t>(ds.n(), 1u << 16));
    for (std::size_t i = 0; i < ds.n(); ++i) {
      keys_[i] = key(ds.row(i));
      ++counts_[keys_[i]];
    }
  }

  VarMask mask() const { return mask_; }

  std::uint64_t key(std::span<const LevelCode> row) const {
    std::uint64_t k = 0;
    for (const auto& [v, base] : radix_) k = k * base + (row[v] - 1);
    return k;
  }

  /// supp of the itemset that row i has on this subset.
  std::int64_t row_support(std::size_t i) const { return counts_.at(keys_[i]); }

  std::int64_t support(const Itemset& d) const {
    if (d.mask() != mask_) throw DomainError("SupportIndex: itemset over a different subset");
    std::uint64_t k = 0;
    auto it = d.entries().begin();
    for (const auto& [v, base] : radix_) {
      if (it->level < 1 || it->level > base) return 0;
      k = k * base + (it->level - 1);
      ++it;
    }
    auto found = counts_.find(k);
    return found == counts_.end() ? 0 : found->second;
  }

  std::size_t distinct_cells() const { return counts_.size(); }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& [k, c] : counts_) t += c;
    return t;
  }

  /// Count of distinct cells among the given rows.
  std::size_t distinct_among(std::span<const std::uint32_t> rows) const {
    std::vector<std::uint64_t> ks;
    ks.reserve(rows.size());
    for (auto r : rows) ks.push_back(keys_[r]);
    std::sort(ks.begin(), ks.end());
    return static_cast<std::size_t>(std::unique(ks.begin(), ks.end()) - ks.begin());
  }

 private:
  struct Radix {
    VarIndex var;
    std::uint64_t base;
  };
  VarMask mask_ = 0;
  std::vector<Radix> radix_;
  std::vector<std::uint64_t> keys_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
};

inline SupportIndex count_support(const Dataset& ds, std::span<const VarIndex> subset) {
  return SupportIndex(ds, vars_to_mask(subset));
}

struct FlagRecord {
  Itemset itemset;
  std::int64_t support = 0;
  double sigma = 0.0;
  bool implied = false;  // frequent mode: subset of a flagged itemset, recorded without a test

  std::size_t length() const { return itemset.size(); }
  friend bool operator==(const FlagRecord&, const FlagRecord&) = default;
};

struct FlagSet {
  Mode mode = Mode::Infrequent;
  int maxlen = 1;
  bool prune = true;
  std::vector<std::vector<FlagRecord>> rows;  // canonical itemset order within a row
};

struct SearchOptions {
  Mode mode = Mode::Infrequent;
  int maxlen = 1;
  bool prune = true;
  unsigned threads = 1;
};

struct SearchStats {
  std::uint64_t subsets_visited = 0;       // masks with at least one candidate row
  std::uint64_t subsets_materialized = 0;  // SupportIndex built
  std::uint64_t tables_used = 0;           // threshold tables requested
  std::uint64_t itemsets_tested = 0;       // distinct (mask, cell) pairs with a counted support
  std::uint64_t subsets_bounded = 0;       // masks settled by n p < 1 without counting
  std::uint64_t row_tests = 0;             // (row, itemset) comparisons
  std::uint64_t row_itemsets_pruned = 0;   // (row, itemset) pairs with |d| <= maxlen never tested
  std::uint64_t implied_records = 0;
  int deepest_level_tested = 0;
};

namespace detail {

inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline double binomial(int p, int k) {
  if (k < 0 || k > p) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (p - k + i) / i;
  return r;
}

// All masks of `k` variables among the first p, increasing.
inline std::vector<VarMask> masks_of_size(int p, int k) {
  std::vector<VarMask> out;
  if (k < 1 || k > p) return out;
  VarMask m = (k == 64) ? ~VarMask{0} : ((VarMask{1} << k) - 1);
  const VarMask limit = p == 64 ? 0 : (VarMask{1} << p);
  while (true) {
    out.push_back(m);
    // Gosper's hack
    const VarMask c = m & (~m + 1);
    const VarMask r = m + c;
    if (r == 0) break;
    m = (((r ^ m) >> 2) / c) | r;
    if (limit && m >= limit) break;
  }
  return out;
}

struct MaskOutcome {
  std::vector<std::int64_t> support;  // per candidate row
  std::vector<double> sigma;          // per candidate row; NaN when not needed
  std::vector<char> flagged;
  bool materialized = false;
  bool table_used = false;
  std::uint64_t distinct_tested = 0;
};

struct MaskWork {
  VarMask mask;
  std::vector<std::uint32_t> rows;
};

inline std::vector<MaskWork> group_by_mask(std::unordered_map<VarMask, std::vector<std::uint32_t>>&& pending) {
  std::vector<MaskWork> work;
  work.reserve(pending.size());
  for (auto& [mask, rows] : pending) work.push_back({mask, std::move(rows)});
  std::sort(work.begin(), work.end(), [](const MaskWork& a, const MaskWork& b) { return a.mask < b.mask; });
  return work;
}

// Evaluates every candidate row of one mask. With `force_sigma`, supports
// and sigma are filled in for every row even when no flag is possible.
inline MaskOutcome evaluate_mask(const Dataset& ds, const ThresholdEngine& engine, const MaskWork& work, Mode mode,
                                 bool force_sigma) {
  MaskOutcome out;
  const auto& model = engine.model();
  const auto nd = static_cast<double>(ds.n());
  const std::size_t m = work.rows.size();
  out.support.assign(m, 0);
  out.sigma.assign(m, std::numeric_limits<double>::quiet_NaN());
  out.flagged.assign(m, 0);

  std::vector<double> prob(m), expected(m);
  double max_expected = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    prob[t] = cell_probability(model, ds, work.rows[t], work.mask);
    expected[t] = nd * prob[t];
    max_expected = std::max(max_expected, expected[t]);
  }
  // Infrequent flags need 1 <= supp <= n p - c <= n p.
  if (!force_sigma && mode == Mode::Infrequent && max_expected < 1.0) return out;

  SupportIndex index(ds, work.mask);
  out.materialized = true;
  out.distinct_tested = index.distinct_among(work.rows);
  bool possible = force_sigma;
  for (std::size_t t = 0; t < m; ++t) {
    out.support[t] = index.row_support(work.rows[t]);
    // Infrequent: supp <= n p - c needs supp <= n p. Frequent: supp >= n p + c + 2 gamma needs supp >= n p.
    const auto s = static_cast<double>(out.support[t]);
    if (mode == Mode::Infrequent ? s <= expected[t] : s >= expected[t]) possible = true;
  }
  if (!possible) return out;

  const auto table = engine.get(work.mask);
  out.table_used = true;
  for (std::size_t t = 0; t < m; ++t) {
    const double sigma = table->sigma(prob[t], mode);
    out.sigma[t] = sigma;
    const auto s = static_cast<double>(out.support[t]);
    out.flagged[t] = mode == Mode::Infrequent ? (s <= sigma) : (s >= sigma);
  }
  return out;
}

inline FlagRecord make_record(const Dataset& ds, std::size_t row, VarMask mask, std::int64_t supp, double sigma,
                              bool implied) {
  return {Itemset::of_row(ds, row, mask), supp, sigma, implied};
}

}  // namespace detail

/// Bottom-up search for highly infrequent itemsets (supp <= sigma).
inline FlagSet search_infrequent(const Dataset& ds, const ThresholdEngine& engine, int maxlen, bool prune = true,
                                 unsigned threads = 1, SearchStats* stats = nullptr) {
  const int p = static_cast<int>(ds.p());
  if (maxlen < 1 || maxlen > p) throw DomainError("maxlen must lie in [1, p]");
  const std::size_t n = ds.n();
  FlagSet flags;
  flags.mode = Mode::Infrequent;
  flags.maxlen = maxlen;
  flags.prune = prune;
  flags.rows.resize(n);
  SearchStats local;

  // alive[i]: masks of the previous level tested and not flagged, sorted.
  std::vector<std::vector<VarMask>> alive(n);
  for (int k = 1; k <= maxlen; ++k) {
    std::unordered_map<VarMask, std::vector<std::uint32_t>> pending;
    if (!prune || k == 1) {
      const auto all = detail::masks_of_size(p, k);
      for (VarMask mask : all) {
        auto& rows = pending[mask];
        rows.resize(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& prev = alive[i];
        for (VarMask a : prev) {
          const int top = std::bit_width(a);  // next variable index above a's largest
          for (int v = top; v < p; ++v) {
            const VarMask cand = a | (VarMask{1} << v);
            bool ok = true;
            for (VarMask rest = a; rest && ok; rest &= rest - 1) {
              const VarMask sub = cand & ~(rest & (~rest + 1));
              ok = std::binary_search(prev.begin(), prev.end(), sub);
            }
            if (ok) pending[cand].push_back(static_cast<std::uint32_t>(i));
          }
        }
      }
    }
    auto work = detail::group_by_mask(std::move(pending));
    std::vector<detail::MaskOutcome> outcomes(work.size());
    detail::parallel_for(work.size(), threads, [&](std::size_t w) {
      outcomes[w] = detail::evaluate_mask(ds, engine, work[w], Mode::Infrequent, false);
    });

    std::vector<std::vector<VarMask>> next(n);
    bool any_candidate = false;
    for (std::size_t w = 0; w < work.size(); ++w) {
      const auto& item = work[w];
      const auto& out = outcomes[w];
      any_candidate = true;
      ++local.subsets_visited;
      local.subsets_materialized += out.materialized;
      local.tables_used += out.table_used;
      local.row_tests += item.rows.size();
      local.itemsets_tested += out.distinct_tested;
      local.subsets_bounded += !out.materialized;
      for (std::size_t t = 0; t < item.rows.size(); ++t) {
        const auto i = item.rows[t];
        if (out.flagged[t]) {
          flags.rows[i].push_back(detail::make_record(ds, i, item.mask, out.support[t], out.sigma[t], false));
        } else if (prune) {
          next[i].push_back(item.mask);
        }
      }
    }
    if (any_candidate) local.deepest_level_tested = k;
    if (prune) {
      for (auto& v : next) std::sort(v.begin(), v.end());
      alive.swap(next);
    }
  }

  double total = 0.0;
  for (int k = 1; k <= maxlen; ++k) total += detail::binomial(p, k);
  local.row_itemsets_pruned = static_cast<std::uint64_t>(total * static_cast<double>(n)) - local.row_tests;
  for (auto& row : flags.rows)
    std::sort(row.begin(), row.end(), [](const FlagRecord& a, const FlagRecord& b) { return a.itemset < b.itemset; });
  if (stats) *stats = local;
  return flags;
}

/// Top-down search for highly frequent itemsets (supp >= sigma). With pruning,
/// every proper subset of a flagged itemset is recorded as implied, with its
/// own support and sigma, and is not tested.
inline FlagSet search_frequent(const Dataset& ds, const ThresholdEngine& engine, int maxlen, bool prune = true,
                               unsigned threads = 1, SearchStats* stats = nullptr) {
  const int p = static_cast<int>(ds.p());
  if (maxlen < 1 || maxlen > p) throw DomainError("maxlen must lie in [1, p]");
  const std::size_t n = ds.n();
  FlagSet flags;
  flags.mode = Mode::Frequent;
  flags.maxlen = maxlen;
  flags.prune = prune;
  flags.rows.resize(n);
  SearchStats local;

  // covered[i]: masks that are proper subsets of a flagged itemset of row i.
  std::vector<std::vector<VarMask>> covered(n);
  for (int k = maxlen; k >= 1; --k) {
    const auto all = detail::masks_of_size(p, k);
    std::vector<detail::MaskWork> tests;
    std::vector<detail::MaskWork> implied;
    for (VarMask mask : all) {
      detail::MaskWork t{mask, {}}, im{mask, {}};
      for (std::size_t i = 0; i < n; ++i) {
        const bool is_covered = prune && std::binary_search(covered[i].begin(), covered[i].end(), mask);
        (is_covered ? im : t).rows.push_back(static_cast<std::uint32_t>(i));
      }
      if (!t.rows.empty()) tests.push_back(std::move(t));
      if (!im.rows.empty()) implied.push_back(std::move(im));
    }

    std::vector<detail::MaskOutcome> outcomes(tests.size());
    std::vector<detail::MaskOutcome> implied_outcomes(implied.size());
    detail::parallel_for(tests.size() + implied.size(), threads, [&](std::size_t w) {
      if (w < tests.size())
        outcomes[w] = detail::evaluate_mask(ds, engine, tests[w], Mode::Frequent, false);
      else
        implied_outcomes[w - tests.size()] =
            detail::evaluate_mask(ds, engine, implied[w - tests.size()], Mode::Frequent, true);
    });

    std::vector<std::vector<VarMask>> newly(n);
    for (std::size_t w = 0; w < tests.size(); ++w) {
      const auto& item = tests[w];
      const auto& out = outcomes[w];
      ++local.subsets_visited;
      local.subsets_materialized += out.materialized;
      local.tables_used += out.table_used;
      local.row_tests += item.rows.size();
      local.itemsets_tested += out.distinct_tested;
      local.subsets_bounded += !out.materialized;
      local.deepest_level_tested = std::max(local.deepest_level_tested, k);
      for (std::size_t t = 0; t < item.rows.size(); ++t) {
        if (!out.flagged[t]) continue;
        const auto i = item.rows[t];
        flags.rows[i].push_back(detail::make_record(ds, i, item.mask, out.support[t], out.sigma[t], false));
        if (prune) newly[i].push_back(item.mask);
      }
    }
    for (std::size_t w = 0; w < implied.size(); ++w) {
      const auto& item = implied[w];
      const auto& out = implied_outcomes[w];
      local.subsets_materialized += out.materialized;
      local.tables_used += out.table_used;
      for (std::size_t t = 0; t < item.rows.size(); ++t) {
        const auto i = item.rows[t];
        flags.rows[i].push_back(detail::make_record(ds, i, item.mask, out.support[t], out.sigma[t], true));
        ++local.implied_records;
      }
    }
    if (prune) {
      for (std::size_t i = 0; i < n; ++i) {
        if (newly[i].empty()) continue;
        auto& cov = covered[i];
        for (VarMask flagged : newly[i]) {
          // every non-empty proper subset
          for (VarMask sub = (flagged - 1) & flagged; sub; sub = (sub - 1) & flagged) cov.push_back(sub);
        }
        std::sort(cov.begin(), cov.end());
        cov.erase(std::unique(cov.begin(), cov.end()), cov.end());
      }
    }
  }

  double total = 0.0;
  for (int k = 1; k <= maxlen; ++k) total += detail::binomial(p, k);
  local.row_itemsets_pruned = static_cast<std::uint64_t>(total * static_cast<double>(n)) - local.row_tests;
  for (auto& row : flags.rows)
    std::sort(row.begin(), row.end(), [](const FlagRecord& a, const FlagRecord& b) { return a.itemset < b.itemset; });
  if (stats) *stats = local;
  return flags;
}

inline FlagSet search(const Dataset& ds, const ThresholdEngine& engine, const SearchOptions& options,
                      SearchStats* stats = nullptr) {
  return options.mode == Mode::Infrequent
             ? search_infrequent(ds, engine, options.maxlen, options.prune, options.threads, stats)
             : search_frequent(ds, engine, options.maxlen, options.prune, options.threads, stats);
}

}  // namespace sono
