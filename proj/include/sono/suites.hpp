#pragma once
// Verification suites shared by the `verify` subcommand and the acceptance
// binary: walker equivalence on random datasets, the nu battery, interval
// coverage by simulation, and the proposition sweep.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/lattice.hpp"
#include "sono/multinomial_ci.hpp"
#include "sono/oracle.hpp"
#include "sono/scoring.hpp"
#include "sono/thresholds.hpp"

namespace sono::suites {

inline bool close_relative(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Largest relative gap between score(i) and the sum of row i of C.
inline double row_sum_gap(const ScoreReport& rep) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rep.scores.size(); ++i) {
    CompensatedSum s;
    for (std::size_t j = 0; j < rep.p; ++j) s.add(rep.contribution(i, j));
    worst = std::max(worst, std::abs(s.value() - rep.scores[i]) / std::max(1.0, std::abs(rep.scores[i])));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// random datasets against the walker

struct RandomDataset {
  Dataset ds;
  double alpha = 0.05;
  double r = 2.0;
  MaxlenRule rule{};
};

/// n <= 200, p <= 6, at most 4 levels, skewed level frequencies so that
/// rare cells and deep lattices both occur.
inline RandomDataset random_dataset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(20, 200), p_dist(1, 6), l_dist(2, 4), coin(0, 1);
  const auto n = static_cast<std::size_t>(n_dist(rng));
  const auto p = static_cast<std::size_t>(p_dist(rng));
  std::vector<std::vector<double>> weights(p);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> labels(p);
  for (std::size_t j = 0; j < p; ++j) {
    names.push_back("V" + std::to_string(j + 1));
    const int levels = l_dist(rng);
    std::gamma_distribution<double> g(0.7, 1.0);
    for (int l = 0; l < levels; ++l) weights[j].push_back(g(rng) + 0.02);
  }
  std::vector<std::vector<LevelCode>> rows(n, std::vector<LevelCode>(p));
  for (std::size_t j = 0; j < p; ++j) {
    std::discrete_distribution<int> pick(weights[j].begin(), weights[j].end());
    std::vector<bool> seen(weights[j].size(), false);
    for (std::size_t i = 0; i < n; ++i) {
      const int l = pick(rng);
      rows[i][j] = static_cast<LevelCode>(l + 1);
      seen[static_cast<std::size_t>(l)] = true;
    }
    // Keep codes dense: relabel observed levels 1..l.
    std::vector<LevelCode> remap(weights[j].size(), 0);
    LevelCode next = 0;
    for (std::size_t l = 0; l < seen.size(); ++l)
      if (seen[l]) remap[l] = ++next;
    for (std::size_t i = 0; i < n; ++i) rows[i][j] = remap[rows[i][j] - 1];
    for (LevelCode l = 1; l <= next; ++l) labels[j].push_back("L" + std::to_string(l));
  }
  RandomDataset out{Dataset(std::move(rows), std::move(names), std::move(labels)), coin(rng) ? 0.05 : 0.1,
                    coin(rng) ? 1.0 : 2.0, MaxlenRule{}};
  // Vary the maxlen rule so deep lattices are exercised as well.
  const int q = std::uniform_int_distribution<int>(0, 3)(rng);
  out.rule.quantifier = static_cast<MaxlenQuantifier>(q);
  out.rule.scope = coin(rng) ? MaxlenScope::LeadingVariables : MaxlenScope::AllSubsets;
  return out;
}

inline bool same_flags(const FlagSet& a, const FlagSet& b, std::string* why) {
  if (a.rows.size() != b.rows.size()) {
    if (why) *why = "row count differs";
    return false;
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    std::set<std::tuple<Itemset, std::int64_t, bool>> sa, sb;
    for (const auto& rec : a.rows[i]) sa.emplace(rec.itemset, rec.support, rec.implied);
    for (const auto& rec : b.rows[i]) sb.emplace(rec.itemset, rec.support, rec.implied);
    if (sa != sb) {
      if (why) *why = "flag sets differ in row " + std::to_string(i + 1);
      return false;
    }
    for (const auto& ra : a.rows[i])
      for (const auto& rb : b.rows[i])
        if (ra.itemset == rb.itemset && !close_relative(ra.sigma, rb.sigma, 1e-12)) {
          if (why) *why = "sigma differs in row " + std::to_string(i + 1) + " for " + ra.itemset.to_string();
          return false;
        }
  }
  return true;
}

struct WalkerSuite {
  int datasets = 0;
  int runs = 0;
  int mismatches = 0;
  double worst_score_gap = 0.0;   // relative, scores / depths / contributions
  double worst_row_sum_gap = 0.0;
  double max_small_p_ratio = 0.0;  // max score / p (n - 1) on runs with p < 2^(r+1) + 1
  int deepest_maxlen = 0;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

inline double report_gap(const ScoreReport& a, const ScoreReport& b) {
  double worst = 0.0;
  auto gap = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::max(std::abs(x), std::abs(y))); };
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    worst = std::max(worst, gap(a.scores[i], b.scores[i]));
    worst = std::max(worst, gap(a.depths[i], b.depths[i]));
  }
  for (std::size_t k = 0; k < a.contributions.size(); ++k)
    worst = std::max(worst, gap(a.contributions[k], b.contributions[k]));
  return worst;
}

/// Every dataset is scored in both modes with pruning on and off.
/// `inject_failure` nudges one fast-path score to prove the suite can fail.
inline WalkerSuite walker_suite(int datasets, std::uint64_t seed, double tolerance = 1e-9,
                                bool inject_failure = false) {
  const auto start = std::chrono::steady_clock::now();
  WalkerSuite out;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < datasets; ++t) {
    const auto rd = random_dataset(rng);
    const auto model = empirical_model(rd.ds);
    ++out.datasets;
    for (Mode mode : {Mode::Infrequent, Mode::Frequent}) {
      for (bool prune : {true, false}) {
        ++out.runs;
        RunOptions ro;
        ro.mode = mode;
        ro.alpha = rd.alpha;
        ro.r = rd.r;
        ro.prune = prune;
        ro.maxlen_rule = rd.rule;
        auto fast = run(rd.ds, model, ro);
        if (inject_failure && out.runs == 1) fast.report.scores.front() += 1e-6 * (1.0 + fast.report.scores.front());
        oracle::WalkerOptions wo;
        wo.alpha = rd.alpha;
        wo.r = rd.r;
        wo.mode = mode;
        wo.prune = prune;
        wo.maxlen_rule = rd.rule;
        const auto slow = oracle::walker(rd.ds, model, wo);
        std::string why;
        bool ok = fast.maxlen.maxlen == slow.maxlen;
        if (!ok) why = "maxlen " + std::to_string(fast.maxlen.maxlen) + " vs " + std::to_string(slow.maxlen);
        ok = ok && same_flags(fast.flags, slow.flags, &why);
        const double gap = ok ? report_gap(fast.report, slow.report) : 0.0;
        out.worst_score_gap = std::max(out.worst_score_gap, gap);
        if (ok && gap > tolerance) {
          ok = false;
          why = "score gap " + std::to_string(gap);
        }
        out.worst_row_sum_gap = std::max(out.worst_row_sum_gap, row_sum_gap(fast.report));
        out.deepest_maxlen = std::max(out.deepest_maxlen, fast.maxlen.maxlen);
        if (mode == Mode::Infrequent && static_cast<double>(rd.ds.p()) < std::pow(2.0, rd.r + 1.0) + 1.0) {
          const double bound = static_cast<double>(rd.ds.p()) * static_cast<double>(rd.ds.n() - 1);
          for (double s : fast.report.scores) out.max_small_p_ratio = std::max(out.max_small_p_ratio, s / bound);
        }
        if (!ok) {
          ++out.mismatches;
          std::ostringstream msg;
          msg << "dataset " << t << " (n=" << rd.ds.n() << ", p=" << rd.ds.p() << ", "
              << (mode == Mode::Infrequent ? "infrequent" : "frequent") << ", prune=" << prune << "): " << why;
          out.failures.push_back(msg.str());
        }
      }
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// nu battery

struct NuCase {
  CellSpec spec;
  std::string label;
  double max_deviation = 0.0;  // over c = 0..n
  std::int64_t worst_c = 0;
  std::int64_t max_c_difference = 0;  // over the levels below
};

struct NuBattery {
  std::vector<NuCase> cases;
  double worst_deviation = 0.0;
  std::int64_t worst_c_difference = 0;
  double seconds = 0.0;
};

inline std::vector<double> skewed_probs(int k) {
  switch (k) {
    case 2: return {0.7, 0.3};
    case 3: return {0.6, 0.3, 0.1};
    case 5: return {0.4, 0.3, 0.15, 0.1, 0.05};
    default: break;
  }
  std::vector<double> w;
  for (int i = 0; i < k; ++i) w.push_back(1.0 / (i + 1.0));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

/// Edgeworth nu against the exact convolution for k in {2,3,5},
/// n in {10,20,50,100}, uniform and skewed probabilities, every c in 0..n;
/// c from both paths at levels 0.90 and 0.95.
inline NuBattery nu_battery() {
  const auto start = std::chrono::steady_clock::now();
  NuBattery out;
  for (int k : {2, 3, 5}) {
    for (std::int64_t n : {10, 20, 50, 100}) {
      for (bool skew : {false, true}) {
        NuCase nc;
        nc.spec.n = n;
        nc.spec.probs = skew ? skewed_probs(k) : std::vector<double>(static_cast<std::size_t>(k), 1.0 / k);
        nc.label = "k=" + std::to_string(k) + " n=" + std::to_string(n) + (skew ? " skewed" : " uniform");
        for (std::int64_t c = 0; c <= n; ++c) {
          const double d =
              std::abs(nu(nc.spec, c, NuMethod::Edgeworth) - oracle::exact_nu_convolution(nc.spec, c));
          if (d > nc.max_deviation) {
            nc.max_deviation = d;
            nc.worst_c = c;
          }
        }
        for (double level : {0.90, 0.95}) {
          const auto fast = find_c(nc.spec, level, NuMethod::Edgeworth);
          const auto exact = oracle::exact_find_c(nc.spec, level);
          nc.max_c_difference = std::max(nc.max_c_difference, std::abs(fast.c - exact.c));
        }
        out.worst_deviation = std::max(out.worst_deviation, nc.max_deviation);
        out.worst_c_difference = std::max(out.worst_c_difference, nc.max_c_difference);
        out.cases.push_back(std::move(nc));
      }
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// coverage

struct Coverage {
  int simulations = 0;
  int covered = 0;
  double rate() const { return simulations ? static_cast<double>(covered) / simulations : 0.0; }
  double seconds = 0.0;
};

/// Draws Multinomial(n, probs) samples, builds the two-sided simultaneous
/// intervals from the observed proportions and counts the draws whose
/// intervals cover every true probability.
inline Coverage coverage_simulation(const std::vector<double>& probs, std::int64_t n, double alpha, int simulations,
                                    std::uint64_t seed, NuMethod method = NuMethod::Auto) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(probs.begin(), probs.end());
  std::map<std::vector<std::int64_t>, CSearch> cache;  // keyed by sorted counts
  Coverage out;
  const auto nd = static_cast<double>(n);
  for (int s = 0; s < simulations; ++s) {
    std::vector<std::int64_t> counts(probs.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(pick(rng))];
    auto key = counts;
    std::sort(key.begin(), key.end());
    auto it = cache.find(key);
    if (it == cache.end()) {
      CellSpec spec{{}, n};
      for (auto x : key) spec.probs.push_back(static_cast<double>(x) / nd);
      it = cache.emplace(key, find_c(spec, 1.0 - alpha, method)).first;
    }
    const auto [c, gamma] = it->second;
    bool all = true;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      // Compared on the count scale, so n p_i = x_i - c is not lost to rounding.
      const auto x = static_cast<double>(counts[i]);
      const double target = nd * probs[i];
      const double lo = x - static_cast<double>(c);
      const double hi = x + static_cast<double>(c) + 2.0 * gamma;
      all = all && lo <= target + 1e-9 && target - 1e-9 <= hi;
    }
    ++out.simulations;
    out.covered += all ? 1 : 0;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace sono::suites
