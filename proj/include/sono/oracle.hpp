#pragma once
// Slow, direct reimplementations used to audit the fast path: a lattice
// walker that recomputes everything from nested loops, exact nu by
// convolution and by multinomial enumeration, and numeric checks of the two
// propositions on the maximum score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/lattice.hpp"
#include "sono/multinomial_ci.hpp"
#include "sono/scoring.hpp"
#include "sono/thresholds.hpp"

namespace sono::oracle {

struct OracleConfig {
  double max_width_product = 1e5;  // convolution path
  double max_states = 1e6;         // multinomial enumeration path
  std::uint64_t seed = 20240607;
  double nu_tolerance = 2e-3;
  double score_tolerance = 1e-9;
  double self_check_tolerance = 1e-12;

  void validate() const {
    if (!(max_width_product > 0 && max_states > 0 && nu_tolerance > 0 && score_tolerance > 0 &&
          self_check_tolerance > 0))
      throw DomainError("oracle caps and tolerances must be positive");
  }
};

// ---------------------------------------------------------------------------
// exact nu

namespace detail {

inline double poisson_pmf(std::int64_t y, double lambda) {
  if (lambda == 0.0) return y == 0 ? 1.0 : 0.0;
  return std::exp(static_cast<double>(y) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(y) + 1.0));
}

struct Box {
  std::vector<std::int64_t> lo, hi;
};

inline Box box_for(const CellSpec& spec, std::int64_t c) {
  Box box;
  for (double p : spec.probs) {
    const double m = static_cast<double>(spec.n) * p;
    auto a = static_cast<std::int64_t>(std::ceil(m - static_cast<double>(c) - 1e-9 * std::max(1.0, m)));
    auto b = static_cast<std::int64_t>(std::floor(m + static_cast<double>(c) + 1e-9 * std::max(1.0, m)));
    box.lo.push_back(std::max<std::int64_t>(0, a));
    box.hi.push_back(std::min<std::int64_t>(spec.n, b));
  }
  return box;
}

inline double log_binomial_states(std::int64_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n + static_cast<std::int64_t>(k))) - std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k));
}

}  // namespace detail

/// Levin's representation with the sum pmf from a plain convolution; no
/// Edgeworth, no log-space tricks beyond the pmf itself.
inline double exact_nu_convolution(const CellSpec& spec, std::int64_t c) {
  spec.validate();
  if (c >= spec.n) return 1.0;
  const auto box = detail::box_for(spec, c);
  const auto nd = static_cast<double>(spec.n);
  std::vector<double> dist(static_cast<std::size_t>(spec.n) + 1, 0.0);
  dist[0] = 1.0;
  double log_masses = 0.0;
  for (std::size_t i = 0; i < spec.probs.size(); ++i) {
    if (box.lo[i] > box.hi[i]) return 0.0;
    const double lambda = nd * spec.probs[i];
    std::vector<double> pmf;
    double mass = 0.0;
    for (std::int64_t y = box.lo[i]; y <= box.hi[i]; ++y) {
      pmf.push_back(detail::poisson_pmf(y, lambda));
      mass += pmf.back();
    }
    if (!(mass > 0.0)) return 0.0;
    log_masses += std::log(mass);
    std::vector<double> next(dist.size(), 0.0);
    for (std::size_t s = 0; s < dist.size(); ++s) {
      if (dist[s] == 0.0) continue;
      for (std::size_t t = 0; t < pmf.size(); ++t) {
        const auto total = s + static_cast<std::size_t>(box.lo[i]) + t;
        if (total >= next.size()) break;
        next[total] += dist[s] * pmf[t] / mass;
      }
    }
    dist.swap(next);
  }
  const double value = std::exp(log_masses) * dist.back() / detail::poisson_pmf(spec.n, nd);
  return std::clamp(value, 0.0, 1.0);
}

/// Direct sum of Multinomial probabilities over the box.
inline double exact_nu_enumeration(const CellSpec& spec, std::int64_t c) {
  spec.validate();
  if (c >= spec.n) return 1.0;
  const auto box = detail::box_for(spec, c);
  const std::size_t k = spec.probs.size();
  for (std::size_t i = 0; i < k; ++i)
    if (box.lo[i] > box.hi[i]) return 0.0;
  const double log_nfact = std::lgamma(static_cast<double>(spec.n) + 1.0);
  std::vector<std::int64_t> x(k, 0);
  double total = 0.0;
  // Depth-first over the first k - 1 coordinates; the last is forced.
  auto rec = [&](auto&& self, std::size_t i, std::int64_t remaining) -> void {
    if (i + 1 == k) {
      if (remaining < box.lo[i] || remaining > box.hi[i]) return;
      x[i] = remaining;
      double lp = log_nfact;
      for (std::size_t j = 0; j < k; ++j) {
        if (spec.probs[j] == 0.0) {
          if (x[j] != 0) return;
          continue;
        }
        lp += static_cast<double>(x[j]) * std::log(spec.probs[j]) - std::lgamma(static_cast<double>(x[j]) + 1.0);
      }
      total += std::exp(lp);
      return;
    }
    for (std::int64_t v = box.lo[i]; v <= std::min(box.hi[i], remaining); ++v) {
      x[i] = v;
      self(self, i + 1, remaining - v);
    }
  };
  rec(rec, 0, spec.n);
  return std::clamp(total, 0.0, 1.0);
}

/// Exact nu. Uses whichever of the two paths is within the caps; when both
/// are, they must agree to config.self_check_tolerance.
inline double exact_nu(const CellSpec& spec, std::int64_t c, const OracleConfig& config = {}) {
  spec.validate();
  if (c < 0) throw DomainError("exact_nu: c must be non-negative");
  if (c >= spec.n) return 1.0;
  const auto box = detail::box_for(spec, c);
  double widths = 1.0;
  for (std::size_t i = 0; i < box.lo.size(); ++i)
    widths *= static_cast<double>(std::max<std::int64_t>(0, box.hi[i] - box.lo[i] + 1));
  const bool conv_ok = widths <= config.max_width_product;
  const bool enum_ok = detail::log_binomial_states(spec.n, spec.probs.size()) <= std::log(config.max_states);
  if (!conv_ok && !enum_ok) throw OracleRefusal("exact_nu: table outside both enumeration caps");
  if (conv_ok && enum_ok) {
    const double a = exact_nu_convolution(spec, c);
    const double b = exact_nu_enumeration(spec, c);
    if (std::abs(a - b) > config.self_check_tolerance)
      throw ConsistencyError("exact_nu: convolution " + std::to_string(a) + " vs enumeration " + std::to_string(b));
    return a;
  }
  return conv_ok ? exact_nu_convolution(spec, c) : exact_nu_enumeration(spec, c);
}

/// find_c on the exact convolution, same bracketing rule as the fast path.
/// The convolution costs O(k n^2) at worst, so no cap is applied here.
inline CSearch exact_find_c(const CellSpec& spec, double level) {
  if (!(level >= 0.0 && level < 1.0)) throw DomainError("exact_find_c: level must lie in [0, 1)");
  double current = exact_nu_convolution(spec, 0);
  if (current >= level) return {0, 0.0};
  for (std::int64_t c = 0; c < spec.n; ++c) {
    const double next = std::max(current, exact_nu_convolution(spec, c + 1));
    if (next > level) return {c, (level - current) / (next - current)};
    current = next;
  }
  throw CISearchFailure("exact_find_c: level not bracketed");
}

// ---------------------------------------------------------------------------
// walker

struct WalkerOptions {
  double alpha = 0.05;
  double r = 2.0;
  Mode mode = Mode::Infrequent;
  bool prune = true;
  std::optional<int> max_len;
  MaxlenRule maxlen_rule{};
  NuMethod method = NuMethod::Auto;
};

struct WalkerResult {
  int maxlen = 1;
  FlagSet flags;
  ScoreReport report;
};

namespace detail {

struct WalkTable {
  std::int64_t c = 0;
  double gamma = 0.0;
  std::vector<double> probs;  // odometer order over the subset's levels
};

inline std::vector<std::size_t> vars_of(unsigned mask, std::size_t p) {
  std::vector<std::size_t> v;
  for (std::size_t j = 0; j < p; ++j)
    if (mask & (1u << j)) v.push_back(j);
  return v;
}

inline double row_prob(const ProbabilityModel& model, const Dataset& ds, std::size_t row,
                       const std::vector<std::size_t>& vars) {
  double prob = 1.0;
  for (auto j : vars) prob *= model.pi[j][ds.code(row, j) - 1];
  return prob;
}

inline std::int64_t row_support(const Dataset& ds, std::size_t row, const std::vector<std::size_t>& vars) {
  std::int64_t count = 0;
  for (std::size_t other = 0; other < ds.n(); ++other) {
    bool same = true;
    for (auto j : vars) same = same && ds.code(other, j) == ds.code(row, j);
    count += same;
  }
  return count;
}

}  // namespace detail

/// Recomputes maxlen, flags, scores, depths and contributions by definition.
inline WalkerResult walker(const Dataset& ds, const ProbabilityModel& model, const WalkerOptions& options) {
  const std::size_t n = ds.n(), p = ds.p();
  if (n > 500 || p > 8) throw OracleRefusal("walker: needs n <= 500 and p <= 8");
  double full = 1.0;
  for (const auto& v : model.pi) full *= static_cast<double>(v.size());
  if (full > 1e5) throw OracleRefusal("walker: full table above 1e5 cells");
  if (!(options.alpha > 0.0 && options.alpha <= 0.5)) throw DomainError("alpha must lie in (0, 0.5]");
  check_r(options.r);

  // Thresholds for every non-empty subset.
  std::vector<detail::WalkTable> tables(std::size_t{1} << p);
  for (unsigned mask = 1; mask < (1u << p); ++mask) {
    const auto vars = detail::vars_of(mask, p);
    std::vector<std::size_t> code(vars.size(), 0);
    auto& t = tables[mask];
    while (true) {
      double prob = 1.0;
      for (std::size_t q = 0; q < vars.size(); ++q) prob *= model.pi[vars[q]][code[q]];
      t.probs.push_back(prob);
      std::size_t q = vars.size();
      bool done = true;
      while (q > 0) {
        --q;
        if (++code[q] < model.pi[vars[q]].size()) {
          done = false;
          break;
        }
        code[q] = 0;
      }
      if (done) break;
    }
    const auto found =
        find_c(CellSpec{t.probs, static_cast<std::int64_t>(n)}, 1.0 - 2.0 * options.alpha, options.method);
    t.c = found.c;
    t.gamma = found.gamma;
  }
  const auto nd = static_cast<double>(n);
  auto lower = [&](unsigned mask, double prob) { return nd * prob - static_cast<double>(tables[mask].c); };
  auto sigma = [&](unsigned mask, double prob) {
    return options.mode == Mode::Infrequent
               ? lower(mask, prob)
               : nd * prob + static_cast<double>(tables[mask].c) + 2.0 * tables[mask].gamma;
  };

  // maxlen
  const int top = options.max_len ? std::min<int>(*options.max_len, static_cast<int>(p)) : static_cast<int>(p);
  int maxlen = 1;
  for (int m = 1; m <= top; ++m) {
    bool pass = true;
    for (unsigned mask = 1; mask < (1u << p) && pass; ++mask) {
      if (std::popcount(mask) != m) continue;
      if (options.maxlen_rule.scope == MaxlenScope::LeadingVariables && mask != (1u << m) - 1) continue;
      const auto vars = detail::vars_of(mask, p);
      double stat = 0.0;
      switch (options.maxlen_rule.quantifier) {
        case MaxlenQuantifier::EveryCell:
          stat = lower(mask, *std::min_element(tables[mask].probs.begin(), tables[mask].probs.end()));
          break;
        case MaxlenQuantifier::SomeCell:
          stat = lower(mask, *std::max_element(tables[mask].probs.begin(), tables[mask].probs.end()));
          break;
        case MaxlenQuantifier::EveryObservedCell:
          stat = 1e300;
          for (std::size_t i = 0; i < n; ++i) stat = std::min(stat, lower(mask, detail::row_prob(model, ds, i, vars)));
          break;
        case MaxlenQuantifier::SomeObservedCell:
          stat = -1e300;
          for (std::size_t i = 0; i < n; ++i) stat = std::max(stat, lower(mask, detail::row_prob(model, ds, i, vars)));
          break;
      }
      pass = stat >= 2.0;
    }
    if (!pass) break;
    maxlen = m;
  }

  WalkerResult out;
  out.maxlen = maxlen;
  out.flags.mode = options.mode;
  out.flags.maxlen = maxlen;
  out.flags.prune = options.prune;
  out.flags.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<unsigned> tested_flags;  // masks flagged by a test in this row
    auto record = [&](unsigned mask, bool implied) {
      const auto vars = detail::vars_of(mask, p);
      const auto supp = detail::row_support(ds, i, vars);
      const double s = sigma(mask, detail::row_prob(model, ds, i, vars));
      out.flags.rows[i].push_back({Itemset::of_row(ds, i, mask), supp, s, implied});
    };
    if (options.mode == Mode::Infrequent) {
      for (int k = 1; k <= maxlen; ++k) {
        for (unsigned mask = 1; mask < (1u << p); ++mask) {
          if (std::popcount(mask) != k) continue;
          if (options.prune) {
            bool contains_flagged = false;
            for (unsigned f : tested_flags) contains_flagged = contains_flagged || (f & mask) == f;
            if (contains_flagged) continue;
          }
          const auto vars = detail::vars_of(mask, p);
          const auto supp = detail::row_support(ds, i, vars);
          if (static_cast<double>(supp) <= sigma(mask, detail::row_prob(model, ds, i, vars))) {
            record(mask, false);
            tested_flags.push_back(mask);
          }
        }
      }
    } else {
      for (int k = maxlen; k >= 1; --k) {
        for (unsigned mask = 1; mask < (1u << p); ++mask) {
          if (std::popcount(mask) != k) continue;
          bool inside_flagged = false;
          if (options.prune)
            for (unsigned f : tested_flags) inside_flagged = inside_flagged || ((f & mask) == mask && f != mask);
          if (inside_flagged) {
            record(mask, true);
            continue;
          }
          const auto vars = detail::vars_of(mask, p);
          const auto supp = detail::row_support(ds, i, vars);
          if (static_cast<double>(supp) >= sigma(mask, detail::row_prob(model, ds, i, vars))) {
            record(mask, false);
            tested_flags.push_back(mask);
          }
        }
      }
    }
    auto& row = out.flags.rows[i];
    std::sort(row.begin(), row.end(), [](const FlagRecord& a, const FlagRecord& b) { return a.itemset < b.itemset; });
  }

  // Scores, depths and contributions straight from Eqs. (1), (2), (4), (5).
  auto& rep = out.report;
  rep.p = p;
  rep.mode = options.mode;
  rep.r = options.r;
  rep.maxlen = maxlen;
  rep.scores.assign(n, 0.0);
  rep.depths.assign(n, 0.0);
  rep.contributions.assign(n * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double depth_sum = 0.0;
    for (const auto& rec : out.flags.rows[i]) {
      const auto len = static_cast<double>(rec.itemset.size());
      const auto supp = static_cast<double>(rec.support);
      double term;
      if (options.mode == Mode::Infrequent) {
        term = rec.sigma / (supp * std::pow(len, options.r));
        depth_sum += len;
      } else {
        if (!(rec.sigma > 0.0)) throw ConsistencyError("walker: frequent itemset flagged with sigma <= 0");
        term = supp / (rec.sigma * std::pow(maxlen - len + 1.0, options.r));
        depth_sum += maxlen - len + 1.0;
      }
      rep.scores[i] += term;
      for (const auto& e : rec.itemset.entries()) rep.contributions[i * p + e.var] += term / len;
    }
    if (!out.flags.rows[i].empty()) rep.depths[i] = depth_sum / static_cast<double>(out.flags.rows[i].size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// propositions

struct PropositionCase {
  int p = 0;
  double r = 0.0;
  std::string check;  // "prop1-zero", "prop1-boundary", "prop2-kstar"
  bool passed = false;
  std::string detail;
};

/// The bracketed quantity of A in Proposition 1 (without the n - 1 factor);
/// alpha[i - 1] is the number of variables in unit-support itemsets of length i + 1.
inline double proposition_objective(int p, double r, const std::vector<int>& alpha) {
  double total = p;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const int len = static_cast<int>(i) + 2;
    total -= alpha[i];
    total += binomial_coefficient(alpha[i], len) / std::pow(len, r);
  }
  return total;
}

inline int argmax_k(int p, double r) {
  int best = 1;
  double best_value = -1.0;
  for (int k = 1; k <= p; ++k) {
    const double v = binomial_coefficient(p, k) / std::pow(k, r);
    if (v > best_value * (1.0 + 1e-12)) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

/// Proposition 1 (zero vector optimal when p < 2^(r+1) + 1, otherwise a
/// single-length boundary configuration) checked exhaustively for p <= 10 and
/// on `samples` random feasible vectors beyond; Proposition 2's k* checked
/// by brute force over k. Ties in the argmax count as a pass when
/// floor((p - r) / 2) is among the maximisers.
inline std::vector<PropositionCase> check_propositions(int p_min, int p_max, const std::vector<double>& r_set,
                                                       int samples = 10000, std::uint64_t seed = 20240607) {
  if (p_min < 2 || p_max > 60 || p_min > p_max) throw DomainError("check_propositions: need 2 <= p_min <= p_max <= 60");
  std::vector<PropositionCase> out;
  std::mt19937_64 rng(seed);
  for (double r : r_set) {
    check_r(r);
    const double threshold = std::pow(2.0, r + 1.0) + 1.0;
    for (int p = p_min; p <= p_max; ++p) {
      const bool small = p < threshold;
      const double zero = proposition_objective(p, r, std::vector<int>(static_cast<std::size_t>(p - 1), 0));
      double boundary = -1e300;
      for (int j = 0; j < p - 1; ++j) {
        std::vector<int> a(static_cast<std::size_t>(p - 1), 0);
        a[static_cast<std::size_t>(j)] = p;
        boundary = std::max(boundary, proposition_objective(p, r, a));
      }
      const double claimed = small ? zero : boundary;
      double best_other = -1e300;
      std::vector<int> best_alpha;
      auto consider = [&](const std::vector<int>& a) {
        const double v = proposition_objective(p, r, a);
        if (v > best_other) {
          best_other = v;
          best_alpha = a;
        }
      };
      if (p <= 10) {
        std::vector<int> a(static_cast<std::size_t>(p - 1), 0);
        auto rec = [&](auto&& self, int i, int remaining) -> void {
          if (i == p) {
            consider(a);
            return;
          }
          a[static_cast<std::size_t>(i - 1)] = 0;
          self(self, i + 1, remaining);
          for (int v = i + 1; v <= remaining; ++v) {
            a[static_cast<std::size_t>(i - 1)] = v;
            self(self, i + 1, remaining - v);
          }
          a[static_cast<std::size_t>(i - 1)] = 0;
        };
        rec(rec, 1, p);
      } else {
        for (int s = 0; s < samples; ++s) {
          std::vector<int> a(static_cast<std::size_t>(p - 1), 0);
          std::vector<int> order(static_cast<std::size_t>(p - 1));
          std::iota(order.begin(), order.end(), 1);
          std::shuffle(order.begin(), order.end(), rng);
          int remaining = p;
          const int active = std::uniform_int_distribution<int>(1, 3)(rng);
          int used = 0;
          for (int i : order) {
            if (used == active || remaining < i + 1) continue;
            a[static_cast<std::size_t>(i - 1)] = std::uniform_int_distribution<int>(i + 1, remaining)(rng);
            remaining -= a[static_cast<std::size_t>(i - 1)];
            ++used;
          }
          consider(a);
        }
      }
      PropositionCase c1;
      c1.p = p;
      c1.r = r;
      c1.check = small ? "prop1-zero" : "prop1-boundary";
      c1.passed = best_other <= claimed * (1.0 + 1e-12) + 1e-12;
      c1.detail = "claimed " + std::to_string(claimed) + ", best searched " + std::to_string(best_other);
      out.push_back(c1);

      if (!small) {
        PropositionCase c2;
        c2.p = p;
        c2.r = r;
        c2.check = "prop2-kstar";
        const int formula = static_cast<int>(std::floor((p - r) / 2.0));
        const double fv = binomial_coefficient(p, formula) / std::pow(formula, r);
        const int brute = argmax_k(p, r);
        const double bv = binomial_coefficient(p, brute) / std::pow(brute, r);
        c2.passed = formula == brute || std::abs(fv - bv) <= 1e-12 * bv;
        c2.detail = "floor((p-r)/2) = " + std::to_string(formula) + ", brute-force argmax = " + std::to_string(brute);
        out.push_back(c2);
      }
    }
  }
  return out;
}

}  // namespace sono::oracle
