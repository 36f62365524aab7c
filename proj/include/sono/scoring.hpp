#pragma once
// Scores, nominal outlyingness depths and the contribution matrix, plus the
// end-to-end pipeline (model -> maxlen -> search -> report).

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "sono/dataset.hpp"
#include "sono/error.hpp"
#include "sono/lattice.hpp"
#include "sono/thresholds.hpp"

namespace sono {

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// One Eq. (1) / Eq. (2) term.
inline double score_term(const FlagRecord& rec, double r, Mode mode, int maxlen) {
  const auto len = static_cast<double>(rec.length());
  const auto supp = static_cast<double>(rec.support);
  if (rec.support < 1) throw ConsistencyError("flagged itemset " + rec.itemset.to_string() + " has zero support");
  if (mode == Mode::Infrequent) return rec.sigma / (supp * std::pow(len, r));
  if (!(rec.sigma > 0.0))
    throw ConsistencyError("frequent itemset " + rec.itemset.to_string() + " flagged with sigma <= 0");
  return supp / (rec.sigma * std::pow(static_cast<double>(maxlen) - len + 1.0, r));
}

inline void check_r(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("r must be a positive number");
}

inline std::vector<double> score(const FlagSet& flags, double r) {
  check_r(r);
  std::vector<double> out;
  out.reserve(flags.rows.size());
  for (const auto& row : flags.rows) {
    CompensatedSum s;
    for (const auto& rec : row) s.add(score_term(rec, r, flags.mode, flags.maxlen));
    out.push_back(s.value());
  }
  return out;
}

inline std::vector<double> depth(const FlagSet& flags) {
  std::vector<double> out;
  out.reserve(flags.rows.size());
  for (const auto& row : flags.rows) {
    if (row.empty()) {
      out.push_back(0.0);
      continue;
    }
    double total = 0.0;
    for (const auto& rec : row) {
      const auto len = static_cast<double>(rec.length());
      total += flags.mode == Mode::Infrequent ? len : static_cast<double>(flags.maxlen) - len + 1.0;
    }
    out.push_back(total / static_cast<double>(row.size()));
  }
  return out;
}

/// Row-major n x p matrix; each term is split equally over the itemset's variables.
inline std::vector<double> contributions(const FlagSet& flags, double r, std::size_t p) {
  check_r(r);
  std::vector<double> out(flags.rows.size() * p, 0.0);
  std::vector<CompensatedSum> acc(p);
  for (std::size_t i = 0; i < flags.rows.size(); ++i) {
    std::fill(acc.begin(), acc.end(), CompensatedSum{});
    for (const auto& rec : flags.rows[i]) {
      const double share = score_term(rec, r, flags.mode, flags.maxlen) / static_cast<double>(rec.length());
      for (const auto& e : rec.itemset.entries()) acc.at(e.var).add(share);
    }
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] = acc[j].value();
  }
  return out;
}

inline double binomial_coefficient(int p, int k) {
  if (k < 0 || k > p) return 0.0;
  return std::round(std::exp(std::lgamma(p + 1.0) - std::lgamma(k + 1.0) - std::lgamma(p - k + 1.0)));
}

/// Largest attainable infrequent score: p (n - 1) when p < 2^(r+1) + 1, else
/// (n - 1) C(p, k) / k^r with k = min(maxlen, floor((p - r) / 2)).
inline double max_score_bound(std::int64_t n, int p, double r, int maxlen) {
  if (n < 1 || p < 1) throw DomainError("max_score_bound: n and p must be positive");
  check_r(r);
  const auto nm1 = static_cast<double>(n - 1);
  if (static_cast<double>(p) < std::pow(2.0, r + 1.0) + 1.0) return static_cast<double>(p) * nm1;
  const int k = std::max(1, std::min(maxlen, static_cast<int>(std::floor((p - r) / 2.0))));
  return nm1 * binomial_coefficient(p, k) / std::pow(static_cast<double>(k), r);
}

struct ScoreReport {
  std::vector<double> scores;
  std::vector<double> depths;
  std::vector<double> contributions;  // n x p, row-major
  std::size_t p = 0;
  Mode mode = Mode::Infrequent;
  double r = 2.0;
  int maxlen = 1;

  double contribution(std::size_t i, std::size_t j) const { return contributions[i * p + j]; }
};

inline ScoreReport make_report(const FlagSet& flags, double r, std::size_t p) {
  ScoreReport rep;
  rep.scores = score(flags, r);
  rep.depths = depth(flags);
  rep.contributions = contributions(flags, r, p);
  rep.p = p;
  rep.mode = flags.mode;
  rep.r = r;
  rep.maxlen = flags.maxlen;
  return rep;
}

// ---------------------------------------------------------------------------

struct RunOptions {
  Mode mode = Mode::Infrequent;
  double alpha = 0.05;
  double r = 2.0;
  bool prune = true;
  std::optional<int> max_len;  // caps the computed maxlen
  MaxlenRule maxlen_rule{};
  NuMethod method = NuMethod::Auto;
  double cell_cap = kDefaultCellCap;
  unsigned threads = 1;
};

struct RunResult {
  MaxlenDecision maxlen;
  FlagSet flags;
  ScoreReport report;
  SearchStats stats;
};

inline ThresholdOptions threshold_options(const RunOptions& o) { return {o.alpha, o.method, o.cell_cap}; }

inline RunResult run(const Dataset& ds, const ThresholdEngine& engine, const RunOptions& options) {
  check_r(options.r);
  if (options.max_len && (*options.max_len < 1 || *options.max_len > static_cast<int>(ds.p())))
    throw DomainError("max-len must lie in [1, p]");
  RunResult out;
  out.maxlen = determine_maxlen(engine, ds, options.maxlen_rule, options.max_len.value_or(0));
  out.flags = search(ds, engine, {options.mode, out.maxlen.maxlen, options.prune, options.threads}, &out.stats);
  out.report = make_report(out.flags, options.r, ds.p());
  return out;
}

inline RunResult run(const Dataset& ds, const ProbabilityModel& model, const RunOptions& options) {
  ThresholdEngine engine(model, static_cast<std::int64_t>(ds.n()), threshold_options(options));
  return run(ds, engine, options);
}

}  // namespace sono
