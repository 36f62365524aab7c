#pragma once
// Sison-Glaz simultaneous confidence intervals for Multinomial proportions.
//
// nu(c) = P(m_i - c <= X_i <= m_i + c for all i), X ~ Multinomial(n, p), is
// evaluated through Levin's representation
//
//   nu(c) = [prod_i P(a_i <= Y_i <= b_i)] * P(W = n) / P(Poisson(n) = n),
//
// with Y_i ~ Poisson(m_i) independent, m_i = n p_i, and W the sum of the Y_i
// truncated to [a_i, b_i]. P(W = n) comes either from a fourth-order
// Edgeworth expansion or from an exact convolution of the truncated pmfs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sono/error.hpp"

namespace sono {

struct CellSpec {
  std::vector<double> probs;
  std::int64_t n = 0;

  void validate() const {
    if (probs.empty()) throw DomainError("CellSpec: no cells");
    if (n < 1) throw DomainError("CellSpec: n must be positive");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw DomainError("CellSpec: probability outside [0,1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw DomainError("CellSpec: probabilities sum to " + std::to_string(total));
  }
};

enum class Sidedness { TwoSided, UpperOneSided, LowerOneSided };

// How P(W = n) is evaluated inside nu().
enum class NuMethod {
  Auto,       // exact convolution when prod(b_i - a_i + 1) <= kExactWidthProductCap
  Edgeworth,  // always the Edgeworth expansion
  Exact,      // always the convolution
};

inline constexpr double kExactWidthProductCap = 1e5;

struct SimCI {
  std::int64_t c = 0;
  double gamma = 0.0;
  double alpha = 0.05;
  std::vector<double> lower;
  std::vector<double> upper;
  Sidedness sidedness = Sidedness::TwoSided;
};

struct TruncatedPoissonMoments {
  double lambda = 0.0;
  std::int64_t a = 0;
  std::int64_t b = 0;
  double m1 = 0.0;
  double mu2 = 0.0;
  double mu3 = 0.0;
  double mu4 = 0.0;
  double mass = 0.0;
  double log_mass = -std::numeric_limits<double>::infinity();
};

namespace detail {

inline double log_poisson_pmf(std::int64_t y, double lambda) {
  if (lambda == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const auto yd = static_cast<double>(y);
  return yd * std::log(lambda) - lambda - std::lgamma(yd + 1.0);
}

// Moments of Y | a <= Y <= b without throwing; log_mass is -inf for an empty
// truncation. Terms are accumulated relative to the pmf at an anchor inside
// [a, b] close to the mode, and the sweep stops once terms fall below 1e-20
// of the running total on the decreasing side of the pmf.
inline TruncatedPoissonMoments truncated_moments(double lambda, std::int64_t a, std::int64_t b) {
  TruncatedPoissonMoments out;
  out.lambda = lambda;
  out.a = a;
  out.b = b;
  if (a > b) return out;
  if (lambda == 0.0) {
    if (a == 0) {
      out.mass = 1.0;
      out.log_mass = 0.0;
    }
    return out;
  }

  const auto mode = static_cast<std::int64_t>(std::floor(lambda));
  const std::int64_t anchor = std::clamp(mode, a, b);
  const double log_anchor = log_poisson_pmf(anchor, lambda);
  constexpr double kTail = 1e-20;

  // Shifted power sums: S_k = sum w_y (y - anchor)^k, w_anchor = 1.
  double s0 = 1.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  auto add = [&](double w, double d) {
    const double d2 = d * d;
    s0 += w;
    s1 += w * d;
    s2 += w * d2;
    s3 += w * d2 * d;
    s4 += w * d2 * d2;
  };

  double w = 1.0;
  for (std::int64_t y = anchor + 1; y <= b; ++y) {
    w *= lambda / static_cast<double>(y);
    add(w, static_cast<double>(y - anchor));
    if (static_cast<double>(y) > lambda && w < kTail * s0) break;
  }
  w = 1.0;
  for (std::int64_t y = anchor - 1; y >= a; --y) {
    w *= static_cast<double>(y + 1) / lambda;
    add(w, static_cast<double>(y - anchor));
    if (static_cast<double>(y) < lambda && w < kTail * s0) break;
  }

  out.log_mass = log_anchor + std::log(s0);
  out.mass = std::exp(out.log_mass);
  const double r1 = s1 / s0, r2 = s2 / s0, r3 = s3 / s0, r4 = s4 / s0;
  out.m1 = static_cast<double>(anchor) + r1;
  out.mu2 = std::max(0.0, r2 - r1 * r1);
  out.mu3 = r3 - 3.0 * r1 * r2 + 2.0 * r1 * r1 * r1;
  out.mu4 = std::max(0.0, r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1 * r1 * r1 * r1);
  return out;
}

struct TruncationBounds {
  std::int64_t a;
  std::int64_t b;
};

// Integer truncation around the expected count m = n p: [ceil(m - c), floor(m + c)]
// intersected with [0, n].
inline TruncationBounds bounds_for(double expected, std::int64_t c, std::int64_t n) {
  const double cd = static_cast<double>(c);
  // Expected counts come from products of probabilities; snap values within
  // rounding noise of an integer so ceil/floor do not jump a whole unit.
  auto snap = [](double x) {
    const double r = std::round(x);
    return std::abs(x - r) < 1e-9 * std::max(1.0, std::abs(x)) ? r : x;
  };
  const auto a = static_cast<std::int64_t>(std::ceil(snap(expected - cd)));
  const auto b = static_cast<std::int64_t>(std::floor(snap(expected + cd)));
  return {std::max<std::int64_t>(0, a), std::min<std::int64_t>(n, b)};
}

// P(W = target) for W the sum of independent truncated Poissons, by direct
// convolution over [0, target].
inline double exact_sum_pmf(std::span<const TruncatedPoissonMoments> cells, std::int64_t target) {
  std::vector<double> dist(static_cast<std::size_t>(target) + 1, 0.0);
  std::vector<double> next(dist.size());
  dist[0] = 1.0;
  std::int64_t reach = 0;
  std::vector<double> pmf;
  for (const auto& cell : cells) {
    const std::int64_t lo = cell.a;
    const std::int64_t hi = std::min(cell.b, target);
    if (lo > target) return 0.0;
    pmf.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (std::int64_t y = lo; y <= hi; ++y)
      pmf[static_cast<std::size_t>(y - lo)] = std::exp(log_poisson_pmf(y, cell.lambda) - cell.log_mass);
    std::fill(next.begin(), next.end(), 0.0);
    const std::int64_t new_reach = std::min(target, reach + hi);
    for (std::int64_t s = 0; s <= reach; ++s) {
      const double base = dist[static_cast<std::size_t>(s)];
      if (base == 0.0) continue;
      for (std::int64_t y = lo; y <= hi && s + y <= target; ++y)
        next[static_cast<std::size_t>(s + y)] += base * pmf[static_cast<std::size_t>(y - lo)];
    }
    dist.swap(next);
    reach = new_reach;
  }
  return dist[static_cast<std::size_t>(target)];
}

}  // namespace detail

/// Moments of Y conditioned on a <= Y <= b, Y ~ Poisson(lambda).
/// Throws DegenerateTruncation when the truncated mass underflows to zero.
inline TruncatedPoissonMoments truncated_poisson_moments(double lambda, std::int64_t a, std::int64_t b) {
  if (!(lambda > 0.0)) throw DomainError("truncated_poisson_moments: lambda must be positive");
  if (a < 0 || b < a) throw DomainError("truncated_poisson_moments: need 0 <= a <= b");
  auto m = detail::truncated_moments(lambda, a, b);
  if (!(m.mass > 0.0)) throw DegenerateTruncation("truncated Poisson has zero mass on [" +
                                                  std::to_string(a) + ", " + std::to_string(b) + "]");
  return m;
}

/// Fourth-order Edgeworth approximation of P(sum of the truncated Poissons = target).
/// May be slightly negative far in the tails; callers clamp.
inline double edgeworth_sum_density(std::span<const TruncatedPoissonMoments> cells, double target) {
  if (cells.empty()) throw DomainError("edgeworth_sum_density: empty moment list");
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (const auto& m : cells) {
    s1 += m.m1;
    s2 += m.mu2;
    s3 += m.mu3;
    s4 += m.mu4 - 3.0 * m.mu2 * m.mu2;
  }
  if (!(s2 > 0.0)) throw DegenerateTruncation("edgeworth_sum_density: zero aggregate variance");
  const double sd = std::sqrt(s2);
  const double z = (target - s1) / sd;
  const double g1 = s3 / (s2 * sd);
  const double g2 = s4 / (s2 * s2);
  const double z2 = z * z;
  const double poly = 1.0 + g1 * (z2 * z - 3.0 * z) / 6.0 + g2 * (z2 * z2 - 6.0 * z2 + 3.0) / 24.0 +
                      g1 * g1 * (z2 * z2 * z2 - 15.0 * z2 * z2 + 45.0 * z2 - 15.0) / 72.0;
  return poly * std::exp(-z2 / 2.0) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// A run of `count` cells sharing the same probability.
struct CellGroup {
  double prob = 0.0;
  std::uint64_t count = 1;
};

/// Groups identical probabilities (exact equality), ordered by probability.
inline std::vector<CellGroup> group_cells(std::span<const double> probs) {
  std::vector<double> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CellGroup> groups;
  for (double p : sorted) {
    if (!groups.empty() && groups.back().prob == p) {
      ++groups.back().count;
    } else {
      groups.push_back({p, 1});
    }
  }
  return groups;
}

namespace detail {

struct GroupMoments {
  TruncatedPoissonMoments moments;
  std::uint64_t count;
};

inline bool use_exact(std::span<const GroupMoments> cells, NuMethod method) {
  if (method == NuMethod::Exact) return true;
  if (method == NuMethod::Edgeworth) return false;
  double log_product = 0.0;
  const double cap = std::log(kExactWidthProductCap);
  for (const auto& g : cells) {
    log_product += static_cast<double>(g.count) * std::log(static_cast<double>(g.moments.b - g.moments.a + 1));
    if (log_product > cap + 1e-12) return false;
  }
  return true;
}

// Cells with a single admissible value only shift the target.
inline double exact_sum_pmf(std::span<const GroupMoments> cells, std::int64_t target) {
  std::vector<TruncatedPoissonMoments> flat;
  for (const auto& g : cells) {
    if (g.moments.a == g.moments.b) {
      const double shift = static_cast<double>(g.count) * static_cast<double>(g.moments.a);
      if (shift > static_cast<double>(target)) return 0.0;
      target -= static_cast<std::int64_t>(shift);
    } else {
      flat.insert(flat.end(), g.count, g.moments);
    }
  }
  if (flat.empty()) return target == 0 ? 1.0 : 0.0;
  return exact_sum_pmf(std::span<const TruncatedPoissonMoments>(flat), target);
}

inline double edgeworth_grouped(std::span<const GroupMoments> cells, double target) {
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (const auto& g : cells) {
    const auto k = static_cast<double>(g.count);
    const auto& m = g.moments;
    s1 += k * m.m1;
    s2 += k * m.mu2;
    s3 += k * m.mu3;
    s4 += k * (m.mu4 - 3.0 * m.mu2 * m.mu2);
  }
  if (!(s2 > 0.0)) throw DegenerateTruncation("edgeworth_sum_density: zero aggregate variance");
  const double sd = std::sqrt(s2);
  const double z = (target - s1) / sd;
  const double g1 = s3 / (s2 * sd);
  const double g2 = s4 / (s2 * s2);
  const double z2 = z * z;
  const double poly = 1.0 + g1 * (z2 * z - 3.0 * z) / 6.0 + g2 * (z2 * z2 - 6.0 * z2 + 3.0) / 24.0 +
                      g1 * g1 * (z2 * z2 * z2 - 15.0 * z2 * z2 + 45.0 * z2 - 15.0) / 72.0;
  return poly * std::exp(-z2 / 2.0) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace detail

/// nu(c) for a table given as groups of equiprobable cells. Result lies in [0, 1].
inline double nu(std::span<const CellGroup> groups, std::int64_t n, std::int64_t c,
                 NuMethod method = NuMethod::Auto) {
  if (c < 0) throw DomainError("nu: c must be non-negative");
  if (n < 1) throw DomainError("nu: n must be positive");
  const auto nd = static_cast<double>(n);

  std::vector<detail::GroupMoments> cells;
  cells.reserve(groups.size());
  bool full_range = true;
  bool degenerate = true;
  double log_mass = 0.0;
  for (const auto& g : groups) {
    if (g.count == 0) continue;
    const double expected = nd * g.prob;
    const auto [a, b] = detail::bounds_for(expected, c, n);
    if (a > b) return 0.0;
    full_range = full_range && a == 0 && b == n;
    auto m = detail::truncated_moments(expected, a, b);
    if (!std::isfinite(m.log_mass)) return 0.0;
    log_mass += static_cast<double>(g.count) * m.log_mass;
    degenerate = degenerate && m.mu2 == 0.0;
    cells.push_back({m, g.count});
  }
  if (cells.empty()) throw DomainError("nu: no cells");
  if (full_range) return 1.0;

  double sum_pmf = 0.0;
  if (degenerate) {
    double total = 0.0;
    for (const auto& g : cells) total += static_cast<double>(g.count) * g.moments.m1;
    sum_pmf = std::abs(total - nd) < 1e-9 ? 1.0 : 0.0;
  } else if (detail::use_exact(cells, method)) {
    sum_pmf = detail::exact_sum_pmf(cells, n);
  } else {
    sum_pmf = std::max(0.0, detail::edgeworth_grouped(cells, nd));
  }
  if (sum_pmf <= 0.0) return 0.0;
  const double value = std::exp(log_mass - detail::log_poisson_pmf(n, nd)) * sum_pmf;
  return std::clamp(value, 0.0, 1.0);
}

/// nu(c) = P(|X_i - n p_i| <= c for all i) for the table described by spec.
inline double nu(const CellSpec& spec, std::int64_t c, NuMethod method = NuMethod::Auto) {
  spec.validate();
  const auto groups = group_cells(spec.probs);
  return nu(groups, spec.n, c, method);
}

struct CSearch {
  std::int64_t c = 0;
  double gamma = 0.0;
};

/// Smallest c with nu(c) <= level < nu(c + 1), swept upward from 0, plus
/// gamma = (level - nu(c)) / (nu(c + 1) - nu(c)). nu(0) >= level yields (0, 0).
inline CSearch find_c(std::span<const CellGroup> groups, std::int64_t n, double level,
                      NuMethod method = NuMethod::Auto) {
  if (!(level >= 0.0 && level < 1.0)) throw DomainError("find_c: level must lie in [0, 1)");
  double current = nu(groups, n, 0, method);
  if (current >= level) return {0, 0.0};
  for (std::int64_t c = 0; c < n; ++c) {
    // Clamp against the previous value so the sweep sees a nondecreasing nu.
    const double next = std::max(current, nu(groups, n, c + 1, method));
    if (next > level) return {c, (level - current) / (next - current)};
    current = next;
  }
  throw CISearchFailure("find_c: nu never exceeded level " + std::to_string(level) + " for n = " + std::to_string(n));
}

inline CSearch find_c(const CellSpec& spec, double level, NuMethod method = NuMethod::Auto) {
  spec.validate();
  const auto groups = group_cells(spec.probs);
  return find_c(groups, spec.n, level, method);
}

/// Simultaneous intervals. Two-sided intervals use c_alpha; the one-sided
/// forms use c_{2 alpha}. Endpoints are the raw formula values, not clamped.
inline SimCI intervals(const CellSpec& spec, double alpha, Sidedness sidedness,
                       NuMethod method = NuMethod::Auto) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw DomainError("intervals: alpha must lie in (0, 0.5]");
  spec.validate();
  const double level = sidedness == Sidedness::TwoSided ? 1.0 - alpha : 1.0 - 2.0 * alpha;
  const auto [c, gamma] = find_c(spec, level, method);

  SimCI ci;
  ci.c = c;
  ci.gamma = gamma;
  ci.alpha = alpha;
  ci.sidedness = sidedness;
  const auto nd = static_cast<double>(spec.n);
  const auto cd = static_cast<double>(c);
  for (double p : spec.probs) {
    switch (sidedness) {
      case Sidedness::TwoSided:
        ci.lower.push_back(p - cd / nd);
        ci.upper.push_back(p + (cd + 2.0 * gamma) / nd);
        break;
      case Sidedness::UpperOneSided:
        ci.lower.push_back(p - cd / nd);
        ci.upper.push_back(1.0);
        break;
      case Sidedness::LowerOneSided:
        ci.lower.push_back(0.0);
        ci.upper.push_back(p + (cd + 2.0 * gamma) / nd);
        break;
    }
  }
  return ci;
}

}  // namespace sono
