#pragma once

#include "hpi/hpi_controller.hpp"
#include "hpi/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace hpi::experiment {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// (J_prop - J_hpi) / J_prop.
inline double relative_improvement(double proposal, double hpi) { return (proposal - hpi) / proposal; }

struct TailStats {
  std::size_t count = 0;
  double proposal_mean = kNaN;
  double hpi_mean = kNaN;
  double improvement_pct = kNaN;  // 100 (prop_mean - hpi_mean) / prop_mean
};

/// Paired means over the ceil(p n) experiments with the highest proposal cost
/// (ties keep the lower index).
inline TailStats tail_stats(std::span<const double> proposal, std::span<const double> hpi, double p) {
  if (proposal.size() != hpi.size()) throw StatisticsError("paired cost arrays differ in length");
  if (!(p > 0.0 && p <= 1.0)) throw StatisticsError("tail fraction must lie in (0, 1]");
  const std::size_t n = proposal.size();
  if (n == 0) throw StatisticsError("no experiments");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return proposal[a] > proposal[b]; });
  TailStats t;
  t.count = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9)), 1, n);
  double sp = 0.0, sh = 0.0;
  for (std::size_t i = 0; i < t.count; ++i) {
    sp += proposal[idx[i]];
    sh += hpi[idx[i]];
  }
  t.proposal_mean = sp / static_cast<double>(t.count);
  t.hpi_mean = sh / static_cast<double>(t.count);
  t.improvement_pct = 100.0 * relative_improvement(t.proposal_mean, t.hpi_mean);
  return t;
}

/// Lower type-1 empirical quantile: the smallest sample x with F_n(x) >= level.
inline double empirical_quantile(std::span<const double> xs, double level) {
  if (xs.empty()) throw StatisticsError("quantile of an empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw StatisticsError("quantile level must lie in [0, 1]");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(s.size()) - 1e-9));
  return s[k == 0 ? 0 : k - 1];
}

/// Mean relative improvement over experiments whose proposal cost reaches the
/// level-quantile of the proposal costs.
inline double cvar(std::span<const double> proposal, std::span<const double> hpi, double level) {
  if (proposal.size() != hpi.size()) throw StatisticsError("paired cost arrays differ in length");
  const double q = empirical_quantile(proposal, level);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < proposal.size(); ++i)
    if (proposal[i] >= q) {
      acc += relative_improvement(proposal[i], hpi[i]);
      ++n;
    }
  return acc / static_cast<double>(n);
}

/// One-sided sign test of "first < second" on paired values: P(Bin(n, 1/2) >= wins)
/// where n excludes ties.
inline double sign_test_p_value(std::span<const double> first, std::span<const double> second) {
  if (first.size() != second.size()) throw StatisticsError("paired arrays differ in length");
  std::size_t wins = 0, n = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (first[i] == second[i]) continue;
    ++n;
    if (first[i] < second[i]) ++wins;
  }
  if (n == 0) return 1.0;
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  return std::min(p, 1.0);
}

struct SegmentStats {
  double var_all = kNaN, lambda_all = kNaN;
  double var_before = kNaN, lambda_before = kNaN;
  double var_after = kNaN, lambda_after = kNaN;
  double var_change = kNaN, lambda_change = kNaN;  // (after - before) / before
  std::optional<std::size_t> jump_step;
};

/// Averages of Var(alpha) and lambda over [0, T], over the steps sampled from
/// the pre-jump state (step <= jump_step) and over the rest. Steps whose
/// ensemble degenerated (NaN) are skipped.
inline SegmentStats segment_stats(std::span<const HpiStepDiagnostics> diag, std::optional<std::size_t> jump_step) {
  struct Mean {
    double s = 0.0;
    std::size_t n = 0;
    void add(double v) {
      if (std::isfinite(v)) {
        s += v;
        ++n;
      }
    }
    double get() const { return n ? s / static_cast<double>(n) : kNaN; }
  };
  Mean va, la, vb, lb, vc, lc;
  for (const auto& d : diag) {
    va.add(d.var_alpha);
    la.add(d.lambda);
    if (!jump_step || d.step <= *jump_step) {
      vb.add(d.var_alpha);
      lb.add(d.lambda);
    } else {
      vc.add(d.var_alpha);
      lc.add(d.lambda);
    }
  }
  SegmentStats s;
  s.jump_step = jump_step;
  s.var_all = va.get();
  s.lambda_all = la.get();
  s.var_before = vb.get();
  s.lambda_before = lb.get();
  if (jump_step) {
    s.var_after = vc.get();
    s.lambda_after = lc.get();
    s.var_change = (s.var_after - s.var_before) / s.var_before;
    s.lambda_change = (s.lambda_after - s.lambda_before) / s.lambda_before;
  }
  return s;
}

/// Step of the first jump flagged in the diagnostics.
inline std::optional<std::size_t> first_jump_step(std::span<const HpiStepDiagnostics> diag) {
  for (const auto& d : diag)
    if (d.jumped) return d.step;
  return std::nullopt;
}

/// Mean of each field over several experiments, skipping NaN entries.
inline SegmentStats average(std::span<const SegmentStats> xs) {
  auto mean = [&](double SegmentStats::*f) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& x : xs)
      if (std::isfinite(x.*f)) {
        s += x.*f;
        ++n;
      }
    return n ? s / static_cast<double>(n) : kNaN;
  };
  SegmentStats out;
  out.var_all = mean(&SegmentStats::var_all);
  out.lambda_all = mean(&SegmentStats::lambda_all);
  out.var_before = mean(&SegmentStats::var_before);
  out.lambda_before = mean(&SegmentStats::lambda_before);
  out.var_after = mean(&SegmentStats::var_after);
  out.lambda_after = mean(&SegmentStats::lambda_after);
  out.var_change = (out.var_after - out.var_before) / out.var_before;
  out.lambda_change = (out.lambda_after - out.lambda_before) / out.lambda_before;
  return out;
}

}  // namespace hpi::experiment
