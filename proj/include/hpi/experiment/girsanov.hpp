#pragma once

#include "hpi/experiment/statistics.hpp"
#include "hpi/hilqr.hpp"
#include "hpi/measure.hpp"
#include "hpi/parallel.hpp"
#include "hpi/random.hpp"
#include "hpi/systems/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

namespace hpi::experiment {

/// Evaluates a policy along a stored path, reconstructing the transition
/// count of each step from the path's jump records.
template <class Policy>
StepControl policy_along(const Policy& policy, const RolloutResult& r) {
  auto epochs = std::make_shared<std::vector<int>>(r.steps.size(), 0);
  for (const auto& j : r.jumps)
    for (std::size_t i = j.step - r.start_step + 1; i < r.steps.size(); ++i) ++(*epochs)[i];
  return [&policy, &r, epochs](std::size_t step, int mode, double t, const Vec& x) {
    const std::size_t i = step - r.start_step;
    PolicyStats ps;
    return policy(step, t, HybridState{mode, x, r.steps[i].anchor, (*epochs)[i]}, ps);
  };
}

struct GirsanovReport {
  std::size_t oracle_paths = 0;
  double oracle_max_abs_error = 0.0;  // continuous log ratio vs Gaussian transition densities
  std::size_t oracle_jumps = 0;
  std::size_t martingale_paths = 0;
  double martingale_mean = kNaN;      // mean exp(log dP^u/dP^0) over uncontrolled paths
  double martingale_std_error = kNaN;
  std::size_t kl_paths = 0;
  KlEstimate kl;
  double energy_over_eps = kNaN;      // mean sum |u|^2 dt / (2 eps) over controlled paths
  double energy_std_error = kNaN;
  std::size_t failures = 0;
};

/// Girsanov bookkeeping checks for a feedback policy: the discrete transition
/// density oracle on controlled paths, the unit mean of the density ratio over
/// uncontrolled paths, and KL(P^u | P^0) against the control energy.
template <class Policy>
GirsanovReport girsanov_diagnostics(const Problem& pb, const Policy& policy, std::size_t oracle_paths,
                                    std::size_t martingale_paths, std::size_t kl_paths, std::uint64_t seed,
                                    unsigned threads = 0) {
  if (threads == 0) threads = worker_count();
  const double eps = pb.model.noise_intensity();
  const auto diag_key = make_key(seed, static_cast<std::uint64_t>(StreamPurpose::Diagnostic));
  GirsanovReport rep;

  std::vector<double> err(oracle_paths, 0.0);
  std::vector<std::size_t> jumps(oracle_paths, 0);
  std::vector<unsigned char> fail(std::max({oracle_paths, martingale_paths, kl_paths}), 0);
  parallel_for(
      oracle_paths,
      [&](std::size_t k) {
        try {
          const RolloutResult r =
              rollout(pb.model, pb.grid, pb.initial, policy, KeyedNoise(make_key(diag_key, 1, k)), pb.costs);
          const double cont = log_ratio_controlled(r, eps).log_ratio_u_over_0;
          const double disc = discrete_density_ratio(pb.model, r, passive_drift(pb.model),
                                                     recorded_controlled_drift(pb.model, r), eps);
          err[k] = std::abs(cont - disc);
          jumps[k] = r.jumps.size();
        } catch (const Error&) {
          fail[k] = 1;
        }
      },
      threads);
  rep.oracle_paths = oracle_paths;
  for (std::size_t k = 0; k < oracle_paths; ++k) {
    rep.failures += fail[k];
    if (!fail[k]) rep.oracle_max_abs_error = std::max(rep.oracle_max_abs_error, err[k]);
    rep.oracle_jumps += jumps[k];
  }

  std::vector<double> ratio(martingale_paths, kNaN);
  std::fill(fail.begin(), fail.end(), 0);
  parallel_for(
      martingale_paths,
      [&](std::size_t k) {
        try {
          const RolloutResult r = rollout(pb.model, pb.grid, pb.initial, ZeroPolicy(pb.model),
                                          KeyedNoise(make_key(diag_key, 2, k)), pb.costs);
          ratio[k] = std::exp(log_ratio_along_uncontrolled(r, policy_along(policy, r), eps));
        } catch (const Error&) {
          fail[k] = 1;
        }
      },
      threads);
  {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < martingale_paths; ++k) {
      rep.failures += fail[k];
      if (fail[k]) continue;
      s += ratio[k];
      s2 += ratio[k] * ratio[k];
      ++n;
    }
    rep.martingale_paths = n;
    if (n > 1) {
      rep.martingale_mean = s / n;
      rep.martingale_std_error = std::sqrt((s2 - s * s / n) / (n - 1.0) / n);
    }
  }

  std::vector<PathLogRatio> lr(kl_paths);
  std::fill(fail.begin(), fail.end(), 0);
  parallel_for(
      kl_paths,
      [&](std::size_t k) {
        try {
          const RolloutSummary r = rollout_summary(pb.model, pb.grid, pb.initial, policy,
                                                   KeyedNoise(make_key(diag_key, 3, k)), pb.costs);
          lr[k] = log_ratio_controlled(r, eps);
        } catch (const Error&) {
          fail[k] = 1;
        }
      },
      threads);
  std::vector<PathLogRatio> ok;
  for (std::size_t k = 0; k < kl_paths; ++k) {
    rep.failures += fail[k];
    if (!fail[k]) ok.push_back(lr[k]);
  }
  rep.kl_paths = ok.size();
  if (ok.size() >= 100) {
    rep.kl = kl_estimate(ok);
    double s = 0.0, s2 = 0.0;
    for (const auto& p : ok) {
      const double e = p.control_energy / eps;
      s += e;
      s2 += e * e;
    }
    const double n = static_cast<double>(ok.size());
    rep.energy_over_eps = s / n;
    rep.energy_std_error = std::sqrt((s2 - s * s / n) / (n - 1.0) / n);
  }
  return rep;
}

}  // namespace hpi::experiment
