#pragma once

#include "hpi/experiment/config.hpp"
#include "hpi/experiment/statistics.hpp"
#include "hpi/hilqr.hpp"
#include "hpi/hpi_controller.hpp"
#include "hpi/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hpi::experiment {

/// Keys of experiment `index`: every stream of an experiment derives from its seed.
struct ExperimentKeys {
  std::uint64_t seed;
  std::uint64_t sampling;
  std::uint64_t actuator;
};

inline ExperimentKeys experiment_keys(std::uint64_t base_seed, std::size_t index) {
  const std::uint64_t s = make_key(base_seed, index);
  return {s, make_key(s, static_cast<std::uint64_t>(StreamPurpose::Sampling)),
          make_key(s, static_cast<std::uint64_t>(StreamPurpose::Actuator))};
}

struct ExperimentRecord {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  double proposal_cost = kNaN;  // proposal alone under the actuator noise
  double hpi_cost = kNaN;       // H-PI under the same actuator noise
  double improvement = kNaN;    // (proposal - hpi) / proposal
  std::size_t jump_count = 0;   // jumps of the H-PI trajectory
  std::size_t proposal_jump_count = 0;
  std::optional<std::size_t> first_jump_step;
  bool failed = false;
  std::string error;
  std::vector<HpiStepDiagnostics> diagnostics;
};

struct IlqrSummary {
  bool solved = false;
  int iterations = 0;
  bool converged = false;
  double nominal_cost = kNaN;
  std::size_t nominal_jumps = 0;
};

struct BatchResult {
  ExperimentConfig config;
  IlqrSummary ilqr;
  std::vector<ExperimentRecord> experiments;

  std::vector<double> proposal_costs() const { return collect(&ExperimentRecord::proposal_cost); }
  std::vector<double> hpi_costs() const { return collect(&ExperimentRecord::hpi_cost); }
  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& e : experiments) n += e.failed;
    return n;
  }

 private:
  std::vector<double> collect(double ExperimentRecord::*f) const {
    std::vector<double> out;
    for (const auto& e : experiments)
      if (!e.failed) out.push_back(e.*f);
    return out;
  }
};

/// Zero-proposal policy or the solved H-iLQR policy; both usable as proposals.
class AnyProposal {
 public:
  explicit AnyProposal(const HybridModel& model) : zero_(model) {}
  explicit AnyProposal(ProposalPolicy p) : zero_(p.model()), hilqr_(std::move(p)) {}
  Vec operator()(std::size_t step, double t, const HybridState& s, PolicyStats& stats) const {
    return hilqr_ ? (*hilqr_)(step, t, s, stats) : zero_(step, t, s, stats);
  }
  const ProposalPolicy* hilqr() const { return hilqr_ ? &*hilqr_ : nullptr; }

 private:
  ZeroPolicy zero_;
  std::optional<ProposalPolicy> hilqr_;
};

inline AnyProposal make_proposal(const Problem& pb, const ExperimentConfig& cfg, IlqrSummary& summary) {
  if (cfg.proposal == ProposalKind::Zero) return AnyProposal(pb.model);
  IlqrResult res = solve(pb.model, pb.grid, pb.initial, pb.costs);
  summary.solved = true;
  summary.iterations = res.iterations;
  summary.converged = res.converged;
  summary.nominal_cost = res.policy.nominal().cost;
  summary.nominal_jumps = res.policy.nominal().jumps.size();
  res.policy.use_extensions = cfg.extensions;
  return AnyProposal(std::move(res.policy));
}

/// One paired experiment: the proposal alone and H-PI driven by the same
/// actuator noise stream.
template <class Policy>
ExperimentRecord run_experiment(const Problem& pb, const Policy& proposal, const ExperimentConfig& cfg,
                                std::size_t index) {
  const ExperimentKeys keys = experiment_keys(cfg.seed, index);
  ExperimentRecord rec;
  rec.id = index;
  rec.seed = keys.seed;
  try {
    const RolloutResult base = rollout(pb.model, pb.grid, pb.initial, proposal, KeyedNoise(keys.actuator), pb.costs);
    rec.proposal_cost = realized_cost(base);
    rec.proposal_jump_count = base.jumps.size();
    HpiOptions opts;
    opts.samples = cfg.resolved_samples();
    HpiResult h = run_hpi(pb.model, pb.grid, pb.initial, proposal, pb.costs, keys.sampling, keys.actuator, opts);
    rec.hpi_cost = h.realized_cost;
    rec.jump_count = h.trajectory.jumps.size();
    rec.diagnostics = std::move(h.diagnostics);
    rec.first_jump_step = first_jump_step(rec.diagnostics);
    rec.improvement = relative_improvement(rec.proposal_cost, rec.hpi_cost);
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

using ProgressCallback = std::function<void(const ExperimentRecord&)>;

/// Experiments run one after another; the sampling inside each H-PI update is
/// what runs in parallel. Failed experiments are recorded and skipped.
inline BatchResult run_batch(const ExperimentConfig& cfg, const ProgressCallback& progress = {}) {
  cfg.validate();
  BatchResult out;
  out.config = cfg;
  const Problem pb = systems::make_problem(cfg.system_spec());
  const AnyProposal proposal = make_proposal(pb, cfg, out.ilqr);
  const std::size_t n = cfg.resolved_experiments();
  out.experiments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.experiments.push_back(run_experiment(pb, proposal, cfg, i));
    if (progress) progress(out.experiments.back());
  }
  return out;
}

struct EnsembleQuality {
  double var_alpha = kNaN;
  double lambda = kNaN;
  std::size_t mismatches = 0;
  std::size_t clamped = 0;
  std::size_t fallbacks = 0;
  std::size_t failures = 0;
};

struct AblationResult {
  EnsembleQuality without_extensions;
  EnsembleQuality with_extensions;
  std::size_t samples = 0;
  std::size_t nominal_jumps = 0;
};

inline EnsembleQuality ensemble_quality(const SampleBatch& b, double eps) {
  EnsembleQuality q;
  q.mismatches = b.policy_stats.mismatches;
  q.clamped = b.policy_stats.clamped;
  q.fallbacks = b.policy_stats.fallbacks;
  q.failures = b.failures;
  try {
    const WeightSet w = path_weights(b.S, eps);
    q.var_alpha = w.var_alpha;
    q.lambda = w.lambda;
  } catch (const DegenerateEnsembleError&) {
  }
  return q;
}

/// Weight quality of one H-PI update at t = 0 with reference extensions off
/// and on, from identical sampled noise.
inline AblationResult ablation_extensions(const ExperimentConfig& cfg) {
  cfg.validate();
  const Problem pb = systems::make_problem(cfg.system_spec());
  IlqrResult res = solve(pb.model, pb.grid, pb.initial, pb.costs);
  HpiOptions opts;
  opts.samples = cfg.resolved_samples();
  const ExperimentKeys keys = experiment_keys(cfg.seed, 0);
  const double eps = pb.model.noise_intensity();
  AblationResult out;
  out.samples = opts.samples;
  out.nominal_jumps = res.policy.nominal().jumps.size();
  res.policy.use_extensions = false;
  out.without_extensions =
      ensemble_quality(sample_futures(pb.model, pb.grid, 0, pb.initial, res.policy, pb.costs, keys.sampling, opts), eps);
  res.policy.use_extensions = true;
  out.with_extensions =
      ensemble_quality(sample_futures(pb.model, pb.grid, 0, pb.initial, res.policy, pb.costs, keys.sampling, opts), eps);
  return out;
}

}  // namespace hpi::experiment
