#include "hpi/hpi.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace hpi;
using experiment::ExperimentConfig;

struct SystemFlags {
  std::string system = "bouncing-ball";
  std::optional<double> dt, eps, horizon;

  void add(CLI::App* app) {
    app->add_option("--system", system, "bouncing-ball | slip-jump")->check(CLI::IsMember(systems::system_names()));
    app->add_option("--dt", dt, "Grid step");
    app->add_option("--eps", eps, "Noise intensity");
    app->add_option("--horizon", horizon, "Horizon T in seconds");
  }
  systems::SystemOverrides overrides() const { return {dt, eps, horizon}; }
};

std::string pct(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f%%", v);
  return b;
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

void print_tables(const experiment::BatchTables& t) {
  std::cout << "experiments " << t.experiments << " (failed " << t.failed << ")\n";
  auto row = [](const char* name, const experiment::TailStats& s) {
    std::cout << name << ": n=" << s.count << " proposal " << num(s.proposal_mean) << " hpi " << num(s.hpi_mean)
              << " improvement " << pct(s.improvement_pct) << '\n';
  };
  row("mean    ", t.overall);
  row("tail 10%", t.tail10);
  row("tail 25%", t.tail25);
  std::cout << "sign test (tail 25%, hpi < proposal) p = " << num(t.sign_test_tail25) << '\n';
  std::cout << "CVaR of improvement: 0.7 " << pct(100 * t.cvar70) << "  0.8 " << pct(100 * t.cvar80) << "  0.9 "
            << pct(100 * t.cvar90) << '\n';
  const auto& s = t.segments;
  std::cout << "Var(alpha) [0,T] " << num(s.var_all) << "  [0,t-] " << num(s.var_before) << "  [t-,T] "
            << num(s.var_after) << "  change " << pct(100 * s.var_change) << '\n';
  std::cout << "lambda     [0,T] " << pct(100 * s.lambda_all) << "  [0,t-] " << pct(100 * s.lambda_before)
            << "  [t-,T] " << pct(100 * s.lambda_after) << "  change " << pct(100 * s.lambda_change) << '\n';
  if (t.multi_jump_runs > 0) std::cout << "runs with more than one jump: " << t.multi_jump_runs << '\n';
}

int cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  experiment::prepare_output_dir(cfg.out_dir);
  std::cerr << "system " << cfg.system << ", " << cfg.resolved_experiments() << " experiments, "
            << cfg.resolved_samples() << " samples, proposal " << experiment::to_string(cfg.proposal) << '\n';
  const auto batch = experiment::run_batch(cfg, [](const experiment::ExperimentRecord& e) {
    std::cerr << "experiment " << e.id << ": ";
    if (e.failed)
      std::cerr << "failed (" << e.error << ")\n";
    else
      std::cerr << "proposal " << num(e.proposal_cost) << " hpi " << num(e.hpi_cost) << '\n';
  });
  experiment::emit(batch, cfg.out_dir);
  print_tables(experiment::tables(batch));
  return 0;
}

int cmd_ilqr(const SystemFlags& f, const std::string& out) {
  const Problem pb = systems::make_problem(systems::resolve_system(f.system, f.overrides()));
  const IlqrResult r = solve(pb.model, pb.grid, pb.initial, pb.costs);
  save_policy(r.policy, out);
  std::cout << "iterations " << r.iterations << (r.converged ? " (converged)" : " (not converged)") << '\n';
  std::cout << "cost " << num(r.cost_history.front()) << " -> " << num(r.policy.nominal().cost) << '\n';
  for (const auto& j : r.policy.nominal().jumps)
    std::cout << "jump " << j.from << "->" << j.to << " at t=" << num(j.pre_time) << " (step " << j.step << ")\n";
  return 0;
}

int cmd_girsanov(const SystemFlags& f, std::size_t samples, std::uint64_t seed) {
  const Problem pb = systems::make_problem(systems::resolve_system(f.system, f.overrides()));
  const IlqrResult r = solve(pb.model, pb.grid, pb.initial, pb.costs);
  const auto rep =
      experiment::girsanov_diagnostics(pb, r.policy, std::min<std::size_t>(samples, 100), samples, samples, seed);
  auto js = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  const nlohmann::json j = {
      {"system", f.system},
      {"oracle", {{"paths", rep.oracle_paths}, {"jumps", rep.oracle_jumps}, {"max_abs_error", rep.oracle_max_abs_error}}},
      {"martingale",
       {{"paths", rep.martingale_paths}, {"mean", js(rep.martingale_mean)}, {"std_error", js(rep.martingale_std_error)}}},
      {"kl",
       {{"paths", rep.kl_paths},
        {"estimate", js(rep.kl.kl)},
        {"std_error", js(rep.kl.std_error)},
        {"energy_over_eps", js(rep.energy_over_eps)},
        {"energy_std_error", js(rep.energy_std_error)}}},
      {"failures", rep.failures}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_ablation(const ExperimentConfig& cfg) {
  const auto a = experiment::ablation_extensions(cfg);
  auto side = [](const experiment::EnsembleQuality& q) {
    return nlohmann::json{{"var_alpha", q.var_alpha}, {"lambda", q.lambda},   {"mismatches", q.mismatches},
                          {"clamped", q.clamped},     {"fallbacks", q.fallbacks}, {"failures", q.failures}};
  };
  const nlohmann::json j = {{"system", cfg.system},
                            {"samples", a.samples},
                            {"nominal_jumps", a.nominal_jumps},
                            {"without_extensions", side(a.without_extensions)},
                            {"with_extensions", side(a.with_extensions)}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_stats(const std::string& dir, bool as_json) {
  const auto t = experiment::tables(experiment::load_batch(dir));
  if (as_json)
    std::cout << experiment::to_json(t).dump(2) << '\n';
  else
    print_tables(t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid path integral control experiments"};
  app.set_version_flag("--version", experiment::version_string());
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Paired H-PI vs proposal Monte Carlo batch");
  SystemFlags run_sys;
  run_sys.add(run);
  std::string config_file, proposal = "hilqr", extensions = "on", out_dir, preset = "desk";
  std::size_t experiments = 0, samples = 0;
  std::uint64_t seed = 1;
  run->add_option("--config", config_file, "JSON config; flags override its values")->check(CLI::ExistingFile);
  auto* o_exp = run->add_option("--experiments", experiments, "Number of paired experiments")->check(CLI::PositiveNumber);
  auto* o_smp = run->add_option("--samples", samples, "Samples per H-PI update")->check(CLI::PositiveNumber);
  auto* o_seed = run->add_option("--seed", seed, "Base seed");
  auto* o_prop = run->add_option("--proposal", proposal, "hilqr | zero")->check(CLI::IsMember({"hilqr", "zero"}));
  auto* o_ext = run->add_option("--extensions", extensions, "on | off")->check(CLI::IsMember({"on", "off"}));
  auto* o_out = run->add_option("--out", out_dir, "Output directory");
  auto* o_pre = run->add_option("--scale-preset", preset, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));

  // ilqr
  auto* ilqr = app.add_subcommand("ilqr", "Solve the H-iLQR proposal and export it");
  SystemFlags ilqr_sys;
  ilqr_sys.add(ilqr);
  std::string policy_out;
  ilqr->add_option("--out", policy_out, "Policy JSON file")->required();

  // diag girsanov
  auto* diag = app.add_subcommand("diag", "Diagnostics");
  diag->require_subcommand(1);
  auto* gir = diag->add_subcommand("girsanov", "Check path-measure ratios against independent estimates");
  SystemFlags gir_sys;
  gir_sys.add(gir);
  std::size_t gir_samples = 10000;
  std::uint64_t gir_seed = 1;
  gir->add_option("--samples", gir_samples, "Rollouts per check")->check(CLI::Range(100, 100000000));
  gir->add_option("--seed", gir_seed, "Seed");

  // stats
  auto* stats = app.add_subcommand("stats", "Recompute tables from stored CSVs");
  std::string in_dir;
  bool stats_json = false;
  stats->add_option("--in", in_dir, "Directory written by 'run'")->required()->check(CLI::ExistingDirectory);
  stats->add_flag("--json", stats_json, "Print JSON");

  // ablation
  auto* abl = app.add_subcommand("ablation", "One update at t = 0 with and without reference extensions");
  SystemFlags abl_sys;
  abl_sys.add(abl);
  std::size_t abl_samples = 1000;
  std::uint64_t abl_seed = 1;
  abl->add_option("--samples", abl_samples, "Samples")->check(CLI::PositiveNumber);
  abl->add_option("--seed", abl_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentConfig cfg;
      if (!config_file.empty()) cfg = experiment::load_config(config_file);
      if (run->get_option("--system")->count()) cfg.system = run_sys.system;
      if (run_sys.dt) cfg.overrides.dt = run_sys.dt;
      if (run_sys.eps) cfg.overrides.eps = run_sys.eps;
      if (run_sys.horizon) cfg.overrides.horizon = run_sys.horizon;
      if (o_exp->count()) cfg.experiments = experiments;
      if (o_smp->count()) cfg.samples = samples;
      if (o_seed->count()) cfg.seed = seed;
      if (o_prop->count()) cfg.proposal = experiment::parse_proposal(proposal);
      if (o_ext->count()) cfg.extensions = extensions == "on";
      if (o_out->count()) cfg.out_dir = out_dir;
      if (o_pre->count()) cfg.preset = preset;
      return cmd_run(cfg);
    }
    if (ilqr->parsed()) return cmd_ilqr(ilqr_sys, policy_out);
    if (gir->parsed()) return cmd_girsanov(gir_sys, gir_samples, gir_seed);
    if (stats->parsed()) return cmd_stats(in_dir, stats_json);
    if (abl->parsed()) {
      ExperimentConfig cfg;
      cfg.system = abl_sys.system;
      cfg.overrides = abl_sys.overrides();
      cfg.samples = abl_samples;
      cfg.seed = abl_seed;
      return cmd_ablation(cfg);
    }
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
