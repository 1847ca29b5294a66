#pragma once

#include "hpi/experiment/batch.hpp"
#include "hpi/types.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef HPI_VERSION_STRING
#define HPI_VERSION_STRING "0.1.0"
#endif

namespace hpi::experiment {

inline constexpr int kOutputSchemaVersion = 1;
inline constexpr const char* kExperimentsFile = "experiments.csv";
inline constexpr const char* kDiagnosticsFile = "diagnostics.csv";
inline constexpr const char* kManifestFile = "manifest.json";

inline std::string version_string() { return HPI_VERSION_STRING; }

/// Round-trip decimal representation.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Creates `dir` if needed and checks that files can be written there.
inline void prepare_output_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw IoError("no output directory given");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  const fs::path probe = fs::path(dir) / ".write-probe";
  {
    std::ofstream f(probe);
    if (!f || !(f << "x") || !f.flush()) throw IoError("output directory " + dir + " is not writable");
  }
  fs::remove(probe, ec);
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw IoError("write to " + path.string() + " failed");
}

inline std::string experiments_csv(const BatchResult& b) {
  std::ostringstream s;
  s << "experiment_id,seed,proposal_cost,hpi_cost,improvement,jump_count,first_jump_step,status\n";
  for (const auto& e : b.experiments)
    s << e.id << ',' << e.seed << ',' << fmt(e.proposal_cost) << ',' << fmt(e.hpi_cost) << ','
      << fmt(e.improvement) << ',' << e.jump_count << ','
      << (e.first_jump_step ? std::to_string(*e.first_jump_step) : std::string()) << ','
      << (e.failed ? "failed" : "ok") << '\n';
  return s.str();
}

inline std::string diagnostics_csv(const BatchResult& b) {
  std::ostringstream s;
  s << "experiment_id,step,t,mode,lambda,var_alpha,du_norm,fallbacks,failures,mismatches,jumped\n";
  for (const auto& e : b.experiments)
    for (const auto& d : e.diagnostics)
      s << e.id << ',' << d.step << ',' << fmt(d.t) << ',' << d.mode << ',' << fmt(d.lambda) << ','
        << fmt(d.var_alpha) << ',' << fmt(d.du_norm) << ',' << (d.fallback ? 1 : 0) << ',' << d.failures << ','
        << d.mismatches << ',' << (d.jumped ? 1 : 0) << '\n';
  return s.str();
}

inline nlohmann::json manifest(const BatchResult& b) {
  nlohmann::json j;
  j["schema_version"] = kOutputSchemaVersion;
  j["version"] = version_string();
  j["config"] = to_json(b.config);
  j["system"] = systems::to_json(b.config.system_spec());
  j["ilqr"] = {{"solved", b.ilqr.solved},
               {"iterations", b.ilqr.iterations},
               {"converged", b.ilqr.converged},
               {"nominal_cost", b.ilqr.solved ? nlohmann::json(b.ilqr.nominal_cost) : nlohmann::json()},
               {"nominal_jumps", b.ilqr.nominal_jumps}};
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& e : b.experiments)
    if (e.failed) failures.push_back({{"experiment_id", e.id}, {"error", e.error}});
  j["failures"] = failures;
  j["files"] = {kExperimentsFile, kDiagnosticsFile};
  return j;
}

/// Writes experiments.csv, diagnostics.csv and manifest.json into `dir`.
inline void emit(const BatchResult& b, const std::string& dir) {
  prepare_output_dir(dir);
  const std::filesystem::path d(dir);
  write_file(d / kExperimentsFile, experiments_csv(b));
  write_file(d / kDiagnosticsFile, diagnostics_csv(b));
  write_file(d / kManifestFile, manifest(b).dump(2) + "\n");
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::vector<std::string>& required) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  std::string line;
  if (!std::getline(f, line)) throw IoError(path.string() + " is empty");
  const auto header = split(line);
  if (header.size() < required.size() || !std::equal(required.begin(), required.end(), header.begin()))
    throw IoError(path.string() + " has an unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != header.size()) throw IoError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (...) {
    if (s == "nan" || s == "-nan") return kNaN;
    throw IoError("not a number: '" + s + "'");
  }
}

}  // namespace detail

/// Reloads the per-experiment costs and per-step diagnostics written by emit().
inline BatchResult load_batch(const std::string& dir) {
  namespace fs = std::filesystem;
  BatchResult b;
  const auto exp_rows = detail::read_csv(fs::path(dir) / kExperimentsFile,
                                         {"experiment_id", "seed", "proposal_cost", "hpi_cost", "improvement",
                                          "jump_count", "first_jump_step", "status"});
  for (const auto& r : exp_rows) {
    ExperimentRecord e;
    e.id = std::stoull(r[0]);
    e.seed = std::stoull(r[1]);
    e.proposal_cost = detail::to_double(r[2]);
    e.hpi_cost = detail::to_double(r[3]);
    e.improvement = detail::to_double(r[4]);
    e.jump_count = std::stoull(r[5]);
    if (!r[6].empty()) e.first_jump_step = std::stoull(r[6]);
    e.failed = r[7] != "ok";
    b.experiments.push_back(std::move(e));
  }
  const auto diag_rows = detail::read_csv(fs::path(dir) / kDiagnosticsFile,
                                          {"experiment_id", "step", "t", "mode", "lambda", "var_alpha", "du_norm",
                                           "fallbacks", "failures", "mismatches", "jumped"});
  for (const auto& r : diag_rows) {
    const std::size_t id = std::stoull(r[0]);
    auto it = std::find_if(b.experiments.begin(), b.experiments.end(), [&](const auto& e) { return e.id == id; });
    if (it == b.experiments.end()) throw IoError("diagnostics refer to unknown experiment " + r[0]);
    HpiStepDiagnostics d;
    d.step = std::stoull(r[1]);
    d.t = detail::to_double(r[2]);
    d.mode = std::stoi(r[3]);
    d.lambda = detail::to_double(r[4]);
    d.var_alpha = detail::to_double(r[5]);
    d.du_norm = detail::to_double(r[6]);
    d.fallback = r[7] == "1";
    d.failures = std::stoull(r[8]);
    d.mismatches = std::stoull(r[9]);
    d.jumped = r[10] == "1";
    it->diagnostics.push_back(d);
  }
  const fs::path mf = fs::path(dir) / kManifestFile;
  if (fs::exists(mf)) {
    std::ifstream f(mf);
    try {
      const auto j = nlohmann::json::parse(f);
      b.config = config_from_json(j.at("config"));
    } catch (const std::exception& e) {
      throw IoError("cannot read " + mf.string() + ": " + e.what());
    }
  }
  return b;
}

/// Tables recomputed from a batch: overall and tail means, CVaR levels and
/// the before/after-jump weight statistics.
struct BatchTables {
  std::size_t experiments = 0;
  std::size_t failed = 0;
  TailStats overall;
  TailStats tail10;
  TailStats tail25;
  double cvar70 = kNaN, cvar80 = kNaN, cvar90 = kNaN;
  double sign_test_tail25 = kNaN;
  SegmentStats segments;
  std::size_t multi_jump_runs = 0;
};

inline BatchTables tables(const BatchResult& b) {
  BatchTables t;
  t.experiments = b.experiments.size();
  t.failed = b.failures();
  const auto prop = b.proposal_costs();
  const auto hpi = b.hpi_costs();
  if (!prop.empty()) {
    t.overall = tail_stats(prop, hpi, 1.0);
    t.tail10 = tail_stats(prop, hpi, 0.10);
    t.tail25 = tail_stats(prop, hpi, 0.25);
    t.cvar70 = cvar(prop, hpi, 0.7);
    t.cvar80 = cvar(prop, hpi, 0.8);
    t.cvar90 = cvar(prop, hpi, 0.9);
    std::vector<std::size_t> idx(prop.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return prop[a] > prop[c]; });
    std::vector<double> tp, th;
    for (std::size_t i = 0; i < t.tail25.count; ++i) {
      tp.push_back(prop[idx[i]]);
      th.push_back(hpi[idx[i]]);
    }
    t.sign_test_tail25 = sign_test_p_value(th, tp);
  }
  std::vector<SegmentStats> segs;
  for (const auto& e : b.experiments) {
    if (e.failed || e.diagnostics.empty()) continue;
    segs.push_back(segment_stats(e.diagnostics, e.first_jump_step));
    if (e.jump_count > 1) ++t.multi_jump_runs;
  }
  if (!segs.empty()) t.segments = average(segs);
  return t;
}

inline nlohmann::json to_json(const TailStats& s) {
  return {{"count", s.count},
          {"proposal_mean", s.proposal_mean},
          {"hpi_mean", s.hpi_mean},
          {"improvement_pct", s.improvement_pct}};
}

inline nlohmann::json to_json(const BatchTables& t) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  const auto& s = t.segments;
  return {{"experiments", t.experiments},
          {"failed", t.failed},
          {"overall", to_json(t.overall)},
          {"tail_10", to_json(t.tail10)},
          {"tail_25", to_json(t.tail25)},
          {"sign_test_p_tail_25", num(t.sign_test_tail25)},
          {"cvar_improvement", {{"0.7", num(t.cvar70)}, {"0.8", num(t.cvar80)}, {"0.9", num(t.cvar90)}}},
          {"segments",
           {{"var_alpha", {{"all", num(s.var_all)}, {"before", num(s.var_before)}, {"after", num(s.var_after)},
                           {"relative_change", num(s.var_change)}}},
            {"lambda", {{"all", num(s.lambda_all)}, {"before", num(s.lambda_before)}, {"after", num(s.lambda_after)},
                        {"relative_change", num(s.lambda_change)}}},
            {"multi_jump_runs", t.multi_jump_runs}}}};
}

}  // namespace hpi::experiment
