#pragma once

#include "hpi/systems/registry.hpp"
#include "hpi/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

namespace hpi::experiment {

enum class ProposalKind { Hilqr, Zero };

inline std::string to_string(ProposalKind k) { return k == ProposalKind::Hilqr ? "hilqr" : "zero"; }

inline ProposalKind parse_proposal(const std::string& s) {
  if (s == "hilqr") return ProposalKind::Hilqr;
  if (s == "zero") return ProposalKind::Zero;
  throw ConfigurationError("proposal must be 'hilqr' or 'zero', got '" + s + "'");
}

/// Sample and experiment counts by scale preset. "desk" fits the acceptance
/// runtime budgets on one core; "paper" uses 5000 samples and 100 experiments.
struct ScaleDefaults {
  std::size_t samples;
  std::size_t experiments;
};

inline ScaleDefaults scale_defaults(const std::string& preset, const std::string& system) {
  if (preset == "paper") return {5000, 100};
  if (preset == "desk") return system == "slip-jump" ? ScaleDefaults{500, 5} : ScaleDefaults{1000, 20};
  throw ConfigurationError("scale preset must be 'desk' or 'paper', got '" + preset + "'");
}

/// Unset optionals take their value from the scale preset or the system defaults.
struct ExperimentConfig {
  std::string system = "bouncing-ball";
  std::string preset = "desk";
  systems::SystemOverrides overrides;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> experiments;
  std::uint64_t seed = 1;
  ProposalKind proposal = ProposalKind::Hilqr;
  bool extensions = true;
  std::string out_dir;

  std::size_t resolved_samples() const { return samples ? *samples : scale_defaults(preset, system).samples; }
  std::size_t resolved_experiments() const {
    return experiments ? *experiments : scale_defaults(preset, system).experiments;
  }
  systems::SystemSpec system_spec() const { return systems::resolve_system(system, overrides); }

  void validate() const {
    scale_defaults(preset, system);
    system_spec();
    if (resolved_samples() < 1) throw ConfigurationError("need at least one sample per update");
    if (resolved_experiments() < 1) throw ConfigurationError("need at least one experiment");
  }
};

/// Fully materialized configuration, defaults included.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto spec = c.system_spec();
  nlohmann::json j;
  j["system"] = c.system;
  j["scale_preset"] = c.preset;
  j["samples"] = c.resolved_samples();
  j["experiments"] = c.resolved_experiments();
  j["seed"] = c.seed;
  j["proposal"] = to_string(c.proposal);
  j["extensions"] = c.extensions ? "on" : "off";
  const auto sys = systems::to_json(spec);
  j["dt"] = sys["params"]["dt"];
  j["eps"] = sys["params"]["eps"];
  j["horizon"] = sys["params"]["horizon"];
  j["out"] = c.out_dir;
  return j;
}

inline bool parse_switch(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>();
  const auto s = v.get<std::string>();
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigurationError("expected 'on' or 'off', got '" + s + "'");
}

/// Reads the keys written by to_json (and the CLI flag names); unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "system") c.system = v.get<std::string>();
      else if (key == "scale_preset" || key == "scale-preset") c.preset = v.get<std::string>();
      else if (key == "samples") c.samples = v.get<std::size_t>();
      else if (key == "experiments") c.experiments = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "proposal") c.proposal = parse_proposal(v.get<std::string>());
      else if (key == "extensions") c.extensions = parse_switch(v);
      else if (key == "dt") c.overrides.dt = v.get<double>();
      else if (key == "eps") c.overrides.eps = v.get<double>();
      else if (key == "horizon") c.overrides.horizon = v.get<double>();
      else if (key == "out") c.out_dir = v.get<std::string>();
      else throw ConfigurationError("unknown configuration key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("bad configuration value: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace hpi::experiment
