#pragma once

#include "hpi/systems/bouncing_ball.hpp"
#include "hpi/systems/slip.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace hpi::systems {

/// Command-line overridable parameters shared by every system.
struct SystemOverrides {
  std::optional<double> dt;
  std::optional<double> eps;
  std::optional<double> horizon;
};

struct SystemSpec {
  std::string name;
  std::variant<BouncingBallParams, SlipParams> params;
};

inline const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names{"bouncing-ball", "slip-jump"};
  return names;
}

inline SystemSpec resolve_system(const std::string& name, const SystemOverrides& o = {}) {
  auto apply = [&](auto p) {
    if (o.dt) p.dt = *o.dt;
    if (o.eps) p.eps = *o.eps;
    if (o.horizon) p.horizon = *o.horizon;
    if (!(p.dt > 0.0) || !(p.eps > 0.0) || !(p.horizon >= p.dt))
      throw ConfigurationError("dt and eps must be positive and the horizon at least one step");
    return p;
  };
  if (name == "bouncing-ball") return {name, apply(BouncingBallParams{})};
  if (name == "slip-jump") return {name, apply(SlipParams{})};
  std::string known;
  for (const auto& n : system_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigurationError("unknown system '" + name + "' (known: " + known + ")");
}

inline Problem make_problem(const SystemSpec& s) {
  return std::visit(
      [](const auto& p) -> Problem {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, BouncingBallParams>)
          return make_bouncing_ball(p);
        else
          return make_slip(p);
      },
      s.params);
}

/// Every physical and numerical constant of the system, defaults included.
inline nlohmann::json to_json(const SystemSpec& s) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["name"] = s.name;
  if (const auto* b = std::get_if<BouncingBallParams>(&s.params)) {
    std::vector<std::vector<double>> q;
    for (Eigen::Index r = 0; r < b->terminal_weight.rows(); ++r)
      q.push_back(vec(b->terminal_weight.row(r).transpose()));
    j["params"] = {{"mass", b->mass},       {"gravity", b->gravity}, {"restitution", b->restitution},
                   {"eps", b->eps},         {"dt", b->dt},           {"horizon", b->horizon},
                   {"start", vec(b->start)}, {"goal", vec(b->goal)}, {"terminal_weight", q}};
  } else {
    const auto& p = std::get<SlipParams>(s.params);
    j["params"] = {{"mass", p.mass},
                   {"stiffness", p.stiffness},
                   {"rest_length", p.rest_length},
                   {"gravity", p.gravity},
                   {"eps", p.eps},
                   {"dt", p.dt},
                   {"horizon", p.horizon},
                   {"start_stance", vec(p.start)},
                   {"start_radius_is_fraction_of_rest_length", true},
                   {"toe", p.toe},
                   {"goal_flight", vec(p.goal)},
                   {"terminal_weight", p.terminal_weight}};
  }
  return j;
}

}  // namespace hpi::systems
