#pragma once

#include "hpi/hilqr.hpp"
#include "hpi/types.hpp"

#include "json.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace hpi {

namespace io {

using nlohmann::json;

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vec vec_from(const json& a) {
  if (!a.is_array() || a.size() > static_cast<std::size_t>(kMaxDim)) throw IoError("expected a vector of length <= 6");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

/// Row-major nested arrays. An empty array is a 0x0 matrix; `cols` sizes a
/// matrix with zero rows.
inline Mat mat_from(const json& a, Eigen::Index cols = 0) {
  if (!a.is_array() || a.size() > static_cast<std::size_t>(kMaxDim)) throw IoError("expected a matrix");
  if (a.empty()) return Mat(0, cols);
  const auto nc = static_cast<Eigen::Index>(a[0].size());
  Mat m(static_cast<Eigen::Index>(a.size()), nc);
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (static_cast<Eigen::Index>(a[r].size()) != nc) throw IoError("ragged matrix");
    for (Eigen::Index c = 0; c < nc; ++c) m(static_cast<Eigen::Index>(r), c) = a[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json to_json(const JumpRecord& j);
json to_json(const ReferenceExtension& e);

template <class T>
json list(const std::vector<T>& xs) {
  json a = json::array();
  for (const auto& x : xs) a.push_back(to_json(x));
  return a;
}

inline std::vector<Vec> vec_list(const json& a) {
  std::vector<Vec> out;
  out.reserve(a.size());
  for (const auto& e : a) out.push_back(vec_from(e));
  return out;
}

inline json to_json(const JumpRecord& j) {
  return {{"step", j.step},           {"pre_time", j.pre_time},   {"post_time", j.post_time},
          {"from", j.from},           {"to", j.to},               {"pre_state", to_json(j.pre_state)},
          {"post_state", to_json(j.post_state)}, {"shortened_step", j.shortened_step},
          {"pre_anchor", j.pre_anchor}, {"post_anchor", j.post_anchor}};
}

inline JumpRecord jump_from(const json& j) {
  JumpRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.pre_time = j.at("pre_time").get<double>();
  r.post_time = j.at("post_time").get<double>();
  r.from = j.at("from").get<int>();
  r.to = j.at("to").get<int>();
  r.pre_state = vec_from(j.at("pre_state"));
  r.post_state = vec_from(j.at("post_state"));
  r.shortened_step = j.at("shortened_step").get<double>();
  r.pre_anchor = j.at("pre_anchor").get<double>();
  r.post_anchor = j.at("post_anchor").get<double>();
  return r;
}

inline json to_json(const ReferenceExtension& e) {
  return {{"jump_step", e.jump_step}, {"from", e.from},          {"to", e.to},
          {"event_time", e.event_time}, {"fwd_x", list(e.fwd_x)}, {"fwd_u", to_json(e.fwd_u)},
          {"fwd_K", to_json(e.fwd_K)}, {"fwd_k", to_json(e.fwd_k)}, {"bwd_x", list(e.bwd_x)},
          {"bwd_u", to_json(e.bwd_u)}, {"bwd_K", to_json(e.bwd_K)}, {"bwd_k", to_json(e.bwd_k)},
          {"truncated", e.truncated}};
}

}  // namespace io

inline constexpr int kPolicySchemaVersion = 1;

inline nlohmann::json policy_to_json(const ProposalPolicy& p) {
  using io::list;
  using io::to_json;
  const auto& nt = p.nominal();
  nlohmann::json j;
  j["schema_version"] = kPolicySchemaVersion;
  j["system"] = p.model().name();
  j["grid"] = {{"horizon", nt.grid.horizon}, {"steps", nt.grid.steps}};
  j["nominal"] = {{"modes", nt.modes},   {"x", list(nt.x)},           {"anchors", nt.anchors},
                  {"epochs", nt.epochs}, {"u", list(nt.u)},           {"dt_used", nt.dt_used},
                  {"x_end", list(nt.x_end)}, {"jumps", list(nt.jumps)}, {"cost", nt.cost}};
  j["gains"] = {{"K", list(p.gains().K)}, {"k", list(p.gains().k)}};
  j["extensions"] = list(p.extensions());
  return j;
}

/// Rebuilds a policy against `model`, which must be the system it was solved for.
inline ProposalPolicy policy_from_json(const HybridModel& model, const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kPolicySchemaVersion) throw IoError("unsupported policy schema version");
    if (j.at("system").get<std::string>() != model.name())
      throw IoError("policy was computed for system '" + j.at("system").get<std::string>() + "'");
    NominalTrajectory nt;
    nt.grid.horizon = j.at("grid").at("horizon").get<double>();
    nt.grid.steps = j.at("grid").at("steps").get<std::size_t>();
    const auto& n = j.at("nominal");
    nt.modes = n.at("modes").get<std::vector<int>>();
    nt.x = io::vec_list(n.at("x"));
    nt.anchors = n.at("anchors").get<std::vector<double>>();
    nt.epochs = n.at("epochs").get<std::vector<int>>();
    nt.u = io::vec_list(n.at("u"));
    nt.dt_used = n.at("dt_used").get<std::vector<double>>();
    nt.x_end = io::vec_list(n.at("x_end"));
    for (const auto& jr : n.at("jumps")) nt.jumps.push_back(io::jump_from(jr));
    nt.cost = n.at("cost").get<double>();
    if (nt.u.size() != nt.grid.steps || nt.x.size() != nt.grid.steps + 1 || nt.modes.size() != nt.x.size() ||
        nt.anchors.size() != nt.x.size() || nt.epochs.size() != nt.x.size())
      throw IoError("nominal trajectory arrays disagree with the grid");
    for (int m : nt.modes) model.mode(m);

    Gains g;
    for (std::size_t i = 0; i < j.at("gains").at("K").size(); ++i) {
      const int nx = model.mode(nt.modes.at(i)).state_dim;
      g.K.push_back(io::mat_from(j["gains"]["K"][i], nx));
    }
    g.k = io::vec_list(j.at("gains").at("k"));
    if (g.K.size() != nt.steps() || g.k.size() != nt.steps()) throw IoError("gain arrays disagree with the grid");

    std::vector<ReferenceExtension> ext;
    for (const auto& e : j.at("extensions")) {
      ReferenceExtension r;
      r.jump_step = e.at("jump_step").get<std::size_t>();
      r.from = e.at("from").get<int>();
      r.to = e.at("to").get<int>();
      r.event_time = e.at("event_time").get<double>();
      r.fwd_x = io::vec_list(e.at("fwd_x"));
      r.fwd_u = io::vec_from(e.at("fwd_u"));
      r.fwd_K = io::mat_from(e.at("fwd_K"), model.mode(r.from).state_dim);
      r.fwd_k = io::vec_from(e.at("fwd_k"));
      r.bwd_x = io::vec_list(e.at("bwd_x"));
      r.bwd_u = io::vec_from(e.at("bwd_u"));
      r.bwd_K = io::mat_from(e.at("bwd_K"), model.mode(r.to).state_dim);
      r.bwd_k = io::vec_from(e.at("bwd_k"));
      r.truncated = e.at("truncated").get<bool>();
      ext.push_back(std::move(r));
    }
    return ProposalPolicy(model, std::move(nt), std::move(g), std::move(ext));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed policy file: ") + e.what());
  }
}

inline void save_policy(const ProposalPolicy& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << policy_to_json(p).dump(1) << '\n';
  if (!f) throw IoError("write to " + path + " failed");
}

inline ProposalPolicy load_policy(const HybridModel& model, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + path + ": " + e.what());
  }
  return policy_from_json(model, j);
}

}  // namespace hpi
