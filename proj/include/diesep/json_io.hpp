#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "diesep/coincidence.hpp"
#include "diesep/detect.hpp"
#include "diesep/resfit.hpp"

namespace diesep {

namespace detail {
// JSON has no infinity; non-finite values are written as null.
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
}  // namespace detail

inline nlohmann::json to_json(const CoincidenceReport& r) {
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["angular_model"] = to_string(r.angular_model);
  if (r.mode) j["mode"] = to_string(*r.mode);
  j["p_double"] = r.p_double;
  j["p_single"] = r.p_single;
  j["double_to_single_ratio"] = detail::number(r.double_to_single_ratio);
  j["doubled_pair_probability"] = r.doubled_pair_probability;
  if (r.mc_stderr) j["mc_stderr"] = *r.mc_stderr;
  if (r.n_rays) j["n_rays"] = *r.n_rays;
  if (r.seed) j["seed"] = *r.seed;
  j["directions"] = nlohmann::json::array();
  for (const auto& d : r.directions) {
    nlohmann::json e{{"from_die", d.from_die}, {"entry_weight", d.entry_weight}, {"probability", d.probability}};
    if (d.std_error) e["std_error"] = *d.std_error;
    if (d.n_rays) e["n_rays"] = *d.n_rays;
    j["directions"].push_back(e);
  }
  if (!r.pairs.empty()) {
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : r.pairs) {
      j["pairs"].push_back({{"from_die", p.from_die},
                            {"surface1", to_string(p.surface1)},
                            {"to_die", p.to_die},
                            {"surface2", to_string(p.surface2)},
                            {"area_share", p.area_share},
                            {"probability", p.probability}});
    }
  }
  return j;
}

inline nlohmann::json to_json(const Baseline& b) {
  return {{"center_i", b.mean_i}, {"center_q", b.mean_q}, {"sigma_i", b.sigma_i},
          {"sigma_q", b.sigma_q}, {"sigma", b.sigma}};
}

inline nlohmann::json to_json(const Detection& d) {
  nlohmann::json j{{"channel", d.channel},
                   {"t_trigger", d.t_trigger},
                   {"peak_dev", d.peak_dev},
                   {"first_sample", d.first_sample},
                   {"peak_sample", d.peak_sample},
                   {"last_above_sample", d.last_above_sample}};
  j["t_recovered"] = d.t_recovered ? nlohmann::json(*d.t_recovered) : nlohmann::json();
  return j;
}

inline nlohmann::json to_json(const CoincidentEvent& e) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : e.members) members.push_back({m.channel_index, m.detection_index});
  return {{"t_ref", e.t_ref},
          {"class", to_string(e.cls)},
          {"channels", e.channels},
          {"dies", e.dies},
          {"members", members}};
}

inline EventClass event_class_from_string(const std::string& s) {
  if (s == "single-die") return EventClass::SingleDie;
  if (s == "double-die") return EventClass::DoubleDie;
  if (s == "partial") return EventClass::Partial;
  throw Error("invalid-events", "unknown event class '" + s + "'");
}

inline nlohmann::json to_json(const BurstStatistics& s) {
  const double ratio = s.n_single ? static_cast<double>(s.n_double) / static_cast<double>(s.n_single)
                                  : std::numeric_limits<double>::infinity();
  return {{"n_total", s.n_total},
          {"n_single", s.n_single},
          {"n_double", s.n_double},
          {"n_partial", s.n_partial},
          {"fraction_double", s.fraction_double},
          {"double_to_single", detail::number(ratio)}};
}

inline nlohmann::json to_json(const MkidParams& p) {
  return {{"label", p.label},
          {"f0_GHz", p.f0 / 1e9},
          {"kappa_i_kHz", p.kappa_i / 1e3},
          {"kappa_e_kHz", p.kappa_e / 1e3}};
}

inline nlohmann::json to_json(const FitResult& r) {
  nlohmann::json j = to_json(r.params);
  j["residual_norm"] = r.residual_norm;
  j["iterations"] = r.iterations;
  if (r.phase_offset) j["phase_offset"] = *r.phase_offset;
  return j;
}

}  // namespace diesep
