#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "diesep/geometry.hpp"

namespace diesep {

// Layout files are JSON:
//   { "gap": 0.2,
//     "dies": [ { "id": "left", "min_corner": [0,0,0], "dimensions": [10,10,0.5] }, ... ] }
// All lengths in millimeters. "gap" is optional metadata.

inline void to_json(nlohmann::json& j, const Vec3& v) { j = nlohmann::json::array({v.x, v.y, v.z}); }

inline void from_json(const nlohmann::json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw Error("invalid-layout", "expected [x, y, z] triple");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json layout_to_json(const Layout& layout) {
  nlohmann::json j;
  j["dies"] = nlohmann::json::array();
  for (const auto& d : layout.dies) {
    j["dies"].push_back({{"id", d.id}, {"min_corner", d.min_corner}, {"dimensions", d.dimensions}});
  }
  if (layout.gap) j["gap"] = *layout.gap;
  return j;
}

inline Layout layout_from_json(const nlohmann::json& j) {
  Layout layout;
  if (!j.contains("dies") || !j["dies"].is_array())
    throw Error("invalid-layout", "missing 'dies' array");
  try {
    for (const auto& d : j["dies"]) {
      layout.dies.push_back({d.at("id").get<std::string>(), d.at("min_corner").get<Vec3>(),
                             d.at("dimensions").get<Vec3>()});
    }
    if (j.contains("gap")) layout.gap = j["gap"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-layout", e.what());
  }
  validate(layout);
  return layout;
}

inline Layout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open layout file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-layout", path + ": " + e.what());
  }
  return layout_from_json(j);
}

}  // namespace diesep
