#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diesep/error.hpp"
#include "diesep/tracegen.hpp"

namespace diesep {

// ---------------------------------------------------------------------------
// CSV: optional `#` comment lines, header `t,I,Q`, one row per sample, values
// printed with 17 significant digits.

inline void write_trace_csv(const std::string& path, const ChannelTrace& trace,
                            const std::vector<std::string>& comments = {}) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("io-error", "cannot write '" + path + "'");
  for (const auto& c : comments) std::fprintf(f, "# %s\n", c.c_str());
  std::fputs("t,I,Q\n", f);
  for (std::size_t k = 0; k < trace.size(); ++k)
    std::fprintf(f, "%.17g,%.17g,%.17g\n", trace.time(k), trace.i_vals[k], trace.q_vals[k]);
  std::fclose(f);
}

/// Reads a CSV trace. When `sample_rate` is not positive it is inferred from
/// the first and last timestamps.
inline ChannelTrace read_trace_csv(const std::string& path, const std::string& label,
                                   double sample_rate = 0.0) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot read '" + path + "'");
  ChannelTrace trace;
  trace.label = label;
  double t_first = 0.0, t_last = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("t,", 0) == 0) continue;
    double t, i, q;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &i, &q) != 3)
      throw Error("invalid-trace", path + ": malformed row '" + line + "'");
    if (trace.i_vals.empty()) t_first = t;
    t_last = t;
    trace.i_vals.push_back(i);
    trace.q_vals.push_back(q);
  }
  if (sample_rate > 0.0) {
    trace.sample_rate = sample_rate;
  } else {
    if (trace.size() < 2 || !(t_last > t_first))
      throw Error("invalid-trace", path + ": cannot infer sample rate");
    trace.sample_rate = static_cast<double>(trace.size() - 1) / (t_last - t_first);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Binary columnar format, little-endian, fixed layout:
//
//   offset  size  field
//   0       4     magic "DSTR"
//   4       4     u32 version (1)
//   8       8     u64 sample count n
//   16      8     f64 sample rate (Hz)
//   24      4     u32 label length L
//   28      L     label bytes (UTF-8, no terminator)
//   28+L    8n    f64 I values
//   28+L+8n 8n    f64 Q values

namespace detail {
template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("invalid-trace", "truncated binary trace");
  return to_little(v);
}
}  // namespace detail

inline constexpr char kBinaryMagic[4] = {'D', 'S', 'T', 'R'};

inline void write_trace_binary(const std::string& path, const ChannelTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot write '" + path + "'");
  out.write(kBinaryMagic, 4);
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint64_t>(out, trace.size());
  detail::put<double>(out, trace.sample_rate);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.label.size()));
  out.write(trace.label.data(), static_cast<std::streamsize>(trace.label.size()));
  for (double v : trace.i_vals) detail::put(out, v);
  for (double v : trace.q_vals) detail::put(out, v);
}

inline ChannelTrace read_trace_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot read '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBinaryMagic, 4) != 0)
    throw Error("invalid-trace", path + ": bad magic");
  if (detail::get<std::uint32_t>(in) != 1) throw Error("invalid-trace", path + ": bad version");
  const auto n = detail::get<std::uint64_t>(in);
  ChannelTrace trace;
  trace.sample_rate = detail::get<double>(in);
  trace.label.resize(detail::get<std::uint32_t>(in));
  in.read(trace.label.data(), static_cast<std::streamsize>(trace.label.size()));
  trace.i_vals.resize(n);
  trace.q_vals.resize(n);
  for (auto& v : trace.i_vals) v = detail::get<double>(in);
  for (auto& v : trace.q_vals) v = detail::get<double>(in);
  return trace;
}

// ---------------------------------------------------------------------------
// Channel map: { "sample_rate": 1e6,
//                "channels": [ { "label": "D4", "die": "right", "file": "D4.csv" }, ... ] }
// "sample_rate" and "file" are optional.

struct ChannelEntry {
  std::string label;
  std::string die;
  std::string file;
};

struct ChannelMap {
  std::vector<ChannelEntry> channels;
  double sample_rate = 0.0;

  std::map<std::string, std::string> die_of() const {
    std::map<std::string, std::string> m;
    for (const auto& c : channels) m[c.label] = c.die;
    return m;
  }
};

inline nlohmann::json to_json(const ChannelMap& map) {
  nlohmann::json j;
  if (map.sample_rate > 0.0) j["sample_rate"] = map.sample_rate;
  j["channels"] = nlohmann::json::array();
  for (const auto& c : map.channels) {
    nlohmann::json e{{"label", c.label}, {"die", c.die}};
    if (!c.file.empty()) e["file"] = c.file;
    j["channels"].push_back(e);
  }
  return j;
}

inline ChannelMap channel_map_from_json(const nlohmann::json& j) {
  ChannelMap map;
  try {
    if (j.contains("sample_rate")) map.sample_rate = j["sample_rate"].get<double>();
    for (const auto& c : j.at("channels"))
      map.channels.push_back({c.at("label").get<std::string>(), c.at("die").get<std::string>(),
                              c.value("file", std::string{})});
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-channel-map", e.what());
  }
  return map;
}

inline ChannelMap load_channel_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open channel map '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-channel-map", path + ": " + e.what());
  }
  return channel_map_from_json(j);
}

// ---------------------------------------------------------------------------
// Ground truth

inline nlohmann::json to_json(const GroundTruthLog& log) {
  nlohmann::json j;
  j["particles"] = nlohmann::json::array();
  for (const auto& p : log.particles)
    j["particles"].push_back({{"index", p.index}, {"t0", p.t0}, {"dies", p.dies}});
  j["events"] = nlohmann::json::array();
  for (const auto& e : log.events) {
    j["events"].push_back({{"particle", e.particle},
                           {"t0", e.burst.t0},
                           {"peak_shift_hz", e.burst.peak_shift},
                           {"tau_s", e.burst.tau},
                           {"die", e.burst.die_id},
                           {"channels", e.channels}});
  }
  j["n_particles"] = log.particles.size();
  j["n_multi_die"] = log.multi_die_count();
  return j;
}

inline GroundTruthLog ground_truth_from_json(const nlohmann::json& j) {
  GroundTruthLog log;
  for (const auto& p : j.at("particles"))
    log.particles.push_back({p.at("index").get<std::size_t>(), p.at("t0").get<double>(),
                             p.at("dies").get<std::vector<std::string>>()});
  for (const auto& e : j.at("events")) {
    GroundTruthEvent ev;
    ev.particle = e.at("particle").get<std::size_t>();
    ev.burst = {e.at("t0").get<double>(), e.at("peak_shift_hz").get<double>(),
                e.at("tau_s").get<double>(), e.at("die").get<std::string>()};
    ev.channels = e.at("channels").get<std::vector<std::string>>();
    log.events.push_back(std::move(ev));
  }
  return log;
}

}  // namespace diesep
