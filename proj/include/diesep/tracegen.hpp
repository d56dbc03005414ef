#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "diesep/coincidence.hpp"
#include "diesep/error.hpp"
#include "diesep/geometry.hpp"
#include "diesep/mkid.hpp"
#include "diesep/random.hpp"

namespace diesep {

/// Instantaneous downward jump of f0 by `peak_shift` at `t0`, relaxing with
/// time constant `tau`.
struct BurstEvent {
  double t0 = 0.0;          // s
  double peak_shift = 0.0;  // Hz
  double tau = 0.0;         // s
  std::string die_id;
};

struct TraceConfig {
  double sample_rate = 1e6;  // Hz
  double duration = 10e-3;   // s
  double noise_sigma = 0.0;  // per quadrature, in S21 units
  std::optional<double> probe_freq;  // default: the channel's f0
  double responsivity = 1.0;         // scales every peak_shift
};

inline void validate(const TraceConfig& cfg) {
  if (!(cfg.sample_rate > 0.0)) throw Error("invalid-config", "sample_rate must be > 0");
  if (!(cfg.duration > 0.0)) throw Error("invalid-config", "duration must be > 0");
  if (!(cfg.noise_sigma >= 0.0)) throw Error("invalid-config", "noise_sigma must be >= 0");
  if (!(cfg.responsivity > 0.0)) throw Error("invalid-config", "responsivity must be > 0");
}

inline std::size_t sample_count(const TraceConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.duration * cfg.sample_rate));
}

/// Uniformly sampled I/Q series; sample k is at t = k / sample_rate.
struct ChannelTrace {
  std::string label;
  double sample_rate = 0.0;
  std::vector<double> i_vals;
  std::vector<double> q_vals;

  std::size_t size() const { return i_vals.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) / sample_rate; }
  Complex at(std::size_t k) const { return {i_vals[k], q_vals[k]}; }
};

namespace detail {
/// exp(-x) is exactly 0.0 in double precision beyond this.
inline constexpr double kExpUnderflow = 746.0;
}

/// Builds one channel's I/Q trace: f0(t) = f0 - sum of active burst shifts
/// (summed in onset order), S21 evaluated at the probe frequency, plus white
/// Gaussian noise per quadrature from a stream seeded with `seed`.
inline ChannelTrace synthesize_trace(const MkidParams& params, std::span<const BurstEvent> events,
                                     const TraceConfig& cfg, std::uint64_t seed) {
  validate(params);
  validate(cfg);
  for (const auto& e : events) {
    if (!(e.t0 >= 0.0 && e.t0 <= cfg.duration))
      throw Error("event-out-of-window", "burst at t0 = " + std::to_string(e.t0) + " s");
    if (!(e.peak_shift > 0.0) || !(e.tau > 0.0))
      throw Error("invalid-event", "burst needs peak_shift > 0 and tau > 0");
  }
  std::vector<BurstEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const BurstEvent& a, const BurstEvent& b) { return a.t0 < b.t0; });

  const std::size_t n = sample_count(cfg);
  const double fs = cfg.sample_rate;
  const double probe = cfg.probe_freq.value_or(params.f0);
  const double kappa = params.kappa();

  std::vector<std::size_t> end_sample(sorted.size());
  for (std::size_t e = 0; e < sorted.size(); ++e) {
    const double t_end = sorted[e].t0 + detail::kExpUnderflow * sorted[e].tau;
    end_sample[e] = static_cast<std::size_t>(std::min(std::ceil(t_end * fs) + 1.0, 1e18));
  }

  ChannelTrace trace{params.label, fs, std::vector<double>(n), std::vector<double>(n)};
  Stream rng = make_stream(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    while (hi < sorted.size() && t >= sorted[hi].t0) ++hi;
    while (lo < hi && k >= end_sample[lo]) ++lo;
    double shift = 0.0;
    for (std::size_t e = lo; e < hi; ++e) {
      if (k >= end_sample[e]) continue;
      shift += sorted[e].peak_shift * cfg.responsivity * std::exp(-(t - sorted[e].t0) / sorted[e].tau);
    }
    const Complex s = 1.0 - params.kappa_e / Complex(kappa, 2.0 * (probe - (params.f0 - shift)));
    double i = s.real();
    double q = s.imag();
    if (cfg.noise_sigma > 0.0) {
      i += cfg.noise_sigma * noise(rng);
      q += cfg.noise_sigma * noise(rng);
    }
    trace.i_vals[k] = i;
    trace.q_vals[k] = q;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// End-to-end experiment

struct ChannelSpec {
  MkidParams mkid;
  std::string die_id;
};

/// Log-normal peak shift and recovery constant, each clamped to its range.
struct BurstDistribution {
  double median_shift = 5e3;  // Hz
  double shift_log_sigma = 1.0;
  double min_shift = 0.0;
  double max_shift = std::numeric_limits<double>::infinity();
  double median_tau = 1e-3;  // s
  double tau_log_sigma = 0.0;
};

struct ExperimentConfig {
  AngularModel flux = AngularModel::Isotropic;
  std::size_t n_particles = 0;
  BurstDistribution bursts;
  TraceConfig trace;
  double lead_in = 10e-3;  // quiet leading window for baseline estimation, s
};

struct ParticleRecord {
  std::size_t index = 0;
  double t0 = 0.0;
  std::vector<std::string> dies;  // first-entry die first
};

/// One burst on one die, seen by every channel of that die.
struct GroundTruthEvent {
  std::size_t particle = 0;
  BurstEvent burst;
  std::vector<std::string> channels;
};

struct GroundTruthLog {
  std::vector<ParticleRecord> particles;
  std::vector<GroundTruthEvent> events;

  std::size_t multi_die_count() const {
    return static_cast<std::size_t>(std::count_if(particles.begin(), particles.end(),
                                                  [](const auto& p) { return p.dies.size() >= 2; }));
  }
};

struct ExperimentResult {
  std::vector<ChannelTrace> traces;
  GroundTruthLog truth;
};

/// Onset time of particle k: lead_in + (k + 0.02 + 0.18 u) * slot with
/// slot = (duration - lead_in) / n_particles, so onsets are at least 0.82 slot
/// apart and every burst has at least 0.8 slot to recover.
inline double particle_onset(std::size_t k, double u, const ExperimentConfig& cfg) {
  const double slot = (cfg.trace.duration - cfg.lead_in) / static_cast<double>(cfg.n_particles);
  return cfg.lead_in + (static_cast<double>(k) + 0.02 + 0.18 * u) * slot;
}

/// Samples particles from the layout's entry model, turns each die crossing
/// into a burst on all of that die's channels, and synthesizes every channel.
///
/// Streams: particles draw from make_stream(seed, {0}); channel c is
/// synthesized with the seed make_stream(seed, {1, c})(), its first output.
inline ExperimentResult simulate_experiment(const Layout& layout,
                                            const std::vector<ChannelSpec>& channels,
                                            const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(layout);
  validate(cfg.trace);
  for (const auto& ch : channels) {
    if (!layout.find(ch.die_id))
      throw Error("unmapped-channel", "channel '" + ch.mkid.label + "' names unknown die '" +
                                          ch.die_id + "'");
  }
  std::map<std::string, std::vector<std::string>> die_channels;
  for (const auto& ch : channels) die_channels[ch.die_id].push_back(ch.mkid.label);
  for (const auto& die : layout.dies)
    if (die_channels[die.id].empty())
      throw Error("unmapped-die", "die '" + die.id + "' has no MKID channel");
  if (cfg.n_particles > 0 && !(cfg.trace.duration > cfg.lead_in))
    throw Error("invalid-config", "duration must exceed lead_in");

  const ParticleSource source(layout, cfg.flux);
  const auto& bd = cfg.bursts;
  Stream rng = make_stream(seed, {0});
  std::lognormal_distribution<double> shift_dist(std::log(bd.median_shift), bd.shift_log_sigma);
  std::lognormal_distribution<double> tau_dist(std::log(bd.median_tau), bd.tau_log_sigma);

  ExperimentResult result;
  for (std::size_t k = 0; k < cfg.n_particles; ++k) {
    ParticleRecord rec;
    rec.index = k;
    rec.t0 = particle_onset(k, uniform01(rng), cfg);
    const std::size_t first = source.sample_die(rng);
    const Ray ray = source.sample_entry(first, rng);
    std::vector<std::size_t> struck{first};
    for (auto o : source.forward_hits(first, ray)) struck.push_back(o);
    for (auto d : struck) {
      const std::string& id = layout.dies[d].id;
      rec.dies.push_back(id);
      BurstEvent burst;
      burst.t0 = rec.t0;
      burst.die_id = id;
      burst.peak_shift = std::clamp(shift_dist(rng), bd.min_shift, bd.max_shift);
      burst.tau = bd.tau_log_sigma > 0.0 ? tau_dist(rng) : bd.median_tau;
      result.truth.events.push_back({k, burst, die_channels[id]});
    }
    result.truth.particles.push_back(std::move(rec));
  }

  for (std::size_t c = 0; c < channels.size(); ++c) {
    std::vector<BurstEvent> events;
    for (const auto& e : result.truth.events)
      if (e.burst.die_id == channels[c].die_id) events.push_back(e.burst);
    result.traces.push_back(
        synthesize_trace(channels[c].mkid, events, cfg.trace, make_stream(seed, {1, c})()));
  }
  return result;
}

}  // namespace diesep
