#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diesep/error.hpp"
#include "diesep/least_squares.hpp"
#include "diesep/mkid.hpp"
#include "diesep/tracegen.hpp"

namespace diesep {

// ---------------------------------------------------------------------------
// Baseline

struct Baseline {
  double mean_i = 0.0;  // median of I over the window
  double mean_q = 0.0;  // median of Q over the window
  double sigma_i = 0.0;
  double sigma_q = 0.0;
  double sigma = 0.0;  // per-quadrature scale, sqrt((sigma_i^2 + sigma_q^2) / 2)

  Complex center() const { return {mean_i, mean_q}; }
};

namespace detail {
inline double median_inplace(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

// Median and normal-consistent MAD (1.4826 * median |x - median|).
inline std::pair<double, double> median_mad(const double* first, std::size_t n) {
  std::vector<double> v(first, first + n);
  const double med = median_inplace(v);
  for (auto& x : v) x = std::abs(x - med);
  return {med, 1.4826 * median_inplace(v)};
}
}  // namespace detail

/// Robust baseline over the leading `window` seconds of the trace.
inline Baseline baseline_stats(const ChannelTrace& trace, double window) {
  const auto n = std::min<std::size_t>(
      trace.size(), static_cast<std::size_t>(std::max(0.0, std::floor(window * trace.sample_rate))));
  if (n < 100)
    throw Error("insufficient-baseline",
                "baseline window holds " + std::to_string(n) + " samples, need >= 100");
  Baseline b;
  std::tie(b.mean_i, b.sigma_i) = detail::median_mad(trace.i_vals.data(), n);
  std::tie(b.mean_q, b.sigma_q) = detail::median_mad(trace.q_vals.data(), n);
  b.sigma = std::sqrt(0.5 * (b.sigma_i * b.sigma_i + b.sigma_q * b.sigma_q));
  return b;
}

// ---------------------------------------------------------------------------
// Triggering

enum class TriggerMetric { Euclidean, PerQuadrature };

inline const char* to_string(TriggerMetric m) {
  return m == TriggerMetric::Euclidean ? "euclidean" : "per-quadrature";
}

struct TriggerOptions {
  double k_sigma = 5.0;
  double dead_time = 10e-3;  // s after the trigger sample
  TriggerMetric metric = TriggerMetric::Euclidean;
};

struct Detection {
  std::string channel;
  double t_trigger = 0.0;
  double peak_dev = 0.0;  // max I/Q distance from the baseline center within the dead window
  std::optional<double> t_recovered;
  std::size_t first_sample = 0;
  std::size_t peak_sample = 0;
  std::size_t last_above_sample = 0;  // last above-threshold sample within the dead window
};

/// Deviation of sample k in units of the threshold scale.
inline double excursion(const ChannelTrace& trace, std::size_t k, const Baseline& b,
                        TriggerMetric metric) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double di = trace.i_vals[k] - b.mean_i;
  const double dq = trace.q_vals[k] - b.mean_q;
  auto scaled = [&](double dev, double sigma) {
    if (sigma > 0.0) return dev / sigma;
    return dev > 0.0 ? inf : 0.0;
  };
  if (metric == TriggerMetric::Euclidean) return scaled(std::hypot(di, dq), b.sigma);
  return std::max(scaled(std::abs(di), b.sigma_i), scaled(std::abs(dq), b.sigma_q));
}

/// A Detection opens at the first sample whose excursion exceeds k_sigma and
/// absorbs every sample up to `dead_time` after it; the next crossing after
/// that opens a new one. Anchoring the window at the trigger (no extension by
/// later crossings) makes the detection count non-increasing in k_sigma.
/// t_recovered is the first sample after the trigger below k_sigma / 2.
inline std::vector<Detection> threshold_trigger(const ChannelTrace& trace, const Baseline& b,
                                                const TriggerOptions& opt) {
  if (!(opt.k_sigma > 0.0)) throw Error("invalid-argument", "k_sigma must be > 0");
  if (!(opt.dead_time >= 0.0)) throw Error("invalid-argument", "dead_time must be >= 0");
  const auto dead = static_cast<std::size_t>(std::llround(opt.dead_time * trace.sample_rate));
  const double hysteresis = 0.5 * opt.k_sigma;

  std::vector<Detection> out;
  bool active = false;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (active && k - out.back().first_sample > dead) active = false;
    const double e = excursion(trace, k, b, opt.metric);
    if (active) {
      Detection& d = out.back();
      const double dev = std::abs(trace.at(k) - b.center());
      if (dev > d.peak_dev) {
        d.peak_dev = dev;
        d.peak_sample = k;
      }
      if (e > opt.k_sigma) d.last_above_sample = k;
    } else if (e > opt.k_sigma) {
      out.push_back({trace.label, trace.time(k), std::abs(trace.at(k) - b.center()), std::nullopt, k, k, k});
      active = true;
    }
  }
  for (auto& d : out) {
    for (std::size_t k = d.first_sample + 1; k < trace.size(); ++k) {
      if (excursion(trace, k, b, opt.metric) < hysteresis) {
        d.t_recovered = trace.time(k);
        break;
      }
    }
  }
  return out;
}

/// Expected per-sample false-trigger probability on white Gaussian noise.
/// Euclidean: Rayleigh tail exp(-k^2/2). Per-quadrature: 1 - (1 - erfc(k/sqrt2))^2.
inline double noise_trigger_probability(double k_sigma, TriggerMetric metric) {
  if (metric == TriggerMetric::Euclidean) return std::exp(-0.5 * k_sigma * k_sigma);
  const double one = std::erfc(k_sigma / std::numbers::sqrt2);
  return 1.0 - (1.0 - one) * (1.0 - one);
}

// ---------------------------------------------------------------------------
// Cross-channel coincidence

enum class EventClass { SingleDie, DoubleDie, Partial };

inline const char* to_string(EventClass c) {
  switch (c) {
    case EventClass::SingleDie: return "single-die";
    case EventClass::DoubleDie: return "double-die";
    case EventClass::Partial: return "partial";
  }
  return "partial";
}

struct DetectionRef {
  std::size_t channel_index = 0;
  std::size_t detection_index = 0;
};

struct CoincidentEvent {
  std::vector<std::string> channels;  // sorted, unique
  std::vector<std::string> dies;      // sorted, unique
  double t_ref = 0.0;                 // earliest trigger
  EventClass cls = EventClass::Partial;
  std::vector<DetectionRef> members;
};

using DieMap = std::map<std::string, std::string>;  // channel label -> die id

/// Groups detections greedily in time: the earliest ungrouped trigger opens an
/// event that takes every detection within `window` of it. Classification:
/// single-die when every channel of exactly one die fired, double-die when
/// every channel of exactly two dies fired, partial otherwise.
inline std::vector<CoincidentEvent> coincidence_group(
    const std::vector<std::vector<Detection>>& per_channel, double window, const DieMap& die_map) {
  if (!(window > 0.0)) throw Error("invalid-argument", "coincidence window must be > 0");
  std::map<std::string, std::set<std::string>> die_channels;
  for (const auto& [ch, die] : die_map) die_channels[die].insert(ch);

  struct Item {
    double t;
    const std::string* channel;
    DetectionRef ref;
  };
  std::vector<Item> items;
  for (std::size_t c = 0; c < per_channel.size(); ++c) {
    for (std::size_t d = 0; d < per_channel[c].size(); ++d) {
      const auto& det = per_channel[c][d];
      if (!die_map.count(det.channel))
        throw Error("unmapped-channel", "channel '" + det.channel + "' has no die");
      items.push_back({det.t_trigger, &det.channel, {c, d}});
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.t < b.t; });

  std::vector<CoincidentEvent> events;
  for (std::size_t i = 0; i < items.size();) {
    CoincidentEvent ev;
    ev.t_ref = items[i].t;
    std::set<std::string> channels;
    std::size_t j = i;
    for (; j < items.size() && items[j].t - ev.t_ref <= window; ++j) {
      channels.insert(*items[j].channel);
      ev.members.push_back(items[j].ref);
    }
    std::set<std::string> dies;
    for (const auto& ch : channels) dies.insert(die_map.at(ch));
    std::size_t complete = 0;
    for (const auto& die : dies) {
      const auto& all = die_channels[die];
      if (std::includes(channels.begin(), channels.end(), all.begin(), all.end())) ++complete;
    }
    if (complete == dies.size() && dies.size() == 1) {
      ev.cls = EventClass::SingleDie;
    } else if (complete == dies.size() && dies.size() == 2) {
      ev.cls = EventClass::DoubleDie;
    } else {
      ev.cls = EventClass::Partial;
    }
    ev.channels.assign(channels.begin(), channels.end());
    ev.dies.assign(dies.begin(), dies.end());
    events.push_back(std::move(ev));
    i = j;
  }
  return events;
}

// ---------------------------------------------------------------------------
// Recovery time

/// Im[1 / (1 - S21)] equals 2 (f - f0) / kappa_e for the hanger model, so its
/// deviation from the baseline value is exactly proportional to the resonance
/// shift, whatever the shift size.
inline double frequency_proxy(Complex s) { return (1.0 / (1.0 - s)).imag(); }

struct RecoveryOptions {
  double fit_window = 5e-3;       // s after the peak
  std::optional<double> end_time;  // e.g. the next detection's trigger
  std::size_t min_samples = 50;
  bool allow_short = false;  // return a flagged fit instead of failing
};

struct RecoveryFit {
  double tau = 0.0;        // s
  double amplitude = 0.0;  // proxy units at the peak sample
  std::size_t n_samples = 0;
  bool short_fit = false;
};

/// Fits A exp(-(t - t_peak) / tau) to the post-peak frequency-shift proxy,
/// each residual weighted by |1 - S21|^2 to undo the proxy's noise gain.
inline RecoveryFit recovery_time(const ChannelTrace& trace, const Baseline& b, const Detection& det,
                                 const RecoveryOptions& opt = {}) {
  const Complex base = b.center();
  if (std::abs(1.0 - base) < 1e-12)
    throw Error("fit-failed", "baseline sits at S21 = 1, no resonance to invert");
  const double y_base = frequency_proxy(base);

  const std::size_t last = std::min(det.last_above_sample, trace.size() - 1);
  std::size_t peak = det.first_sample;
  double y_peak = 0.0;
  for (std::size_t k = det.first_sample; k <= last; ++k) {
    const double y = frequency_proxy(trace.at(k)) - y_base;
    if (std::abs(y) > std::abs(y_peak)) {
      y_peak = y;
      peak = k;
    }
  }

  const double fs = trace.sample_rate;
  double end = std::min(static_cast<double>(trace.size()),
                        static_cast<double>(peak) + std::floor(opt.fit_window * fs));
  if (opt.end_time) end = std::min(end, std::ceil(*opt.end_time * fs));
  const std::size_t stop = end > static_cast<double>(peak) ? static_cast<std::size_t>(end) : peak;
  const std::size_t n = stop - peak;

  RecoveryFit fit;
  fit.n_samples = n;
  if (n < opt.min_samples) {
    if (!opt.allow_short || n < 3)
      throw Error("fit-failed", "only " + std::to_string(n) + " post-peak samples");
    fit.short_fit = true;
  }

  std::vector<double> dt(n), y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Complex s = trace.at(peak + i);
    dt[i] = static_cast<double>(i) / fs;
    y[i] = frequency_proxy(s) - y_base;
    w[i] = std::norm(1.0 - s);
  }

  double tau0 = static_cast<double>(n) / (3.0 * fs);
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(y[i]) < std::abs(y_peak) / std::numbers::e) {
      tau0 = std::max(dt[i], 1.0 / fs);
      break;
    }
  }

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double amp = p[0];
    const double tau = std::exp(p[1]);
    r.resize(static_cast<Eigen::Index>(n));
    J.resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(-dt[i] / tau);
      const auto row = static_cast<Eigen::Index>(i);
      r[row] = w[i] * (amp * e - y[i]);
      J(row, 0) = w[i] * e;
      J(row, 1) = w[i] * amp * e * dt[i] / tau;
    }
  };
  Eigen::VectorXd p0(2);
  p0 << y_peak, std::log(tau0);
  const LmResult lm = levenberg_marquardt(model, p0);
  if (!lm.converged || !std::isfinite(lm.params[1]))
    throw Error("fit-failed", "exponential recovery fit did not converge");
  fit.amplitude = lm.params[0];
  fit.tau = std::exp(lm.params[1]);
  return fit;
}

// ---------------------------------------------------------------------------
// Statistics and plotting helpers

struct BurstStatistics {
  std::size_t n_total = 0;
  std::size_t n_single = 0;
  std::size_t n_double = 0;
  std::size_t n_partial = 0;
  double fraction_double = 0.0;  // n_double / n_total, 0 when empty
};

inline BurstStatistics burst_statistics(const std::vector<EventClass>& classes) {
  BurstStatistics s;
  for (auto c : classes) {
    ++s.n_total;
    if (c == EventClass::SingleDie) ++s.n_single;
    if (c == EventClass::DoubleDie) ++s.n_double;
    if (c == EventClass::Partial) ++s.n_partial;
  }
  s.fraction_double = s.n_total ? static_cast<double>(s.n_double) / static_cast<double>(s.n_total) : 0.0;
  return s;
}

inline BurstStatistics burst_statistics(const std::vector<CoincidentEvent>& events) {
  std::vector<EventClass> classes;
  for (const auto& e : events) classes.push_back(e.cls);
  return burst_statistics(classes);
}

/// Unwrapped S21 phase relative to the baseline phase.
inline std::vector<double> phase_deviation(const ChannelTrace& trace, const Baseline& b) {
  std::vector<double> out(trace.size());
  const Complex ref = std::conj(b.center());
  double offset = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const double raw = std::arg(trace.at(k) * ref);
    if (k > 0) {
      const double jump = raw - prev;
      if (jump > std::numbers::pi) offset -= 2.0 * std::numbers::pi;
      if (jump < -std::numbers::pi) offset += 2.0 * std::numbers::pi;
    }
    prev = raw;
    out[k] = raw + offset;
  }
  return out;
}

/// Phase deviation over [begin, end) scaled so its largest-magnitude sample is 1.
inline std::vector<double> phase_normalize(const ChannelTrace& trace, const Baseline& b,
                                           std::size_t begin = 0,
                                           std::size_t end = std::numeric_limits<std::size_t>::max()) {
  end = std::min(end, trace.size());
  if (begin >= end) throw Error("invalid-argument", "empty normalization range");
  const auto full = phase_deviation(trace, b);
  std::vector<double> out(full.begin() + static_cast<std::ptrdiff_t>(begin),
                          full.begin() + static_cast<std::ptrdiff_t>(end));
  double peak = 0.0;
  for (double v : out)
    if (std::abs(v) > std::abs(peak)) peak = v;
  if (peak == 0.0) throw Error("degenerate-normalization", "phase deviation is identically zero");
  for (auto& v : out) v /= peak;
  return out;
}

// ---------------------------------------------------------------------------
// Whole-run analysis

struct AnalysisOptions {
  double baseline_window = 10e-3;  // s
  TriggerOptions trigger;
  double coincidence_window = 100e-6;  // s
};

struct AnalysisResult {
  std::vector<Baseline> baselines;
  std::vector<std::vector<Detection>> detections;  // per channel, same order as traces
  std::vector<CoincidentEvent> events;
  BurstStatistics stats;
};

inline AnalysisResult analyze(const std::vector<ChannelTrace>& traces, const DieMap& die_map,
                              const AnalysisOptions& opt) {
  AnalysisResult r;
  for (const auto& t : traces) {
    r.baselines.push_back(baseline_stats(t, opt.baseline_window));
    r.detections.push_back(threshold_trigger(t, r.baselines.back(), opt.trigger));
  }
  r.events = coincidence_group(r.detections, opt.coincidence_window, die_map);
  r.stats = burst_statistics(r.events);
  return r;
}

}  // namespace diesep
