#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "diesep/coincidence.hpp"
#include "diesep/detect.hpp"
#include "diesep/json_io.hpp"
#include "diesep/layout_io.hpp"
#include "diesep/mkid.hpp"
#include "diesep/resfit.hpp"
#include "diesep/trace_io.hpp"
#include "diesep/tracegen.hpp"

#ifndef DIESEP_DATA_DIR
#define DIESEP_DATA_DIR "data"
#endif

namespace diesep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad user input: unknown config key, missing file, inconsistent options. Exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string data_path(const char* name) { return (fs::path(DIESEP_DATA_DIR) / name).string(); }

// Reference tally the report compares against.
inline constexpr std::size_t kReferenceBursts = 352;
inline constexpr std::size_t kReferenceDouble = 10;
inline constexpr double kReferencePredictedRatio = 0.040;

struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string config;
  bool deterministic = false;
};

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", std::string("cannot open ") + what + " '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("invalid-json", path + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline std::string scalar_to_arg(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 1e15) return std::to_string(static_cast<long long>(d));
  }
  return v.dump();
}

/// Applies `--config` values to every option the command line left unset.
inline void apply_config(CLI::App& sub, const std::string& path) {
  json j;
  try {
    j = read_json(path, "config file");
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, val] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("config: unknown key '" + key + "' for '" + sub.get_name() + "'");
    if (opt->count() > 0) continue;
    std::vector<std::string> args;
    if (val.is_array()) {
      for (const auto& v : val) args.push_back(scalar_to_arg(v));
    } else if (val.is_object() || val.is_null()) {
      throw ConfigError("config: key '" + key + "' must be a scalar or an array");
    } else {
      args.push_back(scalar_to_arg(val));
    }
    try {
      for (const auto& a : args) opt->add_result(a);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config: key '" + key + "': " + e.what());
    }
  }
}

inline void require_file(const char* key, const std::string& path) {
  if (!fs::is_regular_file(path))
    throw ConfigError(std::string("--") + key + ": file not found: '" + path + "'");
}

inline json envelope(const char* subcommand, const Common& c, json config) {
  config["seed"] = c.seed;
  config["deterministic"] = c.deterministic;
  json j{{"tool", "diesep"}, {"subcommand", subcommand}, {"seed", c.seed}, {"config", std::move(config)}};
  if (!c.deterministic) j["generated_at"] = utc_now();
  return j;
}

inline std::vector<std::string> comment_lines(const json& env) {
  return {std::string("diesep ") + env.at("subcommand").get<std::string>() +
              " seed=" + std::to_string(env.at("seed").get<std::uint64_t>()),
          "config: " + env.at("config").dump()};
}

inline fs::path out_dir(const Common& c) {
  fs::create_directories(c.out_dir);
  return fs::path(c.out_dir);
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline AngularModel angular_from(const std::string& s) {
  return s == "cos" ? AngularModel::CosZenith : AngularModel::Isotropic;
}

/// Observed double-die fraction against a predicted one, binomial sigma over n events.
inline json binomial_comparison(double predicted, std::size_t n, double observed) {
  const double sigma = n ? std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(n)) : 0.0;
  json j{{"predicted_fraction_double", predicted},
         {"observed_fraction_double", observed},
         {"n_total", n},
         {"binomial_sigma", sigma}};
  j["z"] = sigma > 0.0 ? json((observed - predicted) / sigma) : json();
  j["within_3_sigma"] = sigma > 0.0 ? std::abs(observed - predicted) <= 3.0 * sigma : observed == predicted;
  return j;
}

struct FitRow {
  FitResult fit;
  bool converged = true;
  std::optional<MkidParams> reference;
};

inline json to_json(const FitRow& r) {
  json j = diesep::to_json(r.fit);
  j["converged"] = r.converged;
  if (r.reference) {
    j["reference"] = diesep::to_json(*r.reference);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    j["rel_error"] = {{"f0", rel(r.fit.params.f0, r.reference->f0)},
                      {"kappa_i", rel(r.fit.params.kappa_i, r.reference->kappa_i)},
                      {"kappa_e", rel(r.fit.params.kappa_e, r.reference->kappa_e)}};
  }
  return j;
}

inline FitRow fit_one(const std::string& label, const Sweep& sweep, const FitOptions& opt,
                      const std::vector<MkidParams>& table) {
  FitRow row;
  try {
    row.fit = fit_s21_sweep(sweep, opt);
  } catch (const FitFailed& e) {
    row.fit = e.best();
    row.converged = false;
  }
  row.fit.params.label = label;
  for (const auto& p : table)
    if (p.label == label) row.reference = p;
  return row;
}

/// Synthetic sweep for row i of the table, noise stream (seed, i).
inline Sweep table_sweep(const std::vector<MkidParams>& table, std::size_t i, int points,
                         double span, double noise, std::uint64_t seed) {
  return synthetic_sweep(table[i], points, span, noise, make_stream(seed, {i})());
}

inline std::string fit_table_text(const std::vector<FitRow>& rows) {
  std::ostringstream os;
  os << "  label   f0 [GHz]      kappa_i [kHz]  kappa_e [kHz]   ref f0 [GHz]  ref kappa_i  ref kappa_e\n";
  for (const auto& r : rows) {
    char buf[256];
    const auto& p = r.fit.params;
    std::snprintf(buf, sizeof buf, "  %-6s  %-12.7f  %-13.4f  %-14.4f", p.label.c_str(), p.f0 / 1e9,
                  p.kappa_i / 1e3, p.kappa_e / 1e3);
    os << buf;
    if (r.reference) {
      std::snprintf(buf, sizeof buf, "  %-12.5f  %-11.1f  %-11.1f", r.reference->f0 / 1e9,
                    r.reference->kappa_i / 1e3, r.reference->kappa_e / 1e3);
      os << buf;
    }
    if (!r.converged) os << "  (not converged)";
    os << '\n';
  }
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// coincidence

struct CoincidenceCmd {
  std::string layout = data_path("example_layout.json");
  std::string mode = "both";
  std::uint64_t n_rays = 1000000;
  std::string angular = "iso";
  int quad_points = 32;
  std::uint64_t batches = 16;
  unsigned threads = 0;

  void add(CLI::App* sub) {
    sub->add_option("--layout", layout, "Layout JSON")->capture_default_str();
    sub->add_option("--mode", mode, "analytic, mc or both")
        ->check(CLI::IsMember({"analytic", "mc", "both"}))
        ->capture_default_str();
    sub->add_option("--n-rays", n_rays, "Monte Carlo rays (>= 1e4)")->capture_default_str();
    sub->add_option("--angular", angular, "Flux model: iso or cos")
        ->check(CLI::IsMember({"iso", "cos"}))
        ->capture_default_str();
    sub->add_option("--quad-points", quad_points, "Gauss-Legendre points per face axis")
        ->check(CLI::Range(2, 4096))
        ->capture_default_str();
    sub->add_option("--batches", batches, "Monte Carlo batches per die")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads, 0 = all cores (result is independent of this)")
        ->capture_default_str();
  }

  json config() const {
    return {{"layout", layout}, {"mode", mode},       {"n-rays", n_rays},  {"angular", angular},
            {"quad-points", quad_points}, {"batches", batches}, {"threads", threads}};
  }

  void validate() const {
    detail::require_file("layout", layout);
    if (angular == "cos" && mode == "analytic")
      throw ConfigError("--angular: the analytic estimate covers the isotropic model only");
    if (mode != "analytic" && n_rays < 10000) throw ConfigError("--n-rays: must be >= 10000");
  }

  int execute(const Common& c) const {
    const Layout lay = load_layout(layout);
    json out = detail::envelope("coincidence", c, config());
    const QuadratureSpec quad{quad_points, quad_points, QuadratureRule::GaussLegendre};
    std::optional<CoincidenceReport> area;
    if (mode != "mc") {
      area = double_hit_probability(lay, quad, CombineMode::AreaWeighted);
      const auto literal = double_hit_probability(lay, quad, CombineMode::LiteralSum);
      out["analytic"] = {{"area_weighted", to_json(*area)}, {"literal_sum", to_json(literal)}};
    }
    if (mode != "analytic") {
      const auto mc = mc_double_hit(lay, n_rays, detail::angular_from(angular), c.seed,
                                    McOptions{batches, threads});
      out["monte_carlo"] = to_json(mc);
      if (area && angular == "iso") {
        const double diff = area->p_double - mc.p_double;
        const double z = *mc.mc_stderr > 0.0 ? diff / *mc.mc_stderr : 0.0;
        out["comparison"] = {{"difference", diff},
                             {"mc_stderr", *mc.mc_stderr},
                             {"z", z},
                             {"within_3_sigma", std::abs(z) <= 3.0}};
      }
    }
    detail::write_json(detail::out_dir(c) / "coincidence.json", out);
    std::cout << out.dump(2) << '\n';
    return 0;
  }
};

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  std::string layout = data_path("example_layout.json");
  std::string mkids = data_path("mkids.csv");
  std::string channels = data_path("channel_map.json");
  std::size_t n_particles = 50;
  double sample_rate = 1e5;
  double slot = 20e-3;
  double lead_in = 10e-3;
  double duration = 0.0;
  double noise_sigma = 2e-3;
  std::string flux = "iso";
  double median_shift = 5e3;
  double shift_log_sigma = 1.0;
  double min_shift = 500.0;
  double max_shift = 5e4;
  double tau = 1e-3;
  double tau_log_sigma = 0.0;
  double responsivity = 1.0;
  std::string format = "csv";

  void add(CLI::App* sub) {
    sub->add_option("--layout", layout, "Layout JSON")->capture_default_str();
    sub->add_option("--mkids", mkids, "Resonator table CSV")->capture_default_str();
    sub->add_option("--channels", channels, "Channel map JSON (channel -> die)")->capture_default_str();
    sub->add_option("--n-particles", n_particles, "Particles to inject")->capture_default_str();
    sub->add_option("--sample-rate", sample_rate, "Hz")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--slot", slot, "Seconds per particle slot")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--lead-in", lead_in, "Quiet leading window, s")->capture_default_str();
    sub->add_option("--duration", duration, "Trace length, s (0: lead-in + particles x slot)")
        ->capture_default_str();
    sub->add_option("--noise-sigma", noise_sigma, "Per-quadrature noise in S21 units")->capture_default_str();
    sub->add_option("--flux", flux, "iso or cos")->check(CLI::IsMember({"iso", "cos"}))->capture_default_str();
    sub->add_option("--median-shift", median_shift, "Median peak shift, Hz")->capture_default_str();
    sub->add_option("--shift-log-sigma", shift_log_sigma, "Log-normal width of the peak shift")
        ->capture_default_str();
    sub->add_option("--min-shift", min_shift, "Hz")->capture_default_str();
    sub->add_option("--max-shift", max_shift, "Hz")->capture_default_str();
    sub->add_option("--tau", tau, "Median recovery time, s")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--tau-log-sigma", tau_log_sigma, "Log-normal width of tau (0: fixed)")
        ->capture_default_str();
    sub->add_option("--responsivity", responsivity, "Scale on every peak shift")->capture_default_str();
    sub->add_option("--format", format, "csv or binary")
        ->check(CLI::IsMember({"csv", "binary"}))
        ->capture_default_str();
  }

  json config() const {
    return {{"layout", layout},
            {"mkids", mkids},
            {"channels", channels},
            {"n-particles", n_particles},
            {"sample-rate", sample_rate},
            {"slot", slot},
            {"lead-in", lead_in},
            {"duration", effective_duration()},
            {"noise-sigma", noise_sigma},
            {"flux", flux},
            {"median-shift", median_shift},
            {"shift-log-sigma", shift_log_sigma},
            {"min-shift", min_shift},
            {"max-shift", max_shift},
            {"tau", tau},
            {"tau-log-sigma", tau_log_sigma},
            {"responsivity", responsivity},
            {"format", format}};
  }

  double effective_duration() const {
    return duration > 0.0 ? duration : lead_in + static_cast<double>(n_particles) * slot;
  }

  void validate() const {
    detail::require_file("layout", layout);
    detail::require_file("mkids", mkids);
    detail::require_file("channels", channels);
    if (!(median_shift > 0.0)) throw ConfigError("--median-shift: must be > 0");
    if (!(min_shift <= max_shift)) throw ConfigError("--min-shift: must not exceed --max-shift");
    if (shift_log_sigma < 0.0) throw ConfigError("--shift-log-sigma: must be >= 0");
    if (tau_log_sigma < 0.0) throw ConfigError("--tau-log-sigma: must be >= 0");
    if (lead_in < 0.0) throw ConfigError("--lead-in: must be >= 0");
  }

  int execute(const Common& c) const {
    const Layout lay = load_layout(layout);
    const auto table = load_mkid_table(mkids);
    ChannelMap cmap = load_channel_map(channels);

    std::vector<ChannelSpec> specs;
    for (const auto& e : cmap.channels) specs.push_back({find_mkid(table, e.label), e.die});

    ExperimentConfig cfg;
    cfg.flux = detail::angular_from(flux);
    cfg.n_particles = n_particles;
    cfg.lead_in = lead_in;
    cfg.bursts = {median_shift, shift_log_sigma, min_shift, max_shift, tau, tau_log_sigma};
    cfg.trace.sample_rate = sample_rate;
    cfg.trace.duration = effective_duration();
    cfg.trace.noise_sigma = noise_sigma;
    cfg.trace.responsivity = responsivity;

    const ExperimentResult res = simulate_experiment(lay, specs, cfg, c.seed);
    const json env = detail::envelope("simulate", c, config());
    const fs::path dir = detail::out_dir(c);
    const auto comments = detail::comment_lines(env);

    ChannelMap written;
    written.sample_rate = sample_rate;
    for (std::size_t i = 0; i < res.traces.size(); ++i) {
      const auto& tr = res.traces[i];
      const std::string file = tr.label + (format == "csv" ? ".csv" : ".bin");
      if (format == "csv") {
        write_trace_csv((dir / file).string(), tr, comments);
      } else {
        write_trace_binary((dir / file).string(), tr);
      }
      written.channels.push_back({tr.label, cmap.channels[i].die, file});
    }
    json map_json = env;
    map_json.update(to_json(written));
    detail::write_json(dir / "channel_map.json", map_json);

    json truth = env;
    truth.update(to_json(res.truth));
    detail::write_json(dir / "ground_truth.json", truth);

    std::cout << "simulated " << n_particles << " particles (" << res.truth.multi_die_count()
              << " multi-die) on " << res.traces.size() << " channels, "
              << sample_count(cfg.trace) << " samples each -> " << dir.string() << '\n';
    return 0;
  }
};

// ---------------------------------------------------------------------------
// detect

struct DetectCmd {
  std::string input_dir = ".";
  std::string channels;
  double sample_rate = 0.0;
  double k_sigma = 5.0;
  double dead_time = 10e-3;
  double window = 100e-6;
  double baseline_window = 10e-3;
  std::string metric = "euclidean";
  bool no_recovery = false;
  double plot_pre = 0.5e-3;
  double plot_post = 5e-3;

  void add(CLI::App* sub) {
    sub->add_option("--input-dir", input_dir, "Directory holding traces")->capture_default_str();
    sub->add_option("--channels", channels, "Channel map JSON (default: <input-dir>/channel_map.json)");
    sub->add_option("--sample-rate", sample_rate, "Hz; overrides the channel map (0: from map or timestamps)")
        ->capture_default_str();
    sub->add_option("--k-sigma", k_sigma, "Trigger threshold in noise sigma")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--dead-time", dead_time, "s")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--window", window, "Coincidence window, s")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--baseline-window", baseline_window, "Leading window for the baseline, s")
        ->capture_default_str();
    sub->add_option("--metric", metric, "euclidean or per-quadrature")
        ->check(CLI::IsMember({"euclidean", "per-quadrature"}))
        ->capture_default_str();
    sub->add_flag("--no-recovery", no_recovery, "Skip per-detection recovery-time fits");
    sub->add_option("--plot-pre", plot_pre, "Plot window before each event, s")->capture_default_str();
    sub->add_option("--plot-post", plot_post, "Plot window after each event, s")->capture_default_str();
  }

  std::string map_path() const {
    return channels.empty() ? (fs::path(input_dir) / "channel_map.json").string() : channels;
  }

  json config() const {
    return {{"input-dir", input_dir},   {"channels", map_path()}, {"sample-rate", sample_rate},
            {"k-sigma", k_sigma},       {"dead-time", dead_time}, {"window", window},
            {"baseline-window", baseline_window}, {"metric", metric}, {"no-recovery", no_recovery},
            {"plot-pre", plot_pre},     {"plot-post", plot_post}};
  }

  void validate() const { detail::require_file("channels", map_path()); }

  int execute(const Common& c) const {
    const ChannelMap cmap = load_channel_map(map_path());
    const fs::path base = fs::path(map_path()).parent_path();
    std::vector<ChannelTrace> traces;
    for (const auto& e : cmap.channels) {
      const fs::path file = base / (e.file.empty() ? e.label + ".csv" : e.file);
      if (!fs::is_regular_file(file)) throw Error("io-error", "trace file not found: '" + file.string() + "'");
      ChannelTrace tr;
      if (file.extension() == ".bin") {
        tr = read_trace_binary(file.string());
        tr.label = e.label;
        if (sample_rate > 0.0) tr.sample_rate = sample_rate;
      } else {
        tr = read_trace_csv(file.string(), e.label, sample_rate > 0.0 ? sample_rate : cmap.sample_rate);
      }
      traces.push_back(std::move(tr));
    }

    AnalysisOptions opt;
    opt.baseline_window = baseline_window;
    opt.trigger = {k_sigma, dead_time,
                   metric == "euclidean" ? TriggerMetric::Euclidean : TriggerMetric::PerQuadrature};
    opt.coincidence_window = window;
    const AnalysisResult res = analyze(traces, cmap.die_of(), opt);

    const json env = detail::envelope("detect", c, config());
    const fs::path dir = detail::out_dir(c);

    json det = env;
    det["channels"] = json::array();
    for (std::size_t ch = 0; ch < traces.size(); ++ch) {
      json entry{{"label", traces[ch].label},
                 {"die", cmap.channels[ch].die},
                 {"baseline", to_json(res.baselines[ch])},
                 {"detections", json::array()}};
      const auto& list = res.detections[ch];
      for (std::size_t i = 0; i < list.size(); ++i) {
        json d = to_json(list[i]);
        if (!no_recovery) {
          RecoveryOptions ro;
          ro.allow_short = true;
          if (i + 1 < list.size()) ro.end_time = list[i + 1].t_trigger;
          try {
            const auto fit = recovery_time(traces[ch], res.baselines[ch], list[i], ro);
            d["recovery"] = {{"tau", fit.tau}, {"amplitude", fit.amplitude},
                             {"n_samples", fit.n_samples}, {"short_fit", fit.short_fit}};
          } catch (const Error& e) {
            d["recovery"] = {{"error", e.code()}};
          }
        }
        entry["detections"].push_back(d);
      }
      det["channels"].push_back(entry);
    }
    detail::write_json(dir / "detections.json", det);

    json ev = env;
    ev["events"] = json::array();
    for (const auto& e : res.events) ev["events"].push_back(to_json(e));
    ev["statistics"] = to_json(res.stats);
    detail::write_json(dir / "events.json", ev);

    std::ofstream csv(dir / "normalized_phases.csv");
    for (const auto& line : detail::comment_lines(env)) csv << "# " << line << '\n';
    csv << "event,class,channel,die,t_rel_s,phase_norm\n";
    for (std::size_t k = 0; k < res.events.size(); ++k) {
      const auto& e = res.events[k];
      std::vector<std::size_t> chans;
      for (const auto& m : e.members)
        if (std::find(chans.begin(), chans.end(), m.channel_index) == chans.end()) chans.push_back(m.channel_index);
      for (auto ch : chans) {
        const auto& tr = traces[ch];
        const double fs_ = tr.sample_rate;
        const auto begin = static_cast<std::size_t>(std::max(0.0, std::floor((e.t_ref - plot_pre) * fs_)));
        const auto end = static_cast<std::size_t>(
            std::min(static_cast<double>(tr.size()), std::ceil((e.t_ref + plot_post) * fs_)));
        if (begin >= end) continue;
        std::vector<double> phase;
        try {
          phase = phase_normalize(tr, res.baselines[ch], begin, end);
        } catch (const Error&) {
          continue;
        }
        char buf[64];
        for (std::size_t i = 0; i < phase.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.9g,%.9g", tr.time(begin + i) - e.t_ref, phase[i]);
          csv << k << ',' << to_string(e.cls) << ',' << tr.label << ',' << cmap.channels[ch].die << ','
              << buf << '\n';
        }
      }
    }

    std::size_t n_det = 0;
    for (const auto& l : res.detections) n_det += l.size();
    std::cout << n_det << " detections, " << res.stats.n_total << " events (" << res.stats.n_single
              << " single-die, " << res.stats.n_double << " double-die, " << res.stats.n_partial
              << " partial) -> " << dir.string() << '\n';
    return 0;
  }
};

// ---------------------------------------------------------------------------
// stats

struct StatsCmd {
  std::vector<std::string> events;
  std::optional<std::size_t> n_total;
  std::optional<std::size_t> n_double;
  std::string layout;

  void add(CLI::App* sub) {
    sub->add_option("--events", events, "events.json files to aggregate (default: ./events.json)");
    sub->add_option("--n-total", n_total, "Aggregate raw counts instead of event files");
    sub->add_option("--n-double", n_double, "Double-die count, with --n-total");
    sub->add_option("--layout", layout, "Layout JSON; adds the analytic prediction");
  }

  std::vector<std::string> event_files() const {
    if (!events.empty() || n_total) return events;
    return {"events.json"};
  }

  json config() const {
    json j{{"events", event_files()}, {"layout", layout}};
    j["n-total"] = n_total ? json(*n_total) : json();
    j["n-double"] = n_double ? json(*n_double) : json();
    return j;
  }

  void validate() const {
    if (n_total.has_value() != n_double.has_value())
      throw ConfigError("--n-double: --n-total and --n-double go together");
    if (n_total && *n_double > *n_total) throw ConfigError("--n-double: exceeds --n-total");
    for (const auto& f : event_files()) detail::require_file("events", f);
    if (!layout.empty()) detail::require_file("layout", layout);
  }

  int execute(const Common& c) const {
    std::vector<EventClass> classes;
    if (n_total) {
      classes.assign(*n_total - *n_double, EventClass::SingleDie);
      classes.insert(classes.end(), *n_double, EventClass::DoubleDie);
    }
    for (const auto& f : event_files()) {
      const json j = detail::read_json(f, "events file");
      try {
        for (const auto& e : j.at("events")) classes.push_back(event_class_from_string(e.at("class")));
      } catch (const json::exception& e) {
        throw Error("invalid-events", f + ": " + e.what());
      }
    }
    const BurstStatistics s = burst_statistics(classes);
    json out = detail::envelope("stats", c, config());
    out["statistics"] = to_json(s);
    if (!layout.empty()) {
      const auto pred = double_hit_probability(load_layout(layout), QuadratureSpec{}, CombineMode::AreaWeighted);
      out["prediction"] = detail::binomial_comparison(pred.p_double, s.n_total, s.fraction_double);
      out["prediction"]["double_to_single_ratio"] = pred.double_to_single_ratio;
    }
    detail::write_json(detail::out_dir(c) / "stats.json", out);
    std::cout << out["statistics"].dump(2) << '\n';
    return 0;
  }
};

// ---------------------------------------------------------------------------
// fit

struct FitCmd {
  std::string mkids = data_path("mkids.csv");
  std::vector<std::string> sweeps;
  int points = 8001;
  double span = 6.0;
  double noise_sigma = 0.01;
  bool fit_phase = false;
  std::string write_sweeps;

  void add(CLI::App* sub) {
    sub->add_option("--mkids", mkids, "Resonator table CSV (reference and synthetic source)")
        ->capture_default_str();
    sub->add_option("--sweep", sweeps, "Sweep CSV files (f_Hz,I,Q); label = file stem");
    sub->add_option("--points", points, "Synthetic sweep points")->check(CLI::Range(20, 1000000))->capture_default_str();
    sub->add_option("--span", span, "Synthetic sweep span in linewidths")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--noise-sigma", noise_sigma, "Synthetic per-quadrature noise")->capture_default_str();
    sub->add_flag("--fit-phase", fit_phase, "Fit a global phase offset");
    sub->add_option("--write-sweeps", write_sweeps, "Also write the synthetic sweeps to this directory");
  }

  json config() const {
    return {{"mkids", mkids}, {"sweep", sweeps}, {"points", points}, {"span", span},
            {"noise-sigma", noise_sigma}, {"fit-phase", fit_phase}, {"write-sweeps", write_sweeps}};
  }

  void validate() const {
    detail::require_file("mkids", mkids);
    for (const auto& s : sweeps) detail::require_file("sweep", s);
    if (noise_sigma < 0.0) throw ConfigError("--noise-sigma: must be >= 0");
  }

  int execute(const Common& c) const {
    const auto table = load_mkid_table(mkids);
    const json env = detail::envelope("fit", c, config());
    FitOptions opt;
    opt.fit_phase_offset = fit_phase;
    std::vector<detail::FitRow> rows;
    if (sweeps.empty()) {
      if (!write_sweeps.empty()) fs::create_directories(write_sweeps);
      for (std::size_t i = 0; i < table.size(); ++i) {
        const Sweep s = detail::table_sweep(table, i, points, span, noise_sigma, c.seed);
        if (!write_sweeps.empty())
          write_sweep_csv((fs::path(write_sweeps) / (table[i].label + ".csv")).string(), s,
                          detail::comment_lines(env));
        rows.push_back(detail::fit_one(table[i].label, s, opt, table));
      }
    } else {
      for (const auto& f : sweeps)
        rows.push_back(detail::fit_one(fs::path(f).stem().string(), read_sweep_csv(f), opt, table));
    }
    json out = env;
    out["rows"] = json::array();
    double worst = 0.0;
    for (const auto& r : rows) {
      const json j = detail::to_json(r);
      if (j.contains("rel_error"))
        for (const auto& [k, v] : j["rel_error"].items()) worst = std::max(worst, v.get<double>());
      out["rows"].push_back(j);
    }
    out["max_rel_error"] = worst;
    detail::write_json(detail::out_dir(c) / "fit.json", out);
    std::cout << detail::fit_table_text(rows);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// report

struct ReportCmd {
  std::string layout = data_path("example_layout.json");
  std::string mkids = data_path("mkids.csv");
  std::string input_dir = ".";
  std::uint64_t n_rays = 1000000;
  int points = 8001;
  double span = 6.0;
  double noise_sigma = 0.01;

  void add(CLI::App* sub) {
    sub->add_option("--layout", layout, "Layout JSON")->capture_default_str();
    sub->add_option("--mkids", mkids, "Resonator table CSV")->capture_default_str();
    sub->add_option("--input-dir", input_dir, "Directory with events.json / fit.json, if any")
        ->capture_default_str();
    sub->add_option("--n-rays", n_rays, "Monte Carlo rays")->capture_default_str();
    sub->add_option("--points", points, "Synthetic sweep points when no fit.json")
        ->check(CLI::Range(20, 1000000))
        ->capture_default_str();
    sub->add_option("--span", span, "Synthetic sweep span in linewidths")->capture_default_str();
    sub->add_option("--noise-sigma", noise_sigma, "Synthetic sweep noise")->capture_default_str();
  }

  json config() const {
    return {{"layout", layout}, {"mkids", mkids}, {"input-dir", input_dir}, {"n-rays", n_rays},
            {"points", points}, {"span", span},   {"noise-sigma", noise_sigma}};
  }

  void validate() const {
    detail::require_file("layout", layout);
    detail::require_file("mkids", mkids);
    if (n_rays < 10000) throw ConfigError("--n-rays: must be >= 10000");
  }

  int execute(const Common& c) const {
    const Layout lay = load_layout(layout);
    const auto table = load_mkid_table(mkids);
    const auto area = double_hit_probability(lay, QuadratureSpec{}, CombineMode::AreaWeighted);
    const auto literal = double_hit_probability(lay, QuadratureSpec{}, CombineMode::LiteralSum);
    const auto mc = mc_double_hit(lay, n_rays, AngularModel::Isotropic, c.seed);

    json out = detail::envelope("report", c, config());
    out["geometry"] = {{"layout", layout_to_json(lay)},
                       {"analytic_area_weighted", to_json(area)},
                       {"analytic_literal_sum", to_json(literal)},
                       {"monte_carlo", to_json(mc)}};

    std::vector<EventClass> ref_classes(kReferenceBursts - kReferenceDouble, EventClass::SingleDie);
    ref_classes.insert(ref_classes.end(), kReferenceDouble, EventClass::DoubleDie);
    const BurstStatistics ref = burst_statistics(ref_classes);
    out["reference"] = {{"predicted_double_to_single", kReferencePredictedRatio},
                        {"observed", to_json(ref)}};

    std::optional<BurstStatistics> detected;
    const fs::path events_path = fs::path(input_dir) / "events.json";
    if (fs::is_regular_file(events_path)) {
      const json j = detail::read_json(events_path.string(), "events file");
      std::vector<EventClass> classes;
      for (const auto& e : j.at("events")) classes.push_back(event_class_from_string(e.at("class")));
      detected = burst_statistics(classes);
      out["detected"] = to_json(*detected);
      out["detected"]["source"] = events_path.string();
      out["detected"]["comparison"] =
          detail::binomial_comparison(area.p_double, detected->n_total, detected->fraction_double);
    }

    std::vector<detail::FitRow> rows;
    const fs::path fit_path = fs::path(input_dir) / "fit.json";
    if (fs::is_regular_file(fit_path)) {
      const json j = detail::read_json(fit_path.string(), "fit file");
      for (const auto& r : j.at("rows")) {
        detail::FitRow row;
        row.fit.params = {r.at("label").get<std::string>(), r.at("f0_GHz").get<double>() * 1e9,
                          r.at("kappa_i_kHz").get<double>() * 1e3, r.at("kappa_e_kHz").get<double>() * 1e3};
        row.fit.residual_norm = r.value("residual_norm", 0.0);
        row.converged = r.value("converged", true);
        for (const auto& p : table)
          if (p.label == row.fit.params.label) row.reference = p;
        rows.push_back(row);
      }
      out["fitted_source"] = fit_path.string();
    } else {
      for (std::size_t i = 0; i < table.size(); ++i)
        rows.push_back(detail::fit_one(table[i].label,
                                       detail::table_sweep(table, i, points, span, noise_sigma, c.seed),
                                       FitOptions{}, table));
      out["fitted_source"] = "synthetic sweeps from the resonator table";
    }
    out["fitted"] = json::array();
    for (const auto& r : rows) out["fitted"].push_back(detail::to_json(r));

    const fs::path dir = detail::out_dir(c);
    detail::write_json(dir / "report.json", out);
    const std::string text = text_report(c, area, literal, mc, ref, detected, rows);
    std::ofstream(dir / "report.txt") << text;
    std::cout << text;
    return 0;
  }

  std::string text_report(const Common& c, const CoincidenceReport& area, const CoincidenceReport& literal,
                          const CoincidenceReport& mc, const BurstStatistics& ref,
                          const std::optional<BurstStatistics>& detected,
                          const std::vector<detail::FitRow>& rows) const {
    using detail::fmt;
    std::ostringstream os;
    os << "diesep report (seed " << c.seed << ")\n";
    if (!c.deterministic) os << "generated " << detail::utc_now() << '\n';
    os << "\nGeometry: " << layout << "\n";
    os << "  estimate                    p_double    p_single    double/single  2 x p_double\n";
    auto line = [&](const char* name, const CoincidenceReport& r, const std::string& extra) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "  %-26s  %-10.6f  %-10.6f  %-13.6f  %-10.6f%s\n", name, r.p_double,
                    r.p_single, r.double_to_single_ratio, r.doubled_pair_probability, extra.c_str());
      os << buf;
    };
    line("analytic, area-weighted", area, "");
    line("analytic, literal sum", literal, "");
    line("Monte Carlo, isotropic", mc, "  (stderr " + fmt("%.2g", *mc.mc_stderr) + ")");

    os << "\nRatio conventions\n"
       << "  double/total  = multi-die particles / all particles      (p_double)\n"
       << "  double/single = multi-die particles / single-die particles (p_double / p_single)\n"
       << "  2 x p_double  = pair probability summed over both travel directions\n";

    os << "\nReference tally\n"
       << "  predicted double/single ratio: " << fmt("%.1f%%", 100.0 * kReferencePredictedRatio) << '\n'
       << "  observed: " << ref.n_double << " of " << ref.n_total << " bursts in all four channels = "
       << fmt("%.2f%%", 100.0 * ref.fraction_double) << " double/total, "
       << fmt("%.2f%%", 100.0 * static_cast<double>(ref.n_double) / static_cast<double>(ref.n_single))
       << " double/single\n"
       << "  this layout (area-weighted): " << fmt("%.2f%%", 100.0 * area.double_to_single_ratio)
       << " double/single, " << fmt("%.2f%%", 100.0 * area.p_double) << " double/total\n"
       << "  The predicted reference ratio is a double/single figure and is compared with\n"
       << "  this layout's double/single column. The die dimensions behind the reference are\n"
       << "  not known (this layout assumes them), so only the order of magnitude is expected\n"
       << "  to match. The observed fraction sits below the prediction, consistent with small\n"
       << "  bursts that never cross the trigger threshold.\n";

    if (detected) {
      const double sigma = std::sqrt(area.p_double * (1.0 - area.p_double) /
                                     std::max<double>(1.0, static_cast<double>(detected->n_total)));
      os << "\nDetected events\n"
         << "  total " << detected->n_total << ", single-die " << detected->n_single << ", double-die "
         << detected->n_double << ", partial " << detected->n_partial << '\n'
         << "  fraction double " << fmt("%.4f", detected->fraction_double) << " vs predicted "
         << fmt("%.4f", area.p_double) << " (binomial sigma " << fmt("%.4f", sigma) << ")\n";
    }

    os << "\nFitted resonators\n" << detail::fit_table_text(rows);
    return os.str();
  }
};

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Die-separation coincidence and MKID burst analysis toolkit", "diesep"};
  app.require_subcommand(1);

  Common common;
  CoincidenceCmd coincidence;
  SimulateCmd simulate;
  DetectCmd detect;
  StatsCmd stats;
  FitCmd fit;
  ReportCmd report;

  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    sub->add_option("--seed", common.seed, "Master random seed")->capture_default_str();
    sub->add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--config", common.config, "JSON file of option values; flags override it");
    sub->add_flag("--deterministic", common.deterministic, "Omit timestamps from outputs");
    return sub;
  };
  CLI::App* subs[] = {
      add("coincidence", "Double-hit probability of a die layout", coincidence),
      add("simulate", "Synthesize multi-channel I/Q traces with ground truth", simulate),
      add("detect", "Trigger, group and classify bursts in traces", detect),
      add("stats", "Aggregate event files into burst statistics", stats),
      add("fit", "Fit resonance sweeps", fit),
      add("report", "Summary report: geometry, statistics, fitted resonators", report),
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    for (CLI::App* sub : subs) {
      if (!sub->parsed()) continue;
      if (!common.config.empty()) {
        detail::require_file("config", common.config);
        detail::apply_config(*sub, common.config);
      }
    }
    auto dispatch = [&](auto& cmd) {
      cmd.validate();
      return cmd.execute(common);
    };
    if (subs[0]->parsed()) return dispatch(coincidence);
    if (subs[1]->parsed()) return dispatch(simulate);
    if (subs[2]->parsed()) return dispatch(detect);
    if (subs[3]->parsed()) return dispatch(stats);
    if (subs[4]->parsed()) return dispatch(fit);
    if (subs[5]->parsed()) return dispatch(report);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace diesep::cli
