// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "diesep.hpp"
#include "oracles.hpp"

using namespace diesep;

namespace {

const std::string kData = DIESEP_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<MkidParams> table() { return load_mkid_table(kData + "/mkids.csv"); }
Layout example_layout() { return load_layout(kData + "/example_layout.json"); }

std::vector<ChannelSpec> example_channels() {
  const auto t = table();
  std::vector<ChannelSpec> out;
  for (const auto& c : load_channel_map(kData + "/channel_map.json").channels)
    out.push_back({find_mkid(t, c.label), c.die});
  return out;
}

DieMap example_die_map() { return load_channel_map(kData + "/channel_map.json").die_of(); }

Outcome solid_angle_fixtures() {
  const auto t0 = std::chrono::steady_clock::now();
  const RectFace square({-1, -1, 0}, {2, 0, 0}, {0, 2, 0});
  const double near = solid_angle_of_rect({0, 0, 1}, square);
  const double err_near = std::abs(near - 2.0 * std::numbers::pi / 3.0);
  const RectFace unit({-0.5, -0.5, 0}, {1, 0, 0}, {0, 1, 0});
  const double far = solid_angle_of_rect({0, 0, 100}, unit);
  const double rel_far = std::abs(far / 1e-4 - 1.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {err_near <= 1e-9 && rel_far <= 1e-4 && secs < 1.0,
          fmt("center err %.2e (tol 1e-9), far-field rel err %.2e (tol 1e-4), %.3f s", err_near, rel_far, secs)};
}

Outcome analytic_vs_mc() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  int ok = 0;
  double worst = 0.0;
  const int n = 12;
  for (int c = 0; c < n; ++c) {
    const Layout l = oracle::two_dies(uni(1, 10), uni(1, 10), uni(1, 10), uni(0.2, 3), std::exp(uni(std::log(0.05), std::log(5.0))));
    const auto a = double_hit_probability(l, {}, CombineMode::AreaWeighted);
    const auto m = mc_double_hit(l, 1000000, AngularModel::Isotropic, 100 + c);
    const double z = std::abs(a.p_double - m.p_double) / *m.mc_stderr;
    worst = std::max(worst, z);
    if (z <= 3.0) ++ok;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok == n && secs < 120.0, fmt("%d/%d layouts within 3 sigma (worst |z| %.2f), 1e6 rays each, %.1f s", ok, n, worst, secs)};
}

Outcome coincidence_statistic() {
  std::vector<EventClass> classes(342, EventClass::SingleDie);
  classes.insert(classes.end(), 10, EventClass::DoubleDie);
  const auto s = burst_statistics(classes);
  const bool stat_ok = std::abs(s.fraction_double - 0.0284) <= 1e-4;

  const Layout layout = example_layout();
  const auto pred = double_hit_probability(layout, {}, CombineMode::AreaWeighted);
  const auto channels = example_channels();
  const double sigma = 2e-3;
  double min_shift = 0.0;
  for (const auto& ch : channels) min_shift = std::max(min_shift, 1.05 * min_detectable_shift(ch.mkid, 10.0, sigma));

  const std::size_t chunk = 10000;
  const int chunks = 10;
  std::size_t n_total = 0, n_double = 0, n_single = 0;
  for (int c = 0; c < chunks; ++c) {
    ExperimentConfig cfg;
    cfg.n_particles = chunk;
    cfg.bursts = {2e4, 0.3, min_shift, 5e4, 1e-3, 0.0};
    cfg.trace = {2e4, cfg.lead_in + chunk * 20e-3, sigma};
    const auto run = simulate_experiment(layout, channels, cfg, 300 + c);
    AnalysisOptions opt;
    opt.trigger.k_sigma = 6.0;
    const auto a = analyze(run.traces, example_die_map(), opt);
    n_total += a.stats.n_total;
    n_double += a.stats.n_double;
    n_single += a.stats.n_single;
  }
  const double frac = static_cast<double>(n_double) / static_cast<double>(n_total);
  const double band = 3.0 * std::sqrt(pred.p_double * (1.0 - pred.p_double) / static_cast<double>(n_total));
  const bool sim_ok = std::abs(frac - pred.p_double) <= band;
  return {stat_ok && sim_ok,
          fmt("stats(352,10) = %.4f; predicted double/total %.4f, double/single %.4f; simulated %zu events: "
              "double/total %.4f, double/single %.4f, |diff| %.4f (3 sigma %.4f)",
              s.fraction_double, pred.p_double, pred.double_to_single_ratio, n_total, frac,
              static_cast<double>(n_double) / static_cast<double>(n_single), std::abs(frac - pred.p_double), band)};
}

Outcome s21_fixtures() {
  double worst = 0.0;
  for (const auto& p : table()) {
    const Complex s = s21(p.f0, p);
    worst = std::max(worst, std::abs(s - Complex(p.kappa_i / (p.kappa_i + p.kappa_e), 0.0)));
  }
  const auto t = table();
  const double d10 = s21(find_mkid(t, "D10").f0, find_mkid(t, "D10")).real();
  const double d1 = s21(find_mkid(t, "D1").f0, find_mkid(t, "D1")).real();
  return {worst <= 1e-12 && std::abs(d10 - 0.5) <= 1e-12 && std::abs(d1 - 0.13636) < 1e-5,
          fmt("7 rows, worst |S21(f0) - ki/(ki+ke)| %.1e; D10 %.6f, D1 %.6f", worst, d10, d1)};
}

Outcome resonance_fit() {
  const auto t0 = std::chrono::steady_clock::now();
  double clean = 0.0, noisy = 0.0;
  auto rel = [](const MkidParams& a, const MkidParams& b) {
    return std::max({std::abs(a.f0 / b.f0 - 1.0), std::abs(a.kappa_i / b.kappa_i - 1.0),
                     std::abs(a.kappa_e / b.kappa_e - 1.0)});
  };
  std::uint64_t seed = 1;
  for (const auto& p : table()) {
    clean = std::max(clean, rel(fit_s21_sweep(synthetic_sweep(p, 401, 10.0)).params, p));
    noisy = std::max(noisy, rel(fit_s21_sweep(synthetic_sweep(p, 8001, 6.0, 0.01, seed++)).params, p));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {clean <= 1e-6 && noisy <= 0.01 && secs < 10.0,
          fmt("noiseless worst rel err %.1e (tol 1e-6), sigma 0.01 worst %.2f%% (tol 1%%), %.2f s", clean,
              100.0 * noisy, secs)};
}

Outcome recovery_time_fit() {
  const auto t0 = std::chrono::steady_clock::now();
  const MkidParams p = find_mkid(table(), "D4");
  const double tau = 1e-3;
  const double shift = 5e3;
  const std::vector<BurstEvent> ev{{10e-3, shift, tau, "right"}};

  const auto clean = synthesize_trace(p, ev, {1e6, 20e-3, 0.0}, 1);
  const Complex c = s21(p.f0, p);
  const Baseline exact{c.real(), c.imag(), 1e-6, 1e-6, 1e-6};
  const auto d0 = threshold_trigger(clean, exact, {});
  const double clean_err = d0.empty() ? 1.0 : std::abs(recovery_time(clean, exact, d0[0]).tau / tau - 1.0);

  const double sigma = iq_deviation_for_shift(p, shift) / 20.0;
  int ok = 0;
  double worst = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const auto tr = synthesize_trace(p, ev, {1e6, 20e-3, sigma}, 500 + i);
    const Baseline b = baseline_stats(tr, 10e-3);
    const auto dets = threshold_trigger(tr, b, {});
    if (dets.empty()) continue;
    try {
      const double err = std::abs(recovery_time(tr, b, dets[0]).tau / tau - 1.0);
      worst = std::max(worst, err);
      if (err <= 0.05) ++ok;
    } catch (const Error&) {
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {clean_err <= 1e-6 && ok == n && secs < 30.0,
          fmt("noiseless rel err %.1e; SNR 20: %d/%d within 5%% (worst %.2f%%), %.1f s", clean_err, ok, n,
              100.0 * worst, secs)};
}

Outcome detection_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout = example_layout();
  const auto channels = example_channels();
  const double sigma = 2e-3;
  double min_shift = 0.0;
  for (const auto& ch : channels) min_shift = std::max(min_shift, 1.05 * min_detectable_shift(ch.mkid, 10.0, sigma));
  ExperimentConfig cfg;
  cfg.n_particles = 500;
  cfg.bursts = {2e4, 0.5, min_shift, 1e5, 1e-3, 0.0};
  cfg.trace = {1e6, 10.0, sigma};
  const auto run = simulate_experiment(layout, channels, cfg, 7);
  AnalysisOptions opt;
  opt.trigger.k_sigma = 7.0;
  const auto a = analyze(run.traces, example_die_map(), opt);
  const auto m = oracle::match_events(run.truth, a.events, 1e-6, 100e-6);
  const double samples = 4.0 * static_cast<double>(run.traces[0].size());
  const double lambda = samples * noise_trigger_probability(opt.trigger.k_sigma, TriggerMetric::Euclidean);
  const double budget = lambda + 3.0 * std::sqrt(lambda);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {m.missed == 0 && m.misclassified == 0 && m.matched == run.truth.particles.size() &&
              static_cast<double>(m.spurious) <= budget && secs < 60.0,
          fmt("%zu particles (%zu multi-die), 4 x %.0e samples, k 7: matched %zu, missed %zu, misclassified %zu, "
              "spurious %zu (budget %.2f), %.1f s",
              run.truth.particles.size(), run.truth.multi_die_count(), static_cast<double>(run.traces[0].size()),
              m.matched, m.missed, m.misclassified, m.spurious, budget, secs)};
}

Outcome false_trigger_rate() {
  const std::size_t n = 10000000;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1e-3);
  ChannelTrace t{"noise", 1e6, std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    t.i_vals[k] = 0.3 + g(rng);
    t.q_vals[k] = -0.2 + g(rng);
  }
  const Baseline b = baseline_stats(t, 1.0);
  const auto dets = threshold_trigger(t, b, {5.0, 0.0, TriggerMetric::Euclidean});
  const double lambda = static_cast<double>(n) * oracle::rayleigh_tail(5.0);
  const double z = (static_cast<double>(dets.size()) - lambda) / std::sqrt(lambda);
  return {std::abs(z) <= 3.0,
          fmt("%zu triggers over 1e7 samples, expected %.1f, z %.2f", dets.size(), lambda, z)};
}

Outcome property_suites() {
  std::mt19937_64 rng(9);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const int cases = 100;
  int thr = 0, win = 0, gap = 0, seed_ok = 0;
  const auto t = table();

  for (int c = 0; c < cases; ++c) {
    const MkidParams p = t[c % t.size()];
    std::vector<BurstEvent> ev;
    for (int i = 0; i < 5; ++i) ev.push_back({uni(2e-3, 19e-3), std::exp(uni(std::log(50.0), std::log(3e4))), uni(1e-5, 1e-3), ""});
    const auto tr = synthesize_trace(p, ev, {1e6, 20e-3, uni(1e-3, 1e-2)}, rng());
    const Baseline b = baseline_stats(tr, 2e-3);
    std::size_t prev = SIZE_MAX;
    bool ok = true;
    TriggerOptions opt{2.0, uni(0.0, 2e-3), TriggerMetric::Euclidean};
    for (double k : {2.0, 3.0, 5.0, 7.0, 10.0}) {
      opt.k_sigma = k;
      const std::size_t n = threshold_trigger(tr, b, opt).size();
      ok = ok && n <= prev;
      prev = n;
    }
    thr += ok;
  }

  const DieMap dies = example_die_map();
  const char* names[] = {"D4", "D5", "D9", "D10"};
  for (int c = 0; c < cases; ++c) {
    std::vector<std::vector<Detection>> per(4);
    for (int i = 0; i < 40; ++i) {
      Detection d;
      const auto ch = static_cast<std::size_t>(uni(0, 4));
      d.channel = names[std::min<std::size_t>(ch, 3)];
      d.t_trigger = uni(0.0, 5e-3);
      per[std::min<std::size_t>(ch, 3)].push_back(d);
    }
    std::size_t prev = SIZE_MAX;
    bool ok = true;
    for (double w : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
      const std::size_t n = coincidence_group(per, w, dies).size();
      ok = ok && n <= prev;
      prev = n;
    }
    win += ok;
  }

  for (int c = 0; c < cases; ++c) {
    const double la = uni(0.5, 10), lb = uni(0.5, 10), w = uni(0.5, 10), h = uni(0.1, 3);
    const double g1 = std::exp(uni(std::log(1e-3), std::log(20.0)));
    const double g2 = g1 * uni(1.01, 5.0);
    const double p1 = double_hit_probability(oracle::two_dies(la, lb, w, h, g1), {}, CombineMode::AreaWeighted).p_double;
    const double p2 = double_hit_probability(oracle::two_dies(la, lb, w, h, g2), {}, CombineMode::AreaWeighted).p_double;
    gap += p2 <= p1 * (1.0 + 1e-9);
  }

  const Layout layout = oracle::two_dies(3, 3, 3, 0.5, 0.2);
  const std::vector<ChannelSpec> ch{{t[0], "a"}, {t[1], "b"}};
  for (int c = 0; c < cases; ++c) {
    ExperimentConfig cfg;
    cfg.n_particles = 3;
    cfg.trace = {1e5, 10e-3 + 3 * 5e-3, 1e-3};
    const auto a = simulate_experiment(layout, ch, cfg, c);
    const auto b = simulate_experiment(layout, ch, cfg, c);
    bool ok = true;
    for (std::size_t i = 0; i < a.traces.size(); ++i)
      ok = ok && a.traces[i].i_vals == b.traces[i].i_vals && a.traces[i].q_vals == b.traces[i].q_vals;
    const auto ma = mc_double_hit(layout, 10000, AngularModel::CosZenith, c, {4, 1});
    const auto mb = mc_double_hit(layout, 10000, AngularModel::CosZenith, c, {4, 2});
    ok = ok && ma.p_double == mb.p_double && *ma.mc_stderr == *mb.mc_stderr;
    seed_ok += ok;
  }

  return {thr == cases && win == cases && gap == cases && seed_ok == cases,
          fmt("threshold %d/%d, window %d/%d, gap %d/%d, seed determinism %d/%d", thr, cases, win, cases, gap,
              cases, seed_ok, cases)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"solid-angle fixtures", solid_angle_fixtures},
      {"analytic vs Monte Carlo double-hit", analytic_vs_mc},
      {"coincidence statistic", coincidence_statistic},
      {"transmission at resonance", s21_fixtures},
      {"resonance fit round trip", resonance_fit},
      {"recovery-time fit", recovery_time_fit},
      {"detection round trip", detection_round_trip},
      {"false-trigger rate", false_trigger_rate},
      {"property suites", property_suites},
  };
  int failed = 0;
  int i = 0;
  for (const auto& [name, fn] : criteria) {
    ++i;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", i, name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
