#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diesep/error.hpp"
#include "diesep/least_squares.hpp"
#include "diesep/mkid.hpp"
#include "diesep/random.hpp"

namespace diesep {

struct Sweep {
  std::vector<double> freqs;  // Hz
  std::vector<Complex> data;
};

/// Uniform sweep of `n_points` over f0 +/- span/2, span = `span_linewidths` * kappa,
/// with optional complex white noise of per-quadrature sigma.
inline Sweep synthetic_sweep(const MkidParams& p, int n_points, double span_linewidths,
                             double noise_sigma = 0.0, std::uint64_t seed = 0) {
  Sweep s;
  Stream rng = make_stream(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double span = span_linewidths * p.kappa();
  for (int i = 0; i < n_points; ++i) {
    const double f = p.f0 - 0.5 * span + span * i / (n_points - 1);
    Complex v = s21(f, p);
    if (noise_sigma > 0.0) v += Complex(noise_sigma * noise(rng), noise_sigma * noise(rng));
    s.freqs.push_back(f);
    s.data.push_back(v);
  }
  return s;
}

/// Sweep CSV: optional `#` comment lines, header `f_Hz,I,Q`.
inline void write_sweep_csv(const std::string& path, const Sweep& s,
                            const std::vector<std::string>& comments = {}) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error("io-error", "cannot write '" + path + "'");
  for (const auto& c : comments) std::fprintf(f, "# %s\n", c.c_str());
  std::fputs("f_Hz,I,Q\n", f);
  for (std::size_t k = 0; k < s.freqs.size(); ++k)
    std::fprintf(f, "%.17g,%.17g,%.17g\n", s.freqs[k], s.data[k].real(), s.data[k].imag());
  std::fclose(f);
}

inline Sweep read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot read '" + path + "'");
  Sweep s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("f_Hz", 0) == 0) continue;
    double f, i, q;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &f, &i, &q) != 3)
      throw Error("invalid-sweep", path + ": malformed row '" + line + "'");
    s.freqs.push_back(f);
    s.data.emplace_back(i, q);
  }
  return s;
}

struct FitOptions {
  bool fit_phase_offset = false;  // multiplies the model by exp(i phi)
  LmOptions lm{};
};

struct FitResult {
  MkidParams params;
  double residual_norm = 0.0;
  std::optional<double> phase_offset;
  int iterations = 0;
};

/// Thrown when the optimizer hits its iteration cap; carries the best estimate.
class FitFailed : public Error {
 public:
  explicit FitFailed(FitResult best)
      : Error("fit-failed", "resonance fit did not converge"), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

/// Initial (f0, kappa_i, kappa_e) from the dip: f0 at min |S21|, total kappa
/// from the full width at half maximum of |1 - S21|^2, split by the dip depth.
inline MkidParams initial_guess(std::span<const double> freqs, std::span<const Complex> data) {
  std::size_t imin = 0;
  for (std::size_t i = 1; i < data.size(); ++i)
    if (std::abs(data[i]) < std::abs(data[imin])) imin = i;
  const double depth = std::abs(data[imin]);
  if (depth > 0.99) throw Error("no-resonance", "no dip below |S21| = 0.99");

  auto excess = [&](std::size_t i) { return std::norm(1.0 - data[i]); };
  const double half = 0.5 * excess(imin);
  auto crossing = [&](int dir) {
    std::size_t i = imin;
    while (true) {
      const std::size_t next = dir < 0 ? i - 1 : i + 1;
      if ((dir < 0 && i == 0) || (dir > 0 && next >= data.size())) return freqs[i];
      if (excess(next) < half) {
        const double a = excess(i) - half;
        const double b = half - excess(next);
        return freqs[i] + (freqs[next] - freqs[i]) * a / (a + b);
      }
      i = next;
    }
  };
  double width = crossing(+1) - crossing(-1);
  if (!(width > 0.0)) width = (freqs.back() - freqs.front()) / 5.0;
  return {"", freqs[imin], depth * width, std::max(1.0 - depth, 0.05) * width};
}

/// Least-squares fit of the hanger model to a complex sweep, jointly on I and Q.
inline FitResult fit_s21_sweep(std::span<const double> freqs, std::span<const Complex> data,
                               const FitOptions& opt = {}) {
  if (freqs.size() != data.size()) throw Error("invalid-sweep", "freqs/data length mismatch");
  if (freqs.size() < 20) throw Error("invalid-sweep", "need at least 20 sweep points");

  const MkidParams guess = initial_guess(freqs, data);
  const double f_ref = guess.f0;
  const double scale = guess.kappa();
  const std::size_t n = freqs.size();
  std::vector<double> detuning(n);
  for (std::size_t k = 0; k < n; ++k) detuning[k] = (freqs[k] - f_ref) / scale;

  const int n_par = opt.fit_phase_offset ? 4 : 3;
  auto model = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(2 * n);
    J.resize(2 * n, n_par);
    const double x0 = x[0], ki = x[1], ke = x[2];
    const Complex rot = opt.fit_phase_offset ? std::polar(1.0, x[3]) : Complex(1.0);
    for (std::size_t k = 0; k < n; ++k) {
      const Complex D(ki + ke, 2.0 * (detuning[k] - x0));
      const Complex D2 = D * D;
      const Complex s = 1.0 - ke / D;
      const Complex m = s * rot;
      const Complex res = m - data[k];
      const Complex d_x0 = rot * Complex(0.0, -2.0) * ke / D2;
      const Complex d_ki = rot * ke / D2;
      const Complex d_ke = rot * (-1.0 / D + ke / D2);
      r[2 * k] = res.real();
      r[2 * k + 1] = res.imag();
      J(2 * k, 0) = d_x0.real();
      J(2 * k + 1, 0) = d_x0.imag();
      J(2 * k, 1) = d_ki.real();
      J(2 * k + 1, 1) = d_ki.imag();
      J(2 * k, 2) = d_ke.real();
      J(2 * k + 1, 2) = d_ke.imag();
      if (opt.fit_phase_offset) {
        const Complex d_phi = Complex(0.0, 1.0) * m;
        J(2 * k, 3) = d_phi.real();
        J(2 * k + 1, 3) = d_phi.imag();
      }
    }
  };

  Eigen::VectorXd x0(n_par);
  x0[0] = 0.0;
  x0[1] = guess.kappa_i / scale;
  x0[2] = guess.kappa_e / scale;
  if (opt.fit_phase_offset) x0[3] = 0.0;
  const LmResult lm = levenberg_marquardt(model, x0, opt.lm);

  FitResult out;
  out.params.f0 = f_ref + lm.params[0] * scale;
  out.params.kappa_i = std::max(0.0, lm.params[1] * scale);
  out.params.kappa_e = lm.params[2] * scale;
  out.residual_norm = std::sqrt(2.0 * lm.cost);
  out.iterations = lm.iterations;
  if (opt.fit_phase_offset) out.phase_offset = lm.params[3];
  if (!lm.converged || !(out.params.kappa_e > 0.0)) throw FitFailed(out);
  return out;
}

inline FitResult fit_s21_sweep(const Sweep& sweep, const FitOptions& opt = {}) {
  return fit_s21_sweep(std::span<const double>(sweep.freqs), std::span<const Complex>(sweep.data),
                       opt);
}

}  // namespace diesep
