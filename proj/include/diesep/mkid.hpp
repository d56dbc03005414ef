#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "diesep/error.hpp"

namespace diesep {

using Complex = std::complex<double>;

/// Resonator in the hanger geometry. Linewidths are kappa / 2pi, in Hz.
struct MkidParams {
  std::string label;
  double f0 = 0.0;       // Hz
  double kappa_i = 0.0;  // Hz, internal
  double kappa_e = 0.0;  // Hz, external

  double kappa() const { return kappa_i + kappa_e; }
};

inline void validate(const MkidParams& p) {
  if (!(p.f0 > 0.0) || !(p.kappa_i >= 0.0) || !(p.kappa_e > 0.0))
    throw Error("invalid-mkid", "MKID '" + p.label + "' needs f0 > 0, kappa_i >= 0, kappa_e > 0");
}

/// Lumped C, L_g, L_k in SI units.
struct LumpedElements {
  double capacitance = 0.0;
  double geometric_inductance = 0.0;
  double kinetic_inductance = 0.0;

  double total_inductance() const { return geometric_inductance + kinetic_inductance; }
  /// Kinetic inductance fraction alpha = L_k / (L_g + L_k).
  double kinetic_fraction() const { return kinetic_inductance / total_inductance(); }
};

inline void validate(const LumpedElements& e) {
  if (!(e.capacitance > 0.0) || !(e.geometric_inductance > 0.0) || !(e.kinetic_inductance > 0.0))
    throw Error("invalid-element", "C, L_g and L_k must all be strictly positive");
}

/// f0 = 1 / (2 pi sqrt(C (L_g + L_k))), in Hz.
inline double resonant_frequency(const LumpedElements& e) {
  validate(e);
  return 1.0 / (2.0 * std::numbers::pi * std::sqrt(e.capacitance * e.total_inductance()));
}

/// Total inductance that puts a resonator with capacitance `c` at `f0`.
inline double total_inductance_for(double f0, double c) {
  if (!(f0 > 0.0) || !(c > 0.0)) throw Error("invalid-element", "f0 and C must be positive");
  const double w = 2.0 * std::numbers::pi * f0;
  return 1.0 / (w * w * c);
}

/// Resonance after the kinetic inductance grows to L_k (1 + delta).
inline double shifted_frequency(const LumpedElements& e, double delta_lk_fraction) {
  if (!(delta_lk_fraction > -1.0)) throw Error("invalid-shift", "delta must be > -1");
  LumpedElements shifted = e;
  shifted.kinetic_inductance *= 1.0 + delta_lk_fraction;
  return resonant_frequency(shifted);
}

/// Hanger transmission S21 = 1 - k_e / (k_e + k_i + 2i (f - f0)).
/// The 2 pi between angular and cyclic units cancels, so everything stays in Hz.
inline Complex s21(double f, const MkidParams& p) {
  return 1.0 - p.kappa_e / Complex(p.kappa_e + p.kappa_i, 2.0 * (f - p.f0));
}

/// Distance in the I/Q plane between S21 at the unshifted resonance and S21
/// when the resonance has moved down by `shift`, probing at the original f0:
/// (k_e / k) * 2 shift / sqrt(k^2 + 4 shift^2).
inline double iq_deviation_for_shift(const MkidParams& p, double shift) {
  const double k = p.kappa();
  return (p.kappa_e / k) * 2.0 * shift / std::sqrt(k * k + 4.0 * shift * shift);
}

/// Smallest downward shift whose I/Q deviation (probing at f0) reaches
/// `n_sigma * noise_sigma`. Inverse of iq_deviation_for_shift:
///   r = n sigma k / k_e,  shift = r k / (2 sqrt(1 - r^2)).
/// Throws "undetectable" when the target exceeds the resonance circle diameter.
inline double min_detectable_shift(const MkidParams& p, double n_sigma, double noise_sigma) {
  const double k = p.kappa();
  const double r = n_sigma * noise_sigma * k / p.kappa_e;
  if (r >= 1.0)
    throw Error("undetectable", "MKID '" + p.label + "' cannot reach the requested deviation");
  return r * k / (2.0 * std::sqrt(1.0 - r * r));
}

// ---------------------------------------------------------------------------
// Fixture table: CSV with header `label,f0_GHz,kappa_i_kHz,kappa_e_kHz`.

inline std::vector<MkidParams> parse_mkid_table(std::istream& in) {
  std::vector<MkidParams> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("label", 0) == 0) continue;
    }
    std::stringstream ss(line);
    std::string label, f0, ki, ke;
    if (!std::getline(ss, label, ',') || !std::getline(ss, f0, ',') ||
        !std::getline(ss, ki, ',') || !std::getline(ss, ke, ','))
      throw Error("invalid-table", "malformed MKID row: " + line);
    try {
      MkidParams p{label, std::stod(f0) * 1e9, std::stod(ki) * 1e3, std::stod(ke) * 1e3};
      validate(p);
      rows.push_back(p);
    } catch (const std::logic_error&) {
      throw Error("invalid-table", "non-numeric MKID row: " + line);
    }
  }
  return rows;
}

inline std::vector<MkidParams> load_mkid_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open MKID table '" + path + "'");
  return parse_mkid_table(in);
}

inline const MkidParams& find_mkid(const std::vector<MkidParams>& table, const std::string& label) {
  for (const auto& p : table)
    if (p.label == label) return p;
  throw Error("unknown-mkid", "no MKID labelled '" + label + "'");
}

}  // namespace diesep
