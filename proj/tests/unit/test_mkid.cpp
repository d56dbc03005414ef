#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "diesep.hpp"

using namespace diesep;

namespace {

std::vector<MkidParams> table() { return load_mkid_table(std::string(DIESEP_DATA_DIR) + "/mkids.csv"); }

TEST(Table, ShippedFixtureHasSevenRows) {
  const auto t = table();
  ASSERT_EQ(t.size(), 7u);
  const auto& d8 = find_mkid(t, "D8");
  EXPECT_DOUBLE_EQ(d8.f0, 3.48319e9);
  EXPECT_DOUBLE_EQ(d8.kappa_i, 1.2e3);
  EXPECT_DOUBLE_EQ(d8.kappa_e, 2.6e3);
  try {
    find_mkid(t, "D7");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown-mkid");
  }
}

TEST(Table, MalformedRowsAreRejected) {
  for (const char* text : {"label,f0_GHz,kappa_i_kHz,kappa_e_kHz\nD1,3.2,1.5\n",
                           "label,f0_GHz,kappa_i_kHz,kappa_e_kHz\nD1,x,1.5,2\n",
                           "label,f0_GHz,kappa_i_kHz,kappa_e_kHz\nD1,3.2,1.5,0\n"}) {
    std::istringstream in(text);
    try {
      parse_mkid_table(in);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_TRUE(e.code() == "invalid-table" || e.code() == "invalid-mkid") << e.code();
    }
  }
}

TEST(S21, AtResonanceEqualsInternalShareForAllRows) {
  for (const auto& p : table()) {
    const Complex s = s21(p.f0, p);
    EXPECT_NEAR(s.real(), p.kappa_i / (p.kappa_i + p.kappa_e), 1e-12) << p.label;
    EXPECT_NEAR(s.imag(), 0.0, 1e-12) << p.label;
  }
  const auto t = table();
  EXPECT_NEAR(s21(find_mkid(t, "D10").f0, find_mkid(t, "D10")).real(), 0.5, 1e-12);
  EXPECT_NEAR(s21(find_mkid(t, "D1").f0, find_mkid(t, "D1")).real(), 1.5 / 11.0, 1e-12);
  EXPECT_NEAR(1.5 / 11.0, 0.13636, 1e-5);
}

TEST(S21, FarDetuningApproachesUnity) {
  const auto p = find_mkid(table(), "D4");
  EXPECT_NEAR(std::abs(s21(p.f0 + 1e9, p) - 1.0), 0.0, 1e-5);
  EXPECT_NEAR(std::abs(s21(p.f0 - 1e9, p) - 1.0), 0.0, 1e-5);
}

TEST(S21, ResonanceCircle) {
  for (const auto& p : table()) {
    const double k = p.kappa();
    const Complex center(1.0 - 0.5 * p.kappa_e / k, 0.0);
    const double radius = 0.5 * p.kappa_e / k;
    for (int i = -200; i <= 200; ++i) {
      const Complex s = s21(p.f0 + 0.05 * k * i, p);
      EXPECT_NEAR(std::abs(s - center), radius, 1e-9);
      EXPECT_LE(std::abs(s), 1.0 + 1e-9);
    }
  }
}

TEST(S21, PhaseIsOddAboutResonance) {
  for (const auto& p : table()) {
    EXPECT_EQ(std::arg(s21(p.f0, p)), 0.0);
    for (double x : {0.1, 0.5, 1.0, 3.0, 20.0}) {
      const double d = x * p.kappa();
      EXPECT_NEAR(std::arg(s21(p.f0 + d, p)), -std::arg(s21(p.f0 - d, p)), 1e-12);
    }
  }
}

TEST(Lumped, UnitIdentityAndRejection) {
  EXPECT_NEAR(resonant_frequency({1.0, 0.5, 0.5}), 1.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(resonant_frequency({1.0, 0.5, 0.5}), 0.1592, 1e-4);
  try {
    resonant_frequency({1.0, 1.0, 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-element");
  }
}

TEST(Lumped, InverseRoundTripAtD8) {
  const double f0 = find_mkid(table(), "D8").f0;
  const double c = 0.5e-12;
  const double l_total = total_inductance_for(f0, c);
  const LumpedElements e{c, 0.6 * l_total, 0.4 * l_total};
  EXPECT_NEAR(resonant_frequency(e) / f0, 1.0, 1e-12);
  EXPECT_NEAR(e.kinetic_fraction(), 0.4, 1e-12);
}

TEST(Lumped, ShiftedFrequency) {
  const LumpedElements e{0.5e-12, 3e-9, 1e-9};
  EXPECT_DOUBLE_EQ(shifted_frequency(e, 0.0), resonant_frequency(e));
  double prev = shifted_frequency(e, -0.9);
  for (double d = -0.8; d < 5.0; d += 0.1) {
    const double f = shifted_frequency(e, d);
    EXPECT_LT(f, prev);
    prev = f;
  }
  // Small-shift limit: df/f = -alpha delta / 2.
  const double delta = 1e-6;
  EXPECT_NEAR((shifted_frequency(e, delta) / resonant_frequency(e) - 1.0) / (-0.5 * 0.25 * delta), 1.0, 1e-4);
  try {
    shifted_frequency(e, -1.0);
    FAIL();
  } catch (const Error& ex) {
    EXPECT_EQ(ex.code(), "invalid-shift");
  }
}

TEST(Responsivity, DeviationMatchesDirectEvaluation) {
  for (const auto& p : table()) {
    for (double shift : {10.0, 300.0, 2e3, 5e4}) {
      MkidParams moved = p;
      moved.f0 -= shift;
      const double direct = std::abs(s21(p.f0, moved) - s21(p.f0, p));
      EXPECT_NEAR(iq_deviation_for_shift(p, shift), direct, 1e-12);
    }
  }
}

TEST(Responsivity, MinDetectableShiftInvertsDeviation) {
  for (const auto& p : table()) {
    const double sigma = 2e-3;
    const double shift = min_detectable_shift(p, 10.0, sigma);
    EXPECT_NEAR(iq_deviation_for_shift(p, shift), 10.0 * sigma, 1e-12);
  }
  try {
    min_detectable_shift(find_mkid(table(), "D10"), 10.0, 0.06);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "undetectable");
  }
}

}  // namespace
