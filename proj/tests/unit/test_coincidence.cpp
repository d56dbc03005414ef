#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "diesep.hpp"
#include "oracles.hpp"

using namespace diesep;

namespace {

constexpr double kPi = std::numbers::pi;

Layout example_layout() { return load_layout(std::string(DIESEP_DATA_DIR) + "/example_layout.json"); }

TEST(SolidAngle, PointAboveCenterOfSquare) {
  const RectFace f({-1, -1, 0}, {2, 0, 0}, {0, 2, 0});
  EXPECT_NEAR(solid_angle_of_rect({0, 0, 1}, f), 2.0 * kPi / 3.0, 1e-9);
  EXPECT_NEAR(4.0 * std::atan(1.0 / std::sqrt(3.0)), 2.0 * kPi / 3.0, 1e-15);
}

TEST(SolidAngle, FarFieldAsymptote) {
  const RectFace f({-0.5, -0.5, 0}, {1, 0, 0}, {0, 1, 0});
  EXPECT_NEAR(solid_angle_of_rect({0, 0, 100}, f) / 1e-4, 1.0, 1e-4);
}

TEST(SolidAngle, CoplanarAndBehindAreZero) {
  const RectFace f({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
  EXPECT_EQ(solid_angle_of_rect({3, 0.5, 0}, f), 0.0);
  EXPECT_EQ(solid_angle_of_rect({0.5, 0.5, -1}, f), 0.0);
  EXPECT_EQ(solid_angle_quadrature({0.5, 0.5, -1}, f, {}), 0.0);
}

TEST(SolidAngle, MatchesMonteCarloOracle) {
  Stream rng = make_stream(21);
  for (int c = 0; c < 6; ++c) {
    const RectFace f({0, 0, 0}, {1 + 2 * uniform01(rng), 0, 0}, {0, 0.5 + uniform01(rng), 0});
    const Vec3 p{4 * uniform01(rng) - 1.5, 4 * uniform01(rng) - 1.5, 0.2 + 2 * uniform01(rng)};
    const auto mc = oracle::solid_angle_mc(p, f, 400000, 100 + c);
    EXPECT_NEAR(solid_angle_of_rect(p, f), mc.value, 4.0 * mc.std_error + 1e-12) << "case " << c;
  }
}

TEST(SolidAngle, MatchesMidpointOracleForArbitraryPose) {
  Stream rng = make_stream(22);
  for (int c = 0; c < 20; ++c) {
    const Vec3 u = normalized(sample_direction_isotropic(rng));
    Vec3 v = cross(u, sample_direction_isotropic(rng));
    v = normalized(v);
    const RectFace f({0, 0, 0}, (0.5 + uniform01(rng)) * u, (0.5 + uniform01(rng)) * v);
    const Vec3 p = f.center() + (0.5 + uniform01(rng)) * f.normal() + (uniform01(rng) - 0.5) * u;
    const double ref = oracle::solid_angle_midpoint(p, f, 1000);
    EXPECT_NEAR(solid_angle_of_rect(p, f), ref, 1e-5 * ref) << "case " << c;
    EXPECT_NEAR(solid_angle_quadrature(p, f, {64, 64, QuadratureRule::GaussLegendre}), ref, 1e-5 * ref);
  }
}

TEST(Quadrature, GaussLegendreIsExactForPolynomials) {
  for (int n : {2, 5, 16, 32}) {
    const Rule1D r = gauss_legendre_unit(n);
    for (int deg = 0; deg < 2 * n; ++deg) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.nodes[i], deg);
      EXPECT_NEAR(s, 1.0 / (deg + 1), 1e-13) << "n=" << n << " deg=" << deg;
    }
  }
}

TEST(Quadrature, RejectsTooFewNodes) {
  try {
    pair_probability(RectFace({0, 0, 0}, {1, 0, 0}, {0, 1, 0}), RectFace({0, 0, 1}, {0, 1, 0}, {1, 0, 0}),
                     {1, 4, QuadratureRule::Midpoint});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-quadrature");
  }
}

// surface1 is an entry face (normal out of its die); surface2 faces back at it.
std::pair<RectFace, RectFace> facing_squares(double gap, double edge = 1.0) {
  const RectFace s1({0, 0, 0}, {0, edge, 0}, {edge, 0, 0});  // normal -z
  const RectFace s2({0, 0, gap}, {0, edge, 0}, {edge, 0, 0});  // normal -z, looks down at s1
  return {s1, s2};
}

TEST(PairProbability, TouchingSquaresSeeAFullHemisphere) {
  const auto [s1, s2] = facing_squares(1e-4);
  EXPECT_NEAR(pair_probability(s1, s2, {}), 1.0, 1e-3);
}

TEST(PairProbability, FarFieldLimit) {
  const auto [s1, s2] = facing_squares(100.0);
  EXPECT_NEAR(pair_probability(s1, s2, {}) / (1.0 / (2.0 * kPi * 1e4)), 1.0, 0.01);
}

TEST(PairProbability, ExampleLayoutSideFaceMatchesMonteCarlo) {
  const Layout l = example_layout();
  const RectFace face_b = l.dies[0].face(FaceId::YMin);
  const RectFace face_a = l.dies[1].face(FaceId::XMin);
  const auto mc = oracle::pair_probability_mc(face_b, face_a, 2000000, 5);
  EXPECT_NEAR(pair_probability(face_b, face_a, {}), mc.value, 3.0 * mc.std_error);
}

TEST(PairProbability, GaussLegendreConverges) {
  const Layout l = example_layout();
  const RectFace s1 = l.dies[0].face(FaceId::ZMax);
  const RectFace s2 = l.dies[1].face(FaceId::XMin);
  const double p32 = pair_probability(s1, s2, {32, 32, QuadratureRule::GaussLegendre});
  const double p96 = pair_probability(s1, s2, {96, 96, QuadratureRule::GaussLegendre});
  const double mid = pair_probability(s1, s2, {400, 400, QuadratureRule::Midpoint});
  EXPECT_NEAR(p32, p96, 1e-7);
  EXPECT_NEAR(mid, p96, 1e-4);
}

TEST(DoubleHit, RequiresExactlyTwoDies) {
  Layout l = example_layout();
  l.dies.push_back({"third", {0, 20, 0}, {1, 1, 1}});
  try {
    double_hit_probability(l, {}, CombineMode::AreaWeighted);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unsupported-layout");
  }
}

TEST(DoubleHit, OverlapIsInvalidLayout) {
  Layout l = oracle::two_dies(1, 1, 1, 1, -0.5);
  try {
    double_hit_probability(l, {}, CombineMode::AreaWeighted);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-layout");
  }
}

TEST(DoubleHit, VanishesAtLargeSeparation) {
  const auto r = double_hit_probability(oracle::two_dies(1, 1, 1, 1, 1e5), {}, CombineMode::AreaWeighted);
  EXPECT_LT(r.p_double, 1e-10);
  EXPECT_GT(r.p_double, 0.0);
}

TEST(DoubleHit, ExampleLayoutNearFourPercent) {
  const auto area = double_hit_probability(example_layout(), {}, CombineMode::AreaWeighted);
  const auto literal = double_hit_probability(example_layout(), {}, CombineMode::LiteralSum);
  EXPECT_NEAR(area.double_to_single_ratio, 0.04, 0.005);
  EXPECT_NEAR(area.double_to_single_ratio, area.p_double / area.p_single, 1e-15);
  EXPECT_DOUBLE_EQ(area.doubled_pair_probability, 2.0 * area.p_double);
  EXPECT_GT(literal.p_double, area.p_double);
  for (const auto* r : {&area, &literal}) {
    EXPECT_LE(0.0, r->p_double);
    EXPECT_LE(r->p_double, r->p_single);
    EXPECT_LE(r->p_single, 1.0);
  }
  ASSERT_EQ(area.pairs.size(), 10u);
  ASSERT_EQ(area.directions.size(), 2u);
  EXPECT_NEAR(area.directions[0].probability, area.directions[1].probability, 1e-14);
}

TEST(DoubleHit, AreaWeightedMatchesMonteCarlo) {
  const Layout l = example_layout();
  const auto analytic = double_hit_probability(l, {}, CombineMode::AreaWeighted);
  const auto mc = mc_double_hit(l, 400000, AngularModel::Isotropic, 3);
  ASSERT_TRUE(mc.mc_stderr);
  EXPECT_NEAR(analytic.p_double, mc.p_double, 3.0 * *mc.mc_stderr);
}

TEST(DoubleHit, LibraryMonteCarloMatchesIndependentOracle) {
  for (const Layout& l : {example_layout(), oracle::two_dies(2, 3, 1, 0.7, 0.4)}) {
    const auto mc = mc_double_hit(l, 400000, AngularModel::Isotropic, 17);
    const auto ref = oracle::double_hit_mc(l, 400000, 18);
    const double sigma = std::hypot(*mc.mc_stderr, ref.std_error);
    EXPECT_NEAR(mc.p_double, ref.value, 4.0 * sigma);
  }
}

TEST(DoubleHit, NearlyTouchingCubes) {
  const Layout l = oracle::two_dies(1, 1, 1, 1, 1e-6);
  const auto analytic = double_hit_probability(l, {}, CombineMode::AreaWeighted);
  const auto mc = mc_double_hit(l, 400000, AngularModel::Isotropic, 4);
  EXPECT_NEAR(analytic.p_double, mc.p_double, 3.0 * *mc.mc_stderr);
  EXPECT_NEAR(analytic.directions[0].probability, mc.directions[0].probability,
              3.0 * *mc.directions[0].std_error);
}

TEST(MonteCarlo, RejectsTooFewRays) {
  try {
    mc_double_hit(example_layout(), 9999, AngularModel::Isotropic, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-argument");
  }
}

TEST(MonteCarlo, DeterministicAcrossThreadCounts) {
  const Layout l = example_layout();
  const auto a = mc_double_hit(l, 100000, AngularModel::CosZenith, 77, {16, 1});
  const auto b = mc_double_hit(l, 100000, AngularModel::CosZenith, 77, {16, 4});
  EXPECT_EQ(a.p_double, b.p_double);
  EXPECT_EQ(*a.mc_stderr, *b.mc_stderr);
  const auto c = mc_double_hit(l, 100000, AngularModel::CosZenith, 78, {16, 1});
  EXPECT_NE(a.p_double, c.p_double);
}

TEST(MonteCarlo, CosZenithEntryWeights) {
  // Flat dies: the top face dominates the cos-zenith entry weight.
  const ParticleSource src(example_layout(), AngularModel::CosZenith);
  EXPECT_NEAR(src.die_weight(0) + src.die_weight(1), 1.0, 1e-15);
  Stream rng = make_stream(5);
  int from_top = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Ray r = src.sample_entry(0, rng);
    EXPECT_LT(r.direction.z, 0.0);
    if (std::abs(r.origin.z - 0.5) < 1e-12) ++from_top;
  }
  // top area 100 with acceptance 1, sides 4 x 5 x 0.5 = 20 with acceptance 1/2
  EXPECT_NEAR(static_cast<double>(from_top) / n, 100.0 / 110.0, 0.01);
}

}  // namespace
