#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "diesep/error.hpp"
#include "diesep/geometry.hpp"
#include "diesep/quadrature.hpp"
#include "diesep/random.hpp"

namespace diesep {

// ---------------------------------------------------------------------------
// Solid angle of a rectangle

namespace detail {
inline double corner_solid_angle(double x, double y, double h) {
  return std::atan2(x * y, h * std::sqrt(x * x + y * y + h * h));
}
}  // namespace detail

/// Solid angle (sr) that `face` subtends at `point`.
///
/// Only the side the face normal points to sees the face; points behind or in
/// the face plane get 0. Uses the exact corner decomposition about the foot of
/// the perpendicular, which holds for any foot position (inside or outside the
/// rectangle) because each corner term is odd in both offsets.
inline double solid_angle_of_rect(Vec3 point, const RectFace& face) {
  const double lu = norm(face.edge_u());
  const double lv = norm(face.edge_v());
  const Vec3 d = point - face.origin();
  const double h = dot(d, face.normal());
  if (!(h > 0.0)) return 0.0;
  const double px = dot(d, face.edge_u()) / lu;
  const double py = dot(d, face.edge_v()) / lv;
  const double x1 = -px, x2 = lu - px;
  const double y1 = -py, y2 = lv - py;
  using detail::corner_solid_angle;
  const double omega = corner_solid_angle(x2, y2, h) - corner_solid_angle(x1, y2, h) -
                       corner_solid_angle(x2, y1, h) + corner_solid_angle(x1, y1, h);
  return std::clamp(omega, 0.0, 2.0 * std::numbers::pi);
}

/// Same quantity by direct quadrature of n.(r1 - r2)/|r1 - r2|^3 over the face.
inline double solid_angle_quadrature(Vec3 point, const RectFace& face, const QuadratureSpec& quad) {
  check(quad);
  const Vec3 n = face.normal();
  if (!(dot(point - face.origin(), n) > 0.0)) return 0.0;
  const Rule1D ru = make_rule(quad.rule, quad.n_u);
  const Rule1D rv = make_rule(quad.rule, quad.n_v);
  double sum = 0.0;
  for (std::size_t i = 0; i < ru.nodes.size(); ++i) {
    for (std::size_t j = 0; j < rv.nodes.size(); ++j) {
      const Vec3 r = point - face.at(ru.nodes[i], rv.nodes[j]);
      const double dist = norm(r);
      sum += ru.weights[i] * rv.weights[j] * dot(n, r) / (dist * dist * dist);
    }
  }
  return std::clamp(sum * face.area(), 0.0, 2.0 * std::numbers::pi);
}

/// Area average over `surface1` of the fraction of one hemisphere of
/// directions (2 pi sr) that `surface2` subtends.
inline double pair_probability(const RectFace& surface1, const RectFace& surface2,
                               const QuadratureSpec& quad) {
  check(quad);
  const Rule1D ru = make_rule(quad.rule, quad.n_u);
  const Rule1D rv = make_rule(quad.rule, quad.n_v);
  double sum = 0.0;
  for (std::size_t i = 0; i < ru.nodes.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < rv.nodes.size(); ++j) {
      row += rv.weights[j] * solid_angle_of_rect(surface1.at(ru.nodes[i], rv.nodes[j]), surface2);
    }
    sum += ru.weights[i] * row;
  }
  return sum / (2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Particle entry model
//
// A particle is described by where and how it first enters a die: the die is
// chosen with probability proportional to its flux-weighted surface area, the
// entry point is uniform over the accepting faces, and the direction follows
// the angular model restricted to directions that enter through that face.
// It is a multi-die event when the forward continuation of the ray also
// crosses another die.

/// Probability that a direction drawn from `model` enters through a face with
/// outward axis-aligned normal `normal`.
inline double entry_acceptance(Vec3 normal, AngularModel model) {
  if (model == AngularModel::Isotropic) return 0.5;
  if (normal.z > 0.5) return 1.0;
  if (normal.z < -0.5) return 0.0;
  return 0.5;
}

class ParticleSource {
 public:
  ParticleSource(const Layout& layout, AngularModel model) : layout_(layout), model_(model) {
    validate(layout_);
    double total = 0.0;
    for (const auto& die : layout_.dies) {
      std::array<double, 6> cumulative{};
      double acc = 0.0;
      for (std::size_t f = 0; f < 6; ++f) {
        const RectFace face = die.face(all_faces[f]);
        acc += face.area() * entry_acceptance(face.normal(), model_);
        cumulative[f] = acc;
      }
      face_cdf_.push_back(cumulative);
      die_weight_.push_back(acc);
      total += acc;
    }
    double running = 0.0;
    for (auto& w : die_weight_) {
      w /= total;
      running += w;
      die_cdf_.push_back(running);
    }
  }

  const Layout& layout() const { return layout_; }
  AngularModel model() const { return model_; }
  std::size_t die_count() const { return layout_.dies.size(); }

  /// Share of particles whose first entry is die `d`.
  double die_weight(std::size_t d) const { return die_weight_[d]; }

  std::size_t sample_die(Stream& rng) const {
    const double u = uniform01(rng);
    for (std::size_t d = 0; d < die_cdf_.size(); ++d)
      if (u < die_cdf_[d]) return d;
    return die_cdf_.size() - 1;
  }

  Ray sample_entry(std::size_t d, Stream& rng) const {
    const auto& cdf = face_cdf_[d];
    const DieBox& die = layout_.dies[d];
    // The face weights already carry the acceptance, so only the direction is redrawn.
    const double u = uniform01(rng) * cdf[5];
    std::size_t f = 0;
    while (f < 5 && !(u < cdf[f])) ++f;
    const RectFace face = die.face(all_faces[f]);
    const Vec3 point = sample_point_on_face(face, rng);
    for (;;) {
      Vec3 dir = sample_direction(model_, rng);
      const double c = dot(dir, face.normal());
      if (model_ == AngularModel::Isotropic) {
        if (c > 0.0) dir = -dir;
        return {point, dir};
      }
      if (c < 0.0) return {point, dir};
    }
  }

  /// Indices of the other dies crossed by the forward ray.
  std::vector<std::size_t> forward_hits(std::size_t d, const Ray& ray) const {
    std::vector<std::size_t> hits;
    for (std::size_t o = 0; o < layout_.dies.size(); ++o) {
      if (o == d) continue;
      auto hit = ray_box_intersection(ray, layout_.dies[o]);
      if (hit && hit->t_exit > 0.0) hits.push_back(o);
    }
    return hits;
  }

  bool hits_other(std::size_t d, const Ray& ray) const {
    for (std::size_t o = 0; o < layout_.dies.size(); ++o) {
      if (o == d) continue;
      auto hit = ray_box_intersection(ray, layout_.dies[o]);
      if (hit && hit->t_exit > 0.0) return true;
    }
    return false;
  }

 private:
  Layout layout_;
  AngularModel model_;
  std::vector<std::array<double, 6>> face_cdf_;
  std::vector<double> die_weight_;
  std::vector<double> die_cdf_;
};

// ---------------------------------------------------------------------------
// Reports

enum class EstimateMethod { Analytic, MonteCarlo };
enum class CombineMode { LiteralSum, AreaWeighted };

inline const char* to_string(EstimateMethod m) {
  return m == EstimateMethod::Analytic ? "analytic" : "monte-carlo";
}
inline const char* to_string(CombineMode m) {
  return m == CombineMode::LiteralSum ? "literal-sum" : "area-weighted";
}

/// One (surface 1, surface 2) contribution of the analytic model.
struct PairTerm {
  std::string from_die;
  FaceId surface1 = FaceId::XMin;
  std::string to_die;
  FaceId surface2 = FaceId::XMin;
  double area_share = 0.0;  // area of surface 1 over the die's total area
  double probability = 0.0;
};

/// Probability that a particle entering `from_die` continues into another die.
struct DirectionalTerm {
  std::string from_die;
  double entry_weight = 0.0;
  double probability = 0.0;
  std::optional<double> std_error;
  std::optional<std::uint64_t> n_rays;
};

struct CoincidenceReport {
  EstimateMethod method = EstimateMethod::Analytic;
  AngularModel angular_model = AngularModel::Isotropic;
  std::optional<CombineMode> mode;

  double p_double = 0.0;                // multi-die particles / all particles
  double p_single = 0.0;                // single-die particles / all particles
  double double_to_single_ratio = 0.0;  // p_double / p_single
  double doubled_pair_probability = 0.0;  // 2 p_double: both travel directions, per die

  std::optional<double> mc_stderr;
  std::optional<std::uint64_t> n_rays;
  std::optional<std::uint64_t> seed;

  std::vector<DirectionalTerm> directions;
  std::vector<PairTerm> pairs;
};

namespace detail {
inline void finish(CoincidenceReport& r) {
  r.p_single = 1.0 - r.p_double;
  r.double_to_single_ratio = r.p_single > 0.0 ? r.p_double / r.p_single
                                              : std::numeric_limits<double>::infinity();
  r.doubled_pair_probability = 2.0 * r.p_double;
}
}  // namespace detail

/// Analytic double-hit probability of a two-die layout under isotropic flux.
///
/// For each travel direction (die d towards die o) surface 2 is the face of o
/// that looks at d, and surface 1 ranges over the five faces of d other than
/// the one looking at o. The pair probabilities are combined per `mode` into
/// the forward probability q(d -> o); the per-particle double fraction is the
/// entry-weighted sum over both directions, and `doubled_pair_probability`
/// carries the two-direction per-die figure.
inline CoincidenceReport double_hit_probability(const Layout& layout, const QuadratureSpec& quad,
                                                CombineMode mode) {
  if (layout.dies.size() != 2)
    throw Error("unsupported-layout", "analytic model needs exactly two dies");
  validate(layout);
  check(quad);
  const auto axis = separation_axis(layout.dies[0], layout.dies[1]);
  if (!axis) throw Error("invalid-layout", "dies are not separated along any axis");

  const ParticleSource source(layout, AngularModel::Isotropic);
  CoincidenceReport report;
  report.method = EstimateMethod::Analytic;
  report.mode = mode;

  for (std::size_t d = 0; d < 2; ++d) {
    const DieBox& from = layout.dies[d];
    const DieBox& to = layout.dies[1 - d];
    const bool to_is_above = to.min_corner[*axis] >= from.max_corner()[*axis];
    const FaceId facing = make_face_id(*axis, to_is_above);
    const FaceId surface2 = opposite(facing);
    const RectFace target = to.face(surface2);

    double q = 0.0;
    for (FaceId s1 : all_faces) {
      if (s1 == facing) continue;
      const RectFace start = from.face(s1);
      const double share = start.area() / from.surface_area();
      const double p = pair_probability(start, target, quad);
      q += (mode == CombineMode::AreaWeighted ? share : 1.0) * p;
      report.pairs.push_back({from.id, s1, to.id, surface2, share, p});
    }
    report.directions.push_back({from.id, source.die_weight(d), q, std::nullopt, std::nullopt});
  }
  report.p_double = report.directions[0].entry_weight * report.directions[0].probability +
                    report.directions[1].entry_weight * report.directions[1].probability;
  detail::finish(report);
  return report;
}

struct McOptions {
  std::uint64_t batches_per_die = 16;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Monte Carlo estimate of the same quantity, stratified by entry die.
///
/// `n_rays` is split evenly over the dies and each die's share over
/// `batches_per_die` batches, each with its own stream derived from
/// (seed, die, batch). Counts are merged by addition, so the result depends on
/// (seed, batch count) only, not on the thread count.
inline CoincidenceReport mc_double_hit(const Layout& layout, std::uint64_t n_rays,
                                       AngularModel model, std::uint64_t seed,
                                       const McOptions& opts = {}) {
  if (n_rays < 10000) throw Error("invalid-argument", "n_rays must be >= 1e4");
  if (layout.dies.size() < 2)
    throw Error("unsupported-layout", "coincidence needs at least two dies");
  if (opts.batches_per_die == 0) throw Error("invalid-argument", "batches_per_die must be > 0");
  const ParticleSource source(layout, model);
  const std::size_t n_dies = layout.dies.size();
  const std::uint64_t n_batches = opts.batches_per_die;

  struct Work {
    std::size_t die;
    std::uint64_t batch;
    std::uint64_t n;
    std::uint64_t hits = 0;
  };
  std::vector<Work> work;
  std::vector<std::uint64_t> per_die(n_dies, n_rays / n_dies);
  for (std::size_t d = 0; d < n_rays % n_dies; ++d) ++per_die[d];
  for (std::size_t d = 0; d < n_dies; ++d)
    for (std::uint64_t b = 0; b < n_batches; ++b)
      work.push_back({d, b, per_die[d] / n_batches + (b < per_die[d] % n_batches ? 1 : 0)});

  auto run = [&](Work& w) {
    Stream rng = make_stream(seed, {w.die, w.batch});
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < w.n; ++i) {
      if (source.hits_other(w.die, source.sample_entry(w.die, rng))) ++hits;
    }
    w.hits = hits;
  };

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, work.size()));
  if (threads <= 1) {
    for (auto& w : work) run(w);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < work.size(); i += threads) run(work[i]);
      });
    }
  }

  CoincidenceReport report;
  report.method = EstimateMethod::MonteCarlo;
  report.angular_model = model;
  report.n_rays = n_rays;
  report.seed = seed;
  double variance = 0.0;
  for (std::size_t d = 0; d < n_dies; ++d) {
    std::uint64_t hits = 0;
    for (const auto& w : work)
      if (w.die == d) hits += w.hits;
    const double q = static_cast<double>(hits) / static_cast<double>(per_die[d]);
    const double var = q * (1.0 - q) / static_cast<double>(per_die[d]);
    const double weight = source.die_weight(d);
    report.p_double += weight * q;
    variance += weight * weight * var;
    report.directions.push_back({layout.dies[d].id, weight, q, std::sqrt(var), per_die[d]});
  }
  report.mc_stderr = std::sqrt(variance);
  detail::finish(report);
  return report;
}

}  // namespace diesep
