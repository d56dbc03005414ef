#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diesep/error.hpp"
#include "diesep/random.hpp"

namespace diesep {

// Positions are in millimeters; directions are unit vectors. The vertical axis
// is +z (zenith).

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  constexpr double& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

/// Box faces, ordered so that `axis = id / 2` and the max side has odd id.
enum class FaceId : int { XMin = 0, XMax, YMin, YMax, ZMin, ZMax };

constexpr int face_axis(FaceId f) { return static_cast<int>(f) / 2; }
constexpr bool face_is_max(FaceId f) { return static_cast<int>(f) % 2 == 1; }
constexpr FaceId make_face_id(int axis, bool is_max) {
  return static_cast<FaceId>(2 * axis + (is_max ? 1 : 0));
}
constexpr FaceId opposite(FaceId f) { return make_face_id(face_axis(f), !face_is_max(f)); }

inline const char* to_string(FaceId f) {
  static constexpr std::array<const char*, 6> names{"x-min", "x-max", "y-min",
                                                     "y-max", "z-min", "z-max"};
  return names[static_cast<std::size_t>(f)];
}

constexpr std::array<FaceId, 6> all_faces{FaceId::XMin, FaceId::XMax, FaceId::YMin,
                                          FaceId::YMax, FaceId::ZMin, FaceId::ZMax};

/// Planar rectangle spanned by two orthogonal edges from `origin`.
/// The normal is unit(edge_u x edge_v); for box faces that is the outward normal.
class RectFace {
 public:
  RectFace(Vec3 origin, Vec3 edge_u, Vec3 edge_v)
      : origin_(origin), edge_u_(edge_u), edge_v_(edge_v) {
    const double lu = norm(edge_u);
    const double lv = norm(edge_v);
    if (!(lu > 0.0) || !(lv > 0.0)) {
      throw Error("degenerate-face", "rectangle edge has zero length");
    }
    if (std::abs(dot(edge_u, edge_v)) > 1e-9 * lu * lv) {
      throw Error("degenerate-face", "rectangle edges are not orthogonal");
    }
    normal_ = normalized(cross(edge_u, edge_v));
  }

  Vec3 origin() const { return origin_; }
  Vec3 edge_u() const { return edge_u_; }
  Vec3 edge_v() const { return edge_v_; }
  Vec3 normal() const { return normal_; }
  double area() const { return norm(edge_u_) * norm(edge_v_); }
  Vec3 center() const { return origin_ + 0.5 * edge_u_ + 0.5 * edge_v_; }

  /// Point at fractional coordinates (a, b) in [0,1]^2.
  Vec3 at(double a, double b) const { return origin_ + a * edge_u_ + b * edge_v_; }

 private:
  Vec3 origin_;
  Vec3 edge_u_;
  Vec3 edge_v_;
  Vec3 normal_;
};

struct DieBox {
  std::string id;
  Vec3 min_corner;
  Vec3 dimensions;

  Vec3 max_corner() const { return min_corner + dimensions; }
  double surface_area() const {
    const auto& d = dimensions;
    return 2.0 * (d.x * d.y + d.y * d.z + d.z * d.x);
  }

  /// Face with outward normal.
  RectFace face(FaceId f) const {
    const Vec3 lo = min_corner;
    const Vec3 hi = max_corner();
    const Vec3 ex{dimensions.x, 0, 0};
    const Vec3 ey{0, dimensions.y, 0};
    const Vec3 ez{0, 0, dimensions.z};
    switch (f) {
      case FaceId::XMin: return {lo, ez, ey};
      case FaceId::XMax: return {{hi.x, lo.y, lo.z}, ey, ez};
      case FaceId::YMin: return {lo, ex, ez};
      case FaceId::YMax: return {{lo.x, hi.y, lo.z}, ez, ex};
      case FaceId::ZMin: return {lo, ey, ex};
      case FaceId::ZMax: return {{lo.x, lo.y, hi.z}, ex, ey};
    }
    throw Error("invalid-face", "unknown face id");
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct BoxHit {
  double t_enter = 0.0;
  double t_exit = 0.0;
  FaceId entry_face = FaceId::XMin;
  FaceId exit_face = FaceId::XMin;
};

/// Slab intersection of a ray with an axis-aligned box.
///
/// Grazing contact (t_enter == t_exit) counts as a hit. An origin inside the
/// box yields a negative t_enter whose face is the one behind the origin.
/// Boxes entirely behind the origin (t_exit < 0) are a miss.
inline std::optional<BoxHit> ray_box_intersection(const Ray& ray, const DieBox& box) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Vec3 lo = box.min_corner;
  const Vec3 hi = box.max_corner();
  BoxHit hit{-inf, inf, FaceId::XMin, FaceId::XMin};
  for (int axis = 0; axis < 3; ++axis) {
    const double o = ray.origin[axis];
    const double d = ray.direction[axis];
    if (d == 0.0) {
      if (o < lo[axis] || o > hi[axis]) return std::nullopt;
      continue;
    }
    double t_near = (lo[axis] - o) / d;
    double t_far = (hi[axis] - o) / d;
    FaceId near_face = make_face_id(axis, false);
    FaceId far_face = make_face_id(axis, true);
    if (d < 0.0) {
      std::swap(t_near, t_far);
      std::swap(near_face, far_face);
    }
    if (t_near > hit.t_enter) {
      hit.t_enter = t_near;
      hit.entry_face = near_face;
    }
    if (t_far < hit.t_exit) {
      hit.t_exit = t_far;
      hit.exit_face = far_face;
    }
  }
  if (hit.t_enter > hit.t_exit || hit.t_exit < 0.0) return std::nullopt;
  return hit;
}

// ---------------------------------------------------------------------------
// Direction and point sampling

enum class AngularModel { Isotropic, CosZenith };

inline const char* to_string(AngularModel m) {
  return m == AngularModel::Isotropic ? "isotropic" : "cos-zenith";
}

/// Uniform on the unit sphere.
inline Vec3 sample_direction_isotropic(Stream& rng) {
  const double z = 2.0 * uniform01(rng) - 1.0;
  const double phi = 2.0 * std::numbers::pi * uniform01(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return normalized({r * std::cos(phi), r * std::sin(phi), z});
}

/// Downward-going direction with zenith density p(theta) ~ cos(theta) sin(theta),
/// uniform azimuth. cos(theta) = sqrt(u) with u in (0, 1].
inline Vec3 sample_direction_cos_zenith(Stream& rng) {
  const double u = 1.0 - uniform01(rng);
  const double cos_t = std::sqrt(u);
  const double sin_t = std::sqrt(1.0 - u);
  const double phi = 2.0 * std::numbers::pi * uniform01(rng);
  return normalized({sin_t * std::cos(phi), sin_t * std::sin(phi), -cos_t});
}

inline Vec3 sample_direction(AngularModel model, Stream& rng) {
  return model == AngularModel::Isotropic ? sample_direction_isotropic(rng)
                                          : sample_direction_cos_zenith(rng);
}

inline Vec3 sample_point_on_face(const RectFace& face, Stream& rng) {
  const double a = uniform01(rng);
  const double b = uniform01(rng);
  return face.at(a, b);
}

// ---------------------------------------------------------------------------
// Layout

struct Layout {
  std::vector<DieBox> dies;
  std::optional<double> gap;  // declared gap, informational only

  const DieBox* find(const std::string& id) const {
    for (const auto& d : dies)
      if (d.id == id) return &d;
    return nullptr;
  }
};

inline bool boxes_overlap(const DieBox& a, const DieBox& b) {
  for (int axis = 0; axis < 3; ++axis) {
    const bool disjoint = a.max_corner()[axis] <= b.min_corner[axis] ||
                          b.max_corner()[axis] <= a.min_corner[axis];
    if (disjoint) return false;
  }
  return true;
}

/// Throws "invalid-layout" on empty layouts, non-positive dimensions, duplicate
/// ids or interior overlap.
inline void validate(const Layout& layout) {
  if (layout.dies.empty()) throw Error("invalid-layout", "layout has no dies");
  std::set<std::string> ids;
  for (const auto& d : layout.dies) {
    if (!(d.dimensions.x > 0 && d.dimensions.y > 0 && d.dimensions.z > 0)) {
      throw Error("invalid-layout", "die '" + d.id + "' has non-positive dimensions");
    }
    if (!ids.insert(d.id).second) throw Error("invalid-layout", "duplicate die id '" + d.id + "'");
  }
  for (std::size_t i = 0; i < layout.dies.size(); ++i)
    for (std::size_t j = i + 1; j < layout.dies.size(); ++j)
      if (boxes_overlap(layout.dies[i], layout.dies[j]))
        throw Error("invalid-layout",
                    "dies '" + layout.dies[i].id + "' and '" + layout.dies[j].id + "' overlap");
}

/// Axis along which the two boxes' extents are disjoint, or nullopt.
inline std::optional<int> separation_axis(const DieBox& a, const DieBox& b) {
  for (int axis = 0; axis < 3; ++axis) {
    if (a.max_corner()[axis] <= b.min_corner[axis] || b.max_corner()[axis] <= a.min_corner[axis])
      return axis;
  }
  return std::nullopt;
}

}  // namespace diesep
