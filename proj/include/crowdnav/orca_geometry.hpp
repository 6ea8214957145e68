#pragma once

#include "crowdnav/core.hpp"
#include "crowdnav/dual.hpp"
#include "crowdnav/vec2.hpp"

namespace crowdnav {

template <class S>
struct HalfPlaneT {
  Vec2T<S> normal;  // unit
  S offset;         // feasible set {v : normal . v >= offset}
};

namespace detail {

// ORCA half-plane of `self` against a moving neighbor. Scalar-templated so the
// MPC assembly can evaluate it with dual numbers and obtain exact Jacobians of
// (normal, offset) with respect to positions and velocities.
//
// Construction follows the reciprocal velocity obstacle recipe: u is the
// shortest correction taking the relative velocity to the boundary of the
// tau-truncated velocity obstacle, and the returned plane asks `self` to take
// `responsibility` of that correction. Overlapping agents fall back to a
// separation push resolved within one `escape_dt`.
template <class S>
HalfPlaneT<S> agent_halfplane_impl(const Vec2T<S>& self_pos, const Vec2T<S>& self_vel,
                                   const Vec2T<S>& other_pos, const Vec2T<S>& other_vel,
                                   double combined_radius, double tau, double responsibility,
                                   double escape_dt) {
  using std::sqrt;
  const Vec2T<S> rel_pos = other_pos - self_pos;
  const Vec2T<S> rel_vel = self_vel - other_vel;
  const S dist_sq = norm_sq(rel_pos);
  const double r_sq = combined_radius * combined_radius;

  Vec2T<S> n;  // outward unit normal of the VO at the projection of rel_vel
  Vec2T<S> u;  // shortest vector from rel_vel to the VO boundary

  const bool overlapping = !(value_of(dist_sq) > r_sq);
  const double horizon = overlapping ? escape_dt : tau;
  bool on_circle = overlapping;

  if (!overlapping) {
    const Vec2T<S> w = rel_vel - rel_pos / S(tau);
    const S w_len_sq = norm_sq(w);
    const S dot1 = dot(w, rel_pos);
    if (value_of(dot1) < 0.0 && value_of(dot1) * value_of(dot1) > r_sq * value_of(w_len_sq)) {
      on_circle = true;  // closest boundary point lies on the cutoff arc
    } else {
      const S leg = sqrt(dist_sq - S(r_sq));
      Vec2T<S> dir;
      if (value_of(cross(rel_pos, w)) > 0.0) {  // project on left leg
        dir = Vec2T<S>(rel_pos.x * leg - rel_pos.y * S(combined_radius),
                       rel_pos.x * S(combined_radius) + rel_pos.y * leg) /
              dist_sq;
      } else {  // right leg
        dir = -Vec2T<S>(rel_pos.x * leg + rel_pos.y * S(combined_radius),
                        rel_pos.x * S(-combined_radius) + rel_pos.y * leg) /
              dist_sq;
      }
      const S along = dot(rel_vel, dir);
      u = dir * along - rel_vel;
      n = perp(dir);
    }
  }

  if (on_circle) {
    const Vec2T<S> w = rel_vel - rel_pos / S(horizon);
    const S w_len_sq = norm_sq(w);
    if (value_of(w_len_sq) > 1e-24) {
      const S w_len = sqrt(w_len_sq);
      n = w / w_len;
      u = n * (S(combined_radius / horizon) - w_len);
    } else {
      // Relative velocity sits exactly at the cutoff center: push straight apart.
      Vec2T<S> away = -rel_pos;
      const S away_len = sqrt(norm_sq(away) + S(1e-30));
      if (value_of(away_len) < 1e-12) away = Vec2T<S>(S(1.0), S(0.0));
      n = away / away_len;
      u = n * S(combined_radius / horizon);
    }
  }

  HalfPlaneT<S> plane;
  plane.normal = n;
  const Vec2T<S> point = self_vel + u * S(responsibility);
  plane.offset = dot(n, point);
  return plane;
}

// Conservative half-plane keeping `self` at least `radius` away from a segment
// over `tau_obst`, linearized about the closest feature (interior or endpoint).
template <class S>
HalfPlaneT<S> obstacle_halfplane_impl(const Vec2T<S>& self_pos, const Segment& seg, double radius,
                                      double tau_obst) {
  using std::sqrt;
  const Vec2T<S> a(S(seg.a.x), S(seg.a.y));
  const Vec2T<S> seg_dir(S(seg.b.x - seg.a.x), S(seg.b.y - seg.a.y));
  const double len_sq = norm_sq(Vec2{seg.b.x - seg.a.x, seg.b.y - seg.a.y});

  const S t = dot(self_pos - a, seg_dir) / S(len_sq);
  Vec2T<S> closest;
  if (value_of(t) <= 0.0) {
    closest = a;
  } else if (value_of(t) >= 1.0) {
    closest = a + seg_dir;
  } else {
    closest = a + seg_dir * t;
  }

  Vec2T<S> diff = self_pos - closest;
  const S dist_sq = norm_sq(diff);
  HalfPlaneT<S> plane;
  if (value_of(dist_sq) > 1e-24) {
    const S dist = sqrt(dist_sq);
    plane.normal = diff / dist;
    plane.offset = (S(radius) - dist) / S(tau_obst);
  } else {
    // On the segment itself: pick the left perpendicular deterministically.
    Vec2 pd = normalized(perp(Vec2{seg.b.x - seg.a.x, seg.b.y - seg.a.y}));
    plane.normal = Vec2T<S>(S(pd.x), S(pd.y));
    plane.offset = S(radius / tau_obst);
  }
  return plane;
}

}  // namespace detail
}  // namespace crowdnav
