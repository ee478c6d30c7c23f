#include "sast/geometry.hpp"

#include <algorithm>
#include <limits>

namespace sast {

double quat_angle(const Quat& a, const Quat& b) {
  const double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

Quat slerp(const Quat& a, const Quat& b, double s) {
  if (s <= 0.0) return a;
  if (s >= 1.0) return b;
  Quat to = b;
  double cosom = a.dot(b);
  if (cosom < 0.0) {  // shortest arc
    cosom = -cosom;
    to = {-b.x, -b.y, -b.z, -b.w};
  }
  double k0;
  double k1;
  if (cosom > 1.0 - 1e-10) {
    // nearly parallel, lerp + renormalize
    k0 = 1.0 - s;
    k1 = s;
  } else {
    const double omega = std::acos(std::min(1.0, cosom));
    const double sinom = std::sin(omega);
    k0 = std::sin((1.0 - s) * omega) / sinom;
    k1 = std::sin(s * omega) / sinom;
  }
  return Quat{k0 * a.x + k1 * to.x, k0 * a.y + k1 * to.y, k0 * a.z + k1 * to.z,
              k0 * a.w + k1 * to.w}
      .normalized();
}

double pose_distance(const Pose& a, const Pose& b, double w_rot) {
  return (a.translation - b.translation).norm() + w_rot * quat_angle(a.rotation, b.rotation);
}

namespace {

struct BoxFrame {
  Vec3 center;
  Vec3 axis[3];
  Vec3 half;
};

BoxFrame make_frame(const BoxShape& s, const Pose& p) {
  BoxFrame f;
  f.center = p.translation;
  f.axis[0] = p.rotation.rotate({1.0, 0.0, 0.0});
  f.axis[1] = p.rotation.rotate({0.0, 1.0, 0.0});
  f.axis[2] = p.rotation.rotate({0.0, 0.0, 1.0});
  f.half = s.half_extents;
  return f;
}

// Overlap depth of the two boxes projected onto a (not necessarily unit) axis.
// Returns +inf for degenerate axes so they never separate.
double axis_overlap(const BoxFrame& a, const BoxFrame& b, const Vec3& axis) {
  const double len2 = axis.norm_squared();
  if (len2 < 1e-12) return std::numeric_limits<double>::infinity();
  const double len = std::sqrt(len2);
  const double ra = a.half.x * std::abs(a.axis[0].dot(axis)) +
                    a.half.y * std::abs(a.axis[1].dot(axis)) +
                    a.half.z * std::abs(a.axis[2].dot(axis));
  const double rb = b.half.x * std::abs(b.axis[0].dot(axis)) +
                    b.half.y * std::abs(b.axis[1].dot(axis)) +
                    b.half.z * std::abs(b.axis[2].dot(axis));
  const double dist = std::abs((b.center - a.center).dot(axis));
  return (ra + rb - dist) / len;
}

}  // namespace

bool boxes_intersect(const BoxShape& sa, const Pose& pa, const BoxShape& sb, const Pose& pb,
                     double tol) {
  const BoxFrame a = make_frame(sa, pa);
  const BoxFrame b = make_frame(sb, pb);
  for (int i = 0; i < 3; ++i) {
    if (axis_overlap(a, b, a.axis[i]) <= tol) return false;
    if (axis_overlap(a, b, b.axis[i]) <= tol) return false;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (axis_overlap(a, b, a.axis[i].cross(b.axis[j])) <= tol) return false;
    }
  }
  return true;
}

Pose interpolate_pose(const Pose& a, const Pose& b, double s) {
  if (s <= 0.0) return a;
  if (s >= 1.0) return b;
  return {a.translation + (b.translation - a.translation) * s, slerp(a.rotation, b.rotation, s)};
}

std::array<Vec3, 8> box_corners(const BoxShape& shape, const Pose& pose) {
  const Vec3& h = shape.half_extents;
  std::array<Vec3, 8> out;
  int k = 0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sz : {-1, 1}) {
        out[k++] = pose.apply({sx * h.x, sy * h.y, sz * h.z});
      }
    }
  }
  return out;
}

Aabb box_world_aabb(const BoxShape& shape, const Pose& pose) {
  const auto corners = box_corners(shape, pose);
  Aabb box{corners[0], corners[0]};
  for (const Vec3& c : corners) {
    box.min.x = std::min(box.min.x, c.x);
    box.min.y = std::min(box.min.y, c.y);
    box.min.z = std::min(box.min.z, c.z);
    box.max.x = std::max(box.max.x, c.x);
    box.max.y = std::max(box.max.y, c.y);
    box.max.z = std::max(box.max.z, c.z);
  }
  return box;
}

Vec3 closest_point_on_box(const BoxShape& shape, const Pose& pose, const Vec3& p) {
  const Vec3 local = pose.inverse().apply(p);
  const Vec3& h = shape.half_extents;
  const Vec3 clamped{std::clamp(local.x, -h.x, h.x), std::clamp(local.y, -h.y, h.y),
                     std::clamp(local.z, -h.z, h.z)};
  return pose.apply(clamped);
}

}  // namespace sast
