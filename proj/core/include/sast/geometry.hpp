#pragma once

#include <array>
#include <cmath>

namespace sast {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double norm_squared() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_squared()); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
  }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Unit quaternion, scalar-last storage order matches the (qx, qy, qz, qw)
/// wire layout used by the scenario format.
struct Quat {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;

  constexpr Quat() = default;
  constexpr Quat(double qx, double qy, double qz, double qw) : x(qx), y(qy), z(qz), w(qw) {}

  static constexpr Quat identity() { return {0.0, 0.0, 0.0, 1.0}; }
  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 u = axis.normalized();
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {u.x * s, u.y * s, u.z * s, std::cos(h)};
  }

  constexpr bool operator==(const Quat& o) const {
    return x == o.x && y == o.y && z == o.z && w == o.w;
  }

  constexpr double dot(const Quat& o) const { return x * o.x + y * o.y + z * o.z + w * o.w; }
  double norm() const { return std::sqrt(dot(*this)); }
  Quat normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n, w / n};
  }
  constexpr Quat conjugate() const { return {-x, -y, -z, w}; }

  // Hamilton product.
  constexpr Quat operator*(const Quat& o) const {
    return {w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w,
            w * o.w - x * o.x - y * o.y - z * o.z};
  }

  Vec3 rotate(const Vec3& v) const {
    // q v q* expanded via the cross-product form.
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }
};

/// Geodesic angle between two rotations in [0, pi]; handles double cover.
double quat_angle(const Quat& a, const Quat& b);

/// Shortest-arc spherical interpolation; s=0 yields a exactly, s=1 yields b.
Quat slerp(const Quat& a, const Quat& b, double s);

struct Pose {
  Vec3 translation;
  Quat rotation = Quat::identity();

  static constexpr Pose identity() { return {}; }

  constexpr bool operator==(const Pose& o) const {
    return translation == o.translation && rotation == o.rotation;
  }

  /// Composition: (this * o) applies o first, then this.
  Pose operator*(const Pose& o) const {
    return {translation + rotation.rotate(o.translation), (rotation * o.rotation).normalized()};
  }
  Pose inverse() const {
    const Quat r = rotation.conjugate();
    return {r.rotate(-translation), r};
  }
  Vec3 apply(const Vec3& p) const { return translation + rotation.rotate(p); }
};

/// Rigid box. mass == 0 marks a static body.
struct BoxShape {
  Vec3 half_extents{0.03, 0.03, 0.03};
  double mass = 0.0;
};

struct Aabb {
  Vec3 min;
  Vec3 max;

  constexpr bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  constexpr Vec3 extent() const { return max - min; }
  constexpr Vec3 center() const { return (min + max) * 0.5; }
};

/// Translational Euclidean distance plus w_rot times the rotation geodesic.
double pose_distance(const Pose& a, const Pose& b, double w_rot);

/// Separating-axis test for two oriented boxes. Overlap must exceed tol on
/// every one of the 15 candidate axes to count as an intersection, so face
/// contact within tol reads as non-intersecting.
bool boxes_intersect(const BoxShape& sa, const Pose& pa, const BoxShape& sb, const Pose& pb,
                     double tol);

/// Linear translation + shortest-arc rotation interpolation, s in [0, 1].
Pose interpolate_pose(const Pose& a, const Pose& b, double s);

std::array<Vec3, 8> box_corners(const BoxShape& shape, const Pose& pose);
Aabb box_world_aabb(const BoxShape& shape, const Pose& pose);

/// Closest point on a posed solid box to p.
Vec3 closest_point_on_box(const BoxShape& shape, const Pose& pose, const Vec3& p);

}  // namespace sast
