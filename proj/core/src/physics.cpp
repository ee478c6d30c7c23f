#include "sast/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sast {

namespace {

constexpr double kContactMargin = 0.04;  // speculative contact distance
constexpr double kMaxLinVel = 50.0;
constexpr double kMaxAngVel = 100.0;
constexpr double kPosBeta = 0.2;
constexpr double kMaxPosCorrection = 0.05;

struct Frame {
  Vec3 center;
  Vec3 axis[3];
  Vec3 half;
};

Frame make_frame(const BoxShape& s, const Pose& p) {
  Frame f;
  f.center = p.translation;
  f.axis[0] = p.rotation.rotate({1.0, 0.0, 0.0});
  f.axis[1] = p.rotation.rotate({0.0, 1.0, 0.0});
  f.axis[2] = p.rotation.rotate({0.0, 0.0, 1.0});
  f.half = s.half_extents;
  return f;
}

double projected_radius(const Frame& f, const Vec3& n) {
  return f.half.x * std::abs(f.axis[0].dot(n)) + f.half.y * std::abs(f.axis[1].dot(n)) +
         f.half.z * std::abs(f.axis[2].dot(n));
}

struct FaceQuery {
  double sep = -std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 1.0;
};

FaceQuery query_faces(const Frame& ref, const Frame& inc) {
  FaceQuery q;
  for (int i = 0; i < 3; ++i) {
    const Vec3& n = ref.axis[i];
    const double d = (inc.center - ref.center).dot(n);
    const double sep = std::abs(d) - (ref.half[i] + projected_radius(inc, n));
    if (sep > q.sep) {
      q.sep = sep;
      q.axis = i;
      q.sign = d >= 0.0 ? 1.0 : -1.0;
    }
  }
  return q;
}

struct EdgeQuery {
  double sep = -std::numeric_limits<double>::infinity();
  int ai = -1;
  int bi = -1;
  Vec3 normal;  // world, oriented a -> b
};

EdgeQuery query_edges(const Frame& a, const Frame& b) {
  EdgeQuery q;
  const Vec3 d = b.center - a.center;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Vec3 axis = a.axis[i].cross(b.axis[j]);
      const double len2 = axis.norm_squared();
      if (len2 < 1e-10) continue;
      axis = axis / std::sqrt(len2);
      if (d.dot(axis) < 0.0) axis = -axis;
      const double sep = d.dot(axis) - (projected_radius(a, axis) + projected_radius(b, axis));
      if (sep > q.sep) {
        q.sep = sep;
        q.ai = i;
        q.bi = j;
        q.normal = axis;
      }
    }
  }
  return q;
}

// Ericson, closest points between segments p1..q1 and p2..q2.
void closest_segment_points(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2,
                            Vec3& c1, Vec3& c2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double ae = d1.norm_squared();
  const double be = d2.norm_squared();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (ae > 1e-12 && be > 1e-12) {
    const double c = d1.dot(r);
    const double bd = d1.dot(d2);
    const double denom = ae * be - bd * bd;
    if (denom > 1e-12) s = std::clamp((bd * f - c * be) / denom, 0.0, 1.0);
    t = (bd * s + f) / be;
    if (t < 0.0) {
      t = 0.0;
      s = std::clamp(-c / ae, 0.0, 1.0);
    } else if (t > 1.0) {
      t = 1.0;
      s = std::clamp((bd - c) / ae, 0.0, 1.0);
    }
  }
  c1 = p1 + d1 * s;
  c2 = p2 + d2 * t;
}

struct ClipVertex {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;  // coordinate along the reference face axis
  int id = 0;
};

// Sutherland-Hodgman against one slab side: keep dir*coord <= limit.
void clip_side(std::vector<ClipVertex>& poly, int coord, double dir, double limit, int plane_id) {
  std::vector<ClipVertex> out;
  out.reserve(poly.size() + 2);
  const auto value = [&](const ClipVertex& cv) { return coord == 0 ? cv.u : cv.v; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const ClipVertex& cur = poly[i];
    const ClipVertex& nxt = poly[(i + 1) % poly.size()];
    const double dc = dir * value(cur) - limit;
    const double dn = dir * value(nxt) - limit;
    if (dc <= 0.0) out.push_back(cur);
    if ((dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0)) {
      const double t = dc / (dc - dn);
      ClipVertex mid;
      mid.u = cur.u + (nxt.u - cur.u) * t;
      mid.v = cur.v + (nxt.v - cur.v) * t;
      mid.w = cur.w + (nxt.w - cur.w) * t;
      mid.id = 8 + plane_id * 8 + (cur.id & 7);
      out.push_back(mid);
    }
  }
  poly = std::move(out);
}

Vec3 tangent_of(const Vec3& n) {
  const Vec3 e = std::abs(n.x) < 0.57 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  return e.cross(n).normalized();
}

Quat integrate_quat(const Quat& q, const Vec3& w) {
  return Quat{q.x + 0.5 * (w.x * q.w + w.y * q.z - w.z * q.y),
              q.y + 0.5 * (w.y * q.w + w.z * q.x - w.x * q.z),
              q.z + 0.5 * (w.z * q.w + w.x * q.y - w.y * q.x),
              q.w - 0.5 * (w.x * q.x + w.y * q.y + w.z * q.z)}
      .normalized();
}

std::uint64_t contact_key(int a, int b, int static_idx, std::uint32_t feature) {
  const std::uint64_t partner =
      b >= 0 ? static_cast<std::uint64_t>(b)
             : (0x8000ULL | static_cast<std::uint64_t>(static_idx));
  return (static_cast<std::uint64_t>(a + 1) << 48) | (partner << 32) | feature;
}

}  // namespace

struct SimWorld::Contact {
  enum class Geom : std::uint8_t { Plane, FaceRefA, FaceRefB, StaticSphere };

  int a = -1;
  int b = -1;  // -1 means static partner
  int static_idx = -1;
  Geom geom = Geom::Plane;

  Vec3 normal;  // world, points from b (or the static body) toward a
  Vec3 point;   // world anchor
  double separation = 0.0;
  std::uint64_t key = 0;

  Vec3 local_n;  // ref-frame normal oriented ref -> incident
  double offset_c = 0.0;
  Vec3 local_p;  // incident-frame anchor (world coords if the incident body is static)

  Vec3 ra, rb, t1, t2;
  double mass_n = 0.0, mass_t1 = 0.0, mass_t2 = 0.0;
  double target_vn = 0.0;
  double jn = 0.0, jt1 = 0.0, jt2 = 0.0;
  bool friction_active = false;
};

SimWorld::SimWorld(const SceneSpec& scene) : cfg_(scene.sim), workspace_(scene.workspace) {
  statics_.push_back({StaticBody::Kind::Plane, scene.terrain.ground_height, {}, {}, {}, 0.0});
  for (const TileSpec& t : scene.terrain.tiles) {
    StaticBody b;
    b.kind = StaticBody::Kind::Box;
    b.box = BoxShape{t.half_extents, 0.0};
    b.pose = t.pose;
    statics_.push_back(b);
  }
  for (const BumpSpec& s : scene.terrain.bumps) {
    StaticBody b;
    b.kind = StaticBody::Kind::Sphere;
    b.center = s.center;
    b.radius = s.radius;
    statics_.push_back(b);
  }
  for (const ObstacleSpec& o : scene.obstacles) {
    StaticBody b;
    b.kind = StaticBody::Kind::Box;
    b.box = BoxShape{o.half_extents, 0.0};
    b.pose = o.pose;
    statics_.push_back(b);
  }

  double volume_sum = 0.0;
  const Vec3 ws = workspace_.extent();
  for (const ObjectSpec& o : scene.objects) {
    if (o.shape.mass <= 0.0) {
      throw std::invalid_argument("movable object must have positive mass: " + o.id);
    }
    const Vec3& h = o.shape.half_extents;
    if (h.x <= 0.0 || h.y <= 0.0 || h.z <= 0.0) {
      throw std::invalid_argument("object half-extents must be positive: " + o.id);
    }
    if (2.0 * std::max({h.x, h.y, h.z}) > std::min({ws.x, ws.y, ws.z})) {
      throw std::invalid_argument("object does not fit inside the workspace: " + o.id);
    }
    volume_sum += 8.0 * h.x * h.y * h.z;
    shapes_.push_back(o.shape);

    Body body;
    body.shape = o.shape;
    body.inv_mass = 1.0 / o.shape.mass;
    const double m3 = o.shape.mass / 3.0;
    body.inv_inertia = {1.0 / (m3 * (h.y * h.y + h.z * h.z)),
                        1.0 / (m3 * (h.x * h.x + h.z * h.z)),
                        1.0 / (m3 * (h.x * h.x + h.y * h.y))};
    bodies_.push_back(body);
  }
  if (volume_sum > 0.5 * ws.x * ws.y * ws.z) {
    throw std::invalid_argument("workspace cannot contain all objects without overlap");
  }
  input_poses_.resize(shapes_.size());
}

// ---------------------------------------------------------------------------
// boolean collision queries

namespace {

bool box_hits_static(const BoxShape& box, const Pose& pose, const StaticBody& s, double tol) {
  switch (s.kind) {
    case StaticBody::Kind::Plane: {
      const Aabb bb = box_world_aabb(box, pose);
      return bb.min.z < s.plane_height - tol;
    }
    case StaticBody::Kind::Box:
      return boxes_intersect(box, pose, s.box, s.pose, tol);
    case StaticBody::Kind::Sphere: {
      const Vec3 p = closest_point_on_box(box, pose, s.center);
      return (p - s.center).norm() < s.radius - tol;
    }
  }
  return false;
}

}  // namespace

bool SimWorld::box_collides_static(const BoxShape& box, const Pose& pose) const {
  for (const StaticBody& s : statics_) {
    if (box_hits_static(box, pose, s, cfg_.penetration_tol)) return true;
  }
  return false;
}

bool SimWorld::box_collides(const BoxShape& box, const Pose& pose, const Arrangement& arr,
                            std::int32_t ignore) const {
  if (arr.size() != shapes_.size()) {
    throw std::invalid_argument("box_collides: arrangement does not match the scene");
  }
  if (box_collides_static(box, pose)) return true;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    if (static_cast<std::int32_t>(i) == ignore) continue;
    if (boxes_intersect(box, pose, shapes_[i], arr[static_cast<ObjectId>(i)],
                        cfg_.penetration_tol)) {
      return true;
    }
  }
  return false;
}

bool SimWorld::check_collision(const Arrangement& arr) const {
  if (arr.size() != shapes_.size()) {
    throw std::invalid_argument("check_collision: arrangement does not match the scene");
  }
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    const ObjectId oi = static_cast<ObjectId>(i);
    if (box_collides_static(shapes_[i], arr[oi])) return false;
    for (std::size_t j = i + 1; j < shapes_.size(); ++j) {
      if (boxes_intersect(shapes_[i], arr[oi], shapes_[j], arr[static_cast<ObjectId>(j)],
                          cfg_.penetration_tol)) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// state management

void SimWorld::reset_state(const Arrangement& arr, std::optional<ObjectId> removed) {
  if (arr.size() != bodies_.size()) {
    throw std::invalid_argument("reset_state: arrangement does not match the scene");
  }
  input_poses_ = arr.poses;
  for (std::size_t i = 0; i < bodies_.size(); ++i) {
    Body& b = bodies_[i];
    b.pose = arr.poses[i];
    b.pose.rotation = b.pose.rotation.normalized();
    b.lin_vel = {};
    b.ang_vel = {};
    b.active = !(removed && *removed == static_cast<ObjectId>(i));
  }
  impulse_cache_.clear();
}

Arrangement SimWorld::current_arrangement() const {
  Arrangement arr(bodies_.size());
  for (std::size_t i = 0; i < bodies_.size(); ++i) {
    arr.poses[i] = bodies_[i].active ? bodies_[i].pose : input_poses_[i];
  }
  return arr;
}

// ---------------------------------------------------------------------------
// contact generation

void SimWorld::collide_boxes(int a, int b, int static_idx, const BoxShape& sa, const Pose& pa,
                             const BoxShape& sb, const Pose& pb,
                             std::vector<Contact>& out) const {
  const Frame fa = make_frame(sa, pa);
  const Frame fb = make_frame(sb, pb);
  const FaceQuery qa = query_faces(fa, fb);
  const FaceQuery qb = query_faces(fb, fa);
  const EdgeQuery qe = query_edges(fa, fb);
  const double face_sep = std::max(qa.sep, qb.sep);
  if (std::max(face_sep, qe.sep) > kContactMargin) return;

  if (qe.sep > face_sep + 1e-4) {
    // edge-edge contact: single point between the two supporting edges
    const Vec3 n = qe.normal;  // a -> b
    Vec3 mid_a = fa.center;
    Vec3 mid_b = fb.center;
    for (int k = 0; k < 3; ++k) {
      if (k != qe.ai) mid_a += fa.axis[k] * (fa.half[k] * (fa.axis[k].dot(n) >= 0.0 ? 1.0 : -1.0));
      if (k != qe.bi) mid_b += fb.axis[k] * (fb.half[k] * (fb.axis[k].dot(n) >= 0.0 ? -1.0 : 1.0));
    }
    Vec3 c1, c2;
    closest_segment_points(mid_a - fa.axis[qe.ai] * fa.half[qe.ai],
                           mid_a + fa.axis[qe.ai] * fa.half[qe.ai],
                           mid_b - fb.axis[qe.bi] * fb.half[qe.bi],
                           mid_b + fb.axis[qe.bi] * fb.half[qe.bi], c1, c2);
    const Vec3 p = (c1 + c2) * 0.5;

    Contact c;
    c.a = a;
    c.b = b;
    c.static_idx = static_idx;
    c.geom = Contact::Geom::FaceRefA;
    c.normal = -n;  // solver convention: push a along +normal
    c.point = p;
    c.separation = qe.sep;
    c.local_n = pa.rotation.conjugate().rotate(n);
    c.offset_c = (p - pa.translation).dot(n) - qe.sep;
    c.local_p = b >= 0 ? pb.inverse().apply(p) : p;  // world coords for static partners
    c.key = contact_key(a, b, static_idx, 0x700u | (qe.ai * 3 + qe.bi));
    out.push_back(c);
    return;
  }

  // face contact: clip the incident face against the reference face sides
  const bool ref_is_a = qa.sep >= qb.sep - 1e-6;
  const Frame& ref = ref_is_a ? fa : fb;
  const Frame& inc = ref_is_a ? fb : fa;
  const Pose& ref_pose = ref_is_a ? pa : pb;
  const Pose& inc_pose = ref_is_a ? pb : pa;
  const FaceQuery& fq = ref_is_a ? qa : qb;

  const int f = fq.axis;
  const int u = (f + 1) % 3;
  const int v = (f + 2) % 3;
  const double s = fq.sign;

  // incident box in reference local coordinates
  const Pose rel = ref_pose.inverse() * inc_pose;
  Vec3 cols[3] = {rel.rotation.rotate({1.0, 0.0, 0.0}), rel.rotation.rotate({0.0, 1.0, 0.0}),
                  rel.rotation.rotate({0.0, 0.0, 1.0})};

  // incident face: outward normal most opposed to the reference face normal
  int inc_axis = 0;
  double best = std::numeric_limits<double>::infinity();
  double inc_sign = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = cols[k][f] * s;
    if (d < best) {
      best = d;
      inc_axis = k;
      inc_sign = 1.0;
    }
    if (-d < best) {
      best = -d;
      inc_axis = k;
      inc_sign = -1.0;
    }
  }

  const int iu = (inc_axis + 1) % 3;
  const int iv = (inc_axis + 2) % 3;
  const Vec3 face_center = rel.translation + cols[inc_axis] * (inc.half[inc_axis] * inc_sign);
  std::vector<ClipVertex> poly;
  poly.reserve(8);
  int corner_id = 0;
  for (const auto& [su, sv] :
       std::initializer_list<std::pair<double, double>>{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}) {
    const Vec3 p = face_center + cols[iu] * (inc.half[iu] * su) + cols[iv] * (inc.half[iv] * sv);
    ClipVertex cv;
    cv.u = p[u];
    cv.v = p[v];
    cv.w = p[f];
    cv.id = corner_id++;
    poly.push_back(cv);
  }

  clip_side(poly, 0, 1.0, ref.half[u], 0);
  if (poly.empty()) return;
  clip_side(poly, 0, -1.0, ref.half[u], 1);
  if (poly.empty()) return;
  clip_side(poly, 1, 1.0, ref.half[v], 2);
  if (poly.empty()) return;
  clip_side(poly, 1, -1.0, ref.half[v], 3);
  if (poly.empty()) return;

  const Vec3 local_n{f == 0 ? s : 0.0, f == 1 ? s : 0.0, f == 2 ? s : 0.0};
  const Vec3 world_n = ref_pose.rotation.rotate(local_n);  // ref -> inc

  const bool inc_is_static = ref_is_a && b < 0;
  for (const ClipVertex& cv : poly) {
    const double sep = cv.w * s - ref.half[f];
    if (sep > kContactMargin) continue;
    // rebuild the local point from slab coordinates
    Vec3 pl;
    (f == 0 ? pl.x : (f == 1 ? pl.y : pl.z)) = cv.w;
    (u == 0 ? pl.x : (u == 1 ? pl.y : pl.z)) = cv.u;
    (v == 0 ? pl.x : (v == 1 ? pl.y : pl.z)) = cv.v;
    const Vec3 world_p = ref_pose.apply(pl);

    Contact c;
    c.a = a;
    c.b = b;
    c.static_idx = static_idx;
    c.geom = ref_is_a ? Contact::Geom::FaceRefA : Contact::Geom::FaceRefB;
    c.normal = ref_is_a ? -world_n : world_n;
    c.point = world_p;
    c.separation = sep;
    c.local_n = local_n;
    c.offset_c = ref.half[f];
    c.local_p = inc_is_static ? world_p : inc_pose.inverse().apply(world_p);
    c.key = contact_key(a, b, static_idx,
                        (static_cast<std::uint32_t>(ref_is_a ? 0 : 1) << 10) |
                            (static_cast<std::uint32_t>(f) << 8) |
                            static_cast<std::uint32_t>(cv.id & 0xff));
    out.push_back(c);
  }
}

void SimWorld::generate_contacts(std::vector<Contact>& contacts) const {
  contacts.clear();
  const double margin = kContactMargin;

  std::vector<Aabb> bounds(bodies_.size());
  for (std::size_t i = 0; i < bodies_.size(); ++i) {
    if (bodies_[i].active) bounds[i] = box_world_aabb(bodies_[i].shape, bodies_[i].pose);
  }

  // dynamic vs static
  for (int a = 0; a < static_cast<int>(bodies_.size()); ++a) {
    if (!bodies_[a].active) continue;
    const Body& body = bodies_[a];
    for (int s = 0; s < static_cast<int>(statics_.size()); ++s) {
      const StaticBody& st = statics_[s];
      switch (st.kind) {
        case StaticBody::Kind::Plane: {
          if (bounds[a].min.z > st.plane_height + margin) break;
          const Vec3& h = body.shape.half_extents;
          int corner = 0;
          for (int sx : {-1, 1}) {
            for (int sy : {-1, 1}) {
              for (int sz : {-1, 1}) {
                const Vec3 local{sx * h.x, sy * h.y, sz * h.z};
                const Vec3 world = body.pose.apply(local);
                const double sep = world.z - st.plane_height;
                if (sep <= margin) {
                  Contact c;
                  c.a = a;
                  c.static_idx = s;
                  c.geom = Contact::Geom::Plane;
                  c.normal = {0.0, 0.0, 1.0};
                  c.point = world;
                  c.separation = sep;
                  c.local_n = {0.0, 0.0, 1.0};
                  c.offset_c = st.plane_height;
                  c.local_p = local;
                  c.key = contact_key(a, -1, s, static_cast<std::uint32_t>(corner));
                  contacts.push_back(c);
                }
                ++corner;
              }
            }
          }
          break;
        }
        case StaticBody::Kind::Box: {
          const Aabb sb = box_world_aabb(st.box, st.pose);
          if (bounds[a].min.x > sb.max.x + margin || bounds[a].max.x < sb.min.x - margin ||
              bounds[a].min.y > sb.max.y + margin || bounds[a].max.y < sb.min.y - margin ||
              bounds[a].min.z > sb.max.z + margin || bounds[a].max.z < sb.min.z - margin) {
            break;
          }
          collide_boxes(a, -1, s, body.shape, body.pose, st.box, st.pose, contacts);
          break;
        }
        case StaticBody::Kind::Sphere: {
          const Vec3 p = closest_point_on_box(body.shape, body.pose, st.center);
          const Vec3 delta = p - st.center;
          const double d = delta.norm();
          if (d - st.radius > margin) break;
          Contact c;
          c.a = a;
          c.static_idx = s;
          c.geom = Contact::Geom::StaticSphere;
          c.normal = d > 1e-9 ? delta / d : Vec3{0.0, 0.0, 1.0};
          c.point = p;
          c.separation = d - st.radius;
          c.key = contact_key(a, -1, s, 0);
          contacts.push_back(c);
          break;
        }
      }
    }
  }

  // dynamic vs dynamic
  for (int a = 0; a < static_cast<int>(bodies_.size()); ++a) {
    if (!bodies_[a].active) continue;
    for (int b = a + 1; b < static_cast<int>(bodies_.size()); ++b) {
      if (!bodies_[b].active) continue;
      if (bounds[a].min.x > bounds[b].max.x + margin ||
          bounds[a].max.x < bounds[b].min.x - margin ||
          bounds[a].min.y > bounds[b].max.y + margin ||
          bounds[a].max.y < bounds[b].min.y - margin ||
          bounds[a].min.z > bounds[b].max.z + margin ||
          bounds[a].max.z < bounds[b].min.z - margin) {
        continue;
      }
      collide_boxes(a, b, -1, bodies_[a].shape, bodies_[a].pose, bodies_[b].shape,
                    bodies_[b].pose, contacts);
    }
  }
}

// ---------------------------------------------------------------------------
// solver

namespace {

Vec3 apply_inv_inertia(const Quat& rot, const Vec3& inv_diag, const Vec3& v) {
  const Vec3 local = rot.conjugate().rotate(v);
  return rot.rotate({inv_diag.x * local.x, inv_diag.y * local.y, inv_diag.z * local.z});
}

}  // namespace

void SimWorld::solve_velocity(std::vector<Contact>& contacts) {
  const double dt = cfg_.dt;
  const double mu = cfg_.friction_coeff;

  // prepare + warm start
  for (Contact& c : contacts) {
    Body& A = bodies_[c.a];
    Body* B = c.b >= 0 ? &bodies_[c.b] : nullptr;
    c.ra = c.point - A.pose.translation;
    c.rb = B ? c.point - B->pose.translation : Vec3{};
    c.t1 = tangent_of(c.normal);
    c.t2 = c.normal.cross(c.t1);

    const auto eff_mass = [&](const Vec3& d) {
      double k = A.inv_mass;
      Vec3 rca = c.ra.cross(d);
      k += d.dot(apply_inv_inertia(A.pose.rotation, A.inv_inertia, rca).cross(c.ra));
      if (B) {
        Vec3 rcb = c.rb.cross(d);
        k += B->inv_mass + d.dot(apply_inv_inertia(B->pose.rotation, B->inv_inertia, rcb).cross(c.rb));
      }
      return k > 1e-12 ? 1.0 / k : 0.0;
    };
    c.mass_n = eff_mass(c.normal);
    c.mass_t1 = eff_mass(c.t1);
    c.mass_t2 = eff_mass(c.t2);
    c.target_vn = c.separation > 0.0 ? -c.separation / dt : 0.0;
    c.friction_active = c.separation <= cfg_.penetration_tol;

    // warm start from the previous step's impulses
    const auto it = std::lower_bound(
        impulse_cache_.begin(), impulse_cache_.end(), c.key,
        [](const CacheEntry& e, std::uint64_t k) { return e.key < k; });
    if (it != impulse_cache_.end() && it->key == c.key) {
      c.jn = it->jn;
      c.jt1 = c.friction_active ? it->jt1 : 0.0;
      c.jt2 = c.friction_active ? it->jt2 : 0.0;
      const Vec3 P = c.normal * c.jn + c.t1 * c.jt1 + c.t2 * c.jt2;
      A.lin_vel += P * A.inv_mass;
      A.ang_vel += apply_inv_inertia(A.pose.rotation, A.inv_inertia, c.ra.cross(P));
      if (B) {
        B->lin_vel -= P * B->inv_mass;
        B->ang_vel -= apply_inv_inertia(B->pose.rotation, B->inv_inertia, c.rb.cross(P));
      }
    }
  }

  for (int iter = 0; iter < cfg_.velocity_iterations; ++iter) {
    for (Contact& c : contacts) {
      Body& A = bodies_[c.a];
      Body* B = c.b >= 0 ? &bodies_[c.b] : nullptr;

      const auto rel_vel = [&]() {
        Vec3 v = A.lin_vel + A.ang_vel.cross(c.ra);
        if (B) v -= B->lin_vel + B->ang_vel.cross(c.rb);
        return v;
      };

      // normal impulse
      {
        const double vn = rel_vel().dot(c.normal);
        const double dj = -(vn - c.target_vn) * c.mass_n;
        const double old = c.jn;
        c.jn = std::max(0.0, old + dj);
        const Vec3 P = c.normal * (c.jn - old);
        A.lin_vel += P * A.inv_mass;
        A.ang_vel += apply_inv_inertia(A.pose.rotation, A.inv_inertia, c.ra.cross(P));
        if (B) {
          B->lin_vel -= P * B->inv_mass;
          B->ang_vel -= apply_inv_inertia(B->pose.rotation, B->inv_inertia, c.rb.cross(P));
        }
      }

      if (!c.friction_active) continue;
      const double max_f = mu * c.jn;

      for (int t = 0; t < 2; ++t) {
        const Vec3& tan = t == 0 ? c.t1 : c.t2;
        double& acc = t == 0 ? c.jt1 : c.jt2;
        const double mass = t == 0 ? c.mass_t1 : c.mass_t2;
        const double vt = rel_vel().dot(tan);
        const double dj = -vt * mass;
        const double old = acc;
        acc = std::clamp(old + dj, -max_f, max_f);
        const Vec3 P = tan * (acc - old);
        A.lin_vel += P * A.inv_mass;
        A.ang_vel += apply_inv_inertia(A.pose.rotation, A.inv_inertia, c.ra.cross(P));
        if (B) {
          B->lin_vel -= P * B->inv_mass;
          B->ang_vel -= apply_inv_inertia(B->pose.rotation, B->inv_inertia, c.rb.cross(P));
        }
      }
    }
  }

  // persist impulses for next-step warm starting
  impulse_cache_.clear();
  impulse_cache_.reserve(contacts.size());
  for (const Contact& c : contacts) {
    impulse_cache_.push_back({c.key, c.jn, c.jt1, c.jt2});
  }
  std::sort(impulse_cache_.begin(), impulse_cache_.end(),
            [](const CacheEntry& x, const CacheEntry& y) { return x.key < y.key; });
}

void SimWorld::solve_position(std::vector<Contact>& contacts) {
  const double slop = 0.5 * cfg_.penetration_tol;

  for (int iter = 0; iter < cfg_.position_iterations; ++iter) {
    double worst = 0.0;
    for (Contact& c : contacts) {
      Body& A = bodies_[c.a];
      Body* B = c.b >= 0 ? &bodies_[c.b] : nullptr;

      // recompute separation, world anchor, and normal from current poses
      Vec3 n;  // solver direction: pushes A
      Vec3 p;
      double sep;
      switch (c.geom) {
        case Contact::Geom::Plane: {
          p = A.pose.apply(c.local_p);
          sep = p.z - c.offset_c;
          n = {0.0, 0.0, 1.0};
          break;
        }
        case Contact::Geom::FaceRefA: {
          const Vec3 wn = A.pose.rotation.rotate(c.local_n);  // ref -> incident
          p = B ? B->pose.apply(c.local_p) : c.local_p;       // static anchors stay in world
          sep = (p - A.pose.translation).dot(wn) - c.offset_c;
          n = -wn;
          break;
        }
        case Contact::Geom::FaceRefB: {
          const Pose& ref = B ? B->pose : statics_[c.static_idx].pose;
          const Vec3 wn = ref.rotation.rotate(c.local_n);
          p = A.pose.apply(c.local_p);
          sep = (p - ref.translation).dot(wn) - c.offset_c;
          n = wn;
          break;
        }
        case Contact::Geom::StaticSphere: {
          const StaticBody& st = statics_[c.static_idx];
          p = closest_point_on_box(A.shape, A.pose, st.center);
          const Vec3 delta = p - st.center;
          const double d = delta.norm();
          sep = d - st.radius;
          n = d > 1e-9 ? delta / d : Vec3{0.0, 0.0, 1.0};
          break;
        }
      }

      worst = std::min(worst, sep);
      const double C = sep + slop;
      if (C >= 0.0) continue;
      const double correction = std::min(kPosBeta * (-C), kMaxPosCorrection);

      const Vec3 ra = p - A.pose.translation;
      const Vec3 rb = B ? p - B->pose.translation : Vec3{};
      double k = A.inv_mass;
      k += n.dot(apply_inv_inertia(A.pose.rotation, A.inv_inertia, ra.cross(n)).cross(ra));
      if (B) {
        k += B->inv_mass;
        k += n.dot(apply_inv_inertia(B->pose.rotation, B->inv_inertia, rb.cross(n)).cross(rb));
      }
      if (k < 1e-12) continue;
      const double lambda = correction / k;
      const Vec3 P = n * lambda;

      A.pose.translation += P * A.inv_mass;
      const Vec3 wa = apply_inv_inertia(A.pose.rotation, A.inv_inertia, ra.cross(P));
      A.pose.rotation = integrate_quat(A.pose.rotation, wa);
      if (B) {
        B->pose.translation -= P * B->inv_mass;
        const Vec3 wb = apply_inv_inertia(B->pose.rotation, B->inv_inertia, rb.cross(P));
        B->pose.rotation = integrate_quat(B->pose.rotation, -wb);
      }
    }
    if (worst > -1.5 * slop) break;
  }
}

void SimWorld::integrate() {
  const double dt = cfg_.dt;
  for (Body& b : bodies_) {
    if (!b.active) continue;
    const double lv = b.lin_vel.norm();
    if (lv > kMaxLinVel) b.lin_vel *= kMaxLinVel / lv;
    const double av = b.ang_vel.norm();
    if (av > kMaxAngVel) b.ang_vel *= kMaxAngVel / av;

    b.pose.translation += b.lin_vel * dt;
    b.pose.rotation = integrate_quat(b.pose.rotation, b.ang_vel * dt);
  }
}

void SimWorld::step(int n) {
  std::vector<Contact> contacts;
  for (int i = 0; i < n; ++i) {
    for (Body& b : bodies_) {
      if (b.active) b.lin_vel.z -= cfg_.gravity * cfg_.dt;
    }
    generate_contacts(contacts);
    solve_velocity(contacts);
    integrate();
    solve_position(contacts);
  }
}

// ---------------------------------------------------------------------------
// settle / stability

bool SimWorld::displacement_within(const std::vector<Pose>& ref, double lin_tol,
                                   double ang_tol) const {
  for (std::size_t i = 0; i < bodies_.size(); ++i) {
    if (!bodies_[i].active) continue;
    if ((bodies_[i].pose.translation - ref[i].translation).norm() > lin_tol) return false;
    if (quat_angle(bodies_[i].pose.rotation, ref[i].rotation) > ang_tol) return false;
  }
  return true;
}

SettleResult SimWorld::settle(const Arrangement& arr) {
  reset_state(arr);
  const double lin_tol = cfg_.disp_threshold;
  const double ang_tol = cfg_.disp_threshold / cfg_.rot_weight;
  const int total = static_cast<int>(std::ceil(cfg_.max_settle_time / cfg_.dt));

  std::vector<Pose> prev(bodies_.size());
  for (std::size_t i = 0; i < bodies_.size(); ++i) prev[i] = bodies_[i].pose;

  bool settled = false;
  int done = 0;
  while (done < total) {
    const int chunk = std::min(cfg_.check_interval, total - done);
    step(chunk);
    done += chunk;
    if (displacement_within(prev, lin_tol, ang_tol)) {
      settled = true;
      break;
    }
    for (std::size_t i = 0; i < bodies_.size(); ++i) prev[i] = bodies_[i].pose;
  }
  return {current_arrangement(), settled};
}

bool SimWorld::run_stability() {
  const double lin_tol = cfg_.disp_threshold;
  const double ang_tol = cfg_.disp_threshold / cfg_.rot_weight;
  const int total = static_cast<int>(std::ceil(cfg_.stability_duration / cfg_.dt));

  std::vector<Pose> ref(bodies_.size());
  for (std::size_t i = 0; i < bodies_.size(); ++i) ref[i] = bodies_[i].pose;

  int done = 0;
  while (done < total) {
    const int chunk = std::min(cfg_.check_interval, total - done);
    step(chunk);
    done += chunk;
    if (!displacement_within(ref, lin_tol, ang_tol)) return false;
  }
  return true;
}

bool SimWorld::check_stable(const Arrangement& arr) {
  reset_state(arr);
  return run_stability();
}

bool SimWorld::check_stable_without(const Arrangement& arr, ObjectId removed) {
  if (removed >= bodies_.size()) {
    throw std::invalid_argument("check_stable_without: unknown object");
  }
  reset_state(arr, removed);
  return run_stability();
}

// ---------------------------------------------------------------------------
// support polygon oracle

namespace {

struct StackNode {
  int support = -2;  // -1 ground, >= 0 object index, -2 unresolved
  double mass = 0.0;
  Vec3 com;          // cumulative, gets accumulated top-down
};

}  // namespace

double SimWorld::support_margin(const Arrangement& arr) const {
  if (arr.size() != shapes_.size()) {
    throw std::invalid_argument("support_margin: arrangement does not match the scene");
  }
  const double ground = statics_.front().plane_height;
  const double ztol = 1e-3;
  const std::size_t n = shapes_.size();

  for (std::size_t i = 0; i < n; ++i) {
    if (quat_angle(arr[static_cast<ObjectId>(i)].rotation, Quat::identity()) > 1e-6) {
      throw std::domain_error("support_polygon_oracle: rotations must be identity");
    }
  }

  // resolve the unique support of each object
  std::vector<StackNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& h = shapes_[i].half_extents;
    const Vec3& t = arr[static_cast<ObjectId>(i)].translation;
    nodes[i].mass = shapes_[i].mass;
    nodes[i].com = t * shapes_[i].mass;
    int found = -2;
    if (std::abs((t.z - h.z) - ground) <= ztol) found = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec3& hj = shapes_[j].half_extents;
      const Vec3& tj = arr[static_cast<ObjectId>(j)].translation;
      const bool overlap = std::abs(t.x - tj.x) < h.x + hj.x && std::abs(t.y - tj.y) < h.y + hj.y;
      if (!overlap) continue;
      if (std::abs((t.z - h.z) - (tj.z + hj.z)) <= ztol) {
        if (found != -2) throw std::domain_error("support_polygon_oracle: multiple supports");
        found = static_cast<int>(j);
      }
    }
    if (found == -2) throw std::domain_error("support_polygon_oracle: unsupported object");
    nodes[i].support = found;
  }

  // accumulate supported mass top-down
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return arr[static_cast<ObjectId>(x)].translation.z > arr[static_cast<ObjectId>(y)].translation.z;
  });
  for (std::size_t i : order) {
    if (nodes[i].support >= 0) {
      StackNode& sup = nodes[nodes[i].support];
      sup.mass += nodes[i].mass;
      sup.com += nodes[i].com;
    }
  }

  double min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 com = nodes[i].com / nodes[i].mass;
    const Vec3& h = shapes_[i].half_extents;
    const Vec3& t = arr[static_cast<ObjectId>(i)].translation;
    double lo_x = t.x - h.x, hi_x = t.x + h.x, lo_y = t.y - h.y, hi_y = t.y + h.y;
    if (nodes[i].support >= 0) {
      const std::size_t j = static_cast<std::size_t>(nodes[i].support);
      const Vec3& hj = shapes_[j].half_extents;
      const Vec3& tj = arr[static_cast<ObjectId>(j)].translation;
      lo_x = std::max(lo_x, tj.x - hj.x);
      hi_x = std::min(hi_x, tj.x + hj.x);
      lo_y = std::max(lo_y, tj.y - hj.y);
      hi_y = std::min(hi_y, tj.y + hj.y);
    }
    const double margin = std::min(std::min(com.x - lo_x, hi_x - com.x),
                                   std::min(com.y - lo_y, hi_y - com.y));
    min_margin = std::min(min_margin, margin);
  }
  return min_margin;
}

bool SimWorld::support_polygon_oracle(const Arrangement& arr) const {
  return support_margin(arr) > 0.0;
}

}  // namespace sast
