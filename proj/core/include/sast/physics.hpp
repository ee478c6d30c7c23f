#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sast/geometry.hpp"
#include "sast/scene.hpp"

namespace sast {

struct StaticBody {
  enum class Kind { Plane, Box, Sphere };
  Kind kind = Kind::Plane;
  double plane_height = 0.0;  // Plane
  BoxShape box;               // Box
  Pose pose;                  // Box
  Vec3 center;                // Sphere
  double radius = 0.0;        // Sphere
};

struct SettleResult {
  Arrangement arrangement;
  bool settled = false;
};

/// The embedded simulator: collision test C, settle-to-rest dynamics and the
/// static stability test S over rigid boxes on a terrain of static obstacles.
///
/// A SimWorld is exclusively owned by one worker at a time; it is cheap to
/// copy, so concurrent samplers each hold their own instance. All dynamics
/// are fixed-step sequential impulses with deterministic ordering: identical
/// (world, arrangement, config) inputs give bit-identical outputs.
class SimWorld {
 public:
  explicit SimWorld(const SceneSpec& scene);

  const SimConfig& config() const { return cfg_; }
  SimConfig& config() { return cfg_; }
  std::size_t object_count() const { return shapes_.size(); }
  const BoxShape& object_shape(ObjectId o) const { return shapes_[o]; }
  const std::vector<StaticBody>& statics() const { return statics_; }
  const Aabb& workspace() const { return workspace_; }

  /// C(alpha): true iff no object-object or object-obstacle pair penetrates
  /// beyond penetration_tol. Resting contact is not a collision.
  bool check_collision(const Arrangement& arr) const;

  /// Steps gravity + frictional contact until every object's displacement
  /// over a check interval drops below the thresholds, or the settle budget
  /// runs out.
  SettleResult settle(const Arrangement& arr);

  /// S(alpha): simulates for stability_duration and requires every object's
  /// total displacement from its initial pose to stay below the thresholds
  /// throughout.
  bool check_stable(const Arrangement& arr);

  /// S(alpha \ o): stability with one object removed from consideration.
  bool check_stable_without(const Arrangement& arr, ObjectId removed);

  /// Quasi-static oracle for axis-aligned stacks on flat ground: true iff
  /// every object's cumulative supported center of mass projects strictly
  /// inside its support patch. Throws std::domain_error outside the
  /// axis-aligned vertical-chain domain.
  bool support_polygon_oracle(const Arrangement& arr) const;

  /// Signed distance (meters) from the most critical cumulative COM to its
  /// support patch boundary; negative means unstable. Same domain as the
  /// oracle. Used to exclude marginal cases near the tipping boundary.
  double support_margin(const Arrangement& arr) const;

  // Low-level stepping; settle/check_stable are built on these and tests
  // drive them directly.
  void reset_state(const Arrangement& arr, std::optional<ObjectId> removed = std::nullopt);
  void step(int n = 1);
  Arrangement current_arrangement() const;

  /// True iff a free box at the given pose penetrates any static body or any
  /// object of arr (beyond penetration_tol). ignore < 0 checks all objects.
  bool box_collides(const BoxShape& box, const Pose& pose, const Arrangement& arr,
                    std::int32_t ignore = -1) const;
  bool box_collides_static(const BoxShape& box, const Pose& pose) const;

 private:
  struct Body {
    BoxShape shape;
    Pose pose;
    Vec3 lin_vel;
    Vec3 ang_vel;
    double inv_mass = 0.0;
    Vec3 inv_inertia;  // body-frame diagonal
    bool active = true;
  };

  struct Contact;

  void generate_contacts(std::vector<Contact>& contacts) const;
  void collide_boxes(int a, int b, int static_idx, const BoxShape& sa, const Pose& pa,
                     const BoxShape& sb, const Pose& pb, std::vector<Contact>& out) const;
  bool run_stability();
  void solve_velocity(std::vector<Contact>& contacts);
  void solve_position(std::vector<Contact>& contacts);
  void integrate();
  bool displacement_within(const std::vector<Pose>& ref, double lin_tol, double ang_tol) const;

  SimConfig cfg_;
  Aabb workspace_;
  std::vector<StaticBody> statics_;
  std::vector<BoxShape> shapes_;
  std::vector<Body> bodies_;  // scratch state, one per object
  std::vector<Pose> input_poses_;

  // warm-start cache: (a, b, feature) -> impulses, kept sorted
  struct CacheEntry {
    std::uint64_t key;
    double jn, jt1, jt2;
  };
  std::vector<CacheEntry> impulse_cache_;
};

}  // namespace sast
