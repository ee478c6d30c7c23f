#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sast/geometry.hpp"

namespace sast {

using ObjectId = std::uint32_t;

/// Simulator knobs. Read from the scenario file's `sim` section; every field
/// is overridable there.
struct SimConfig {
  double dt = 1.0 / 240.0;           // seconds per step
  double gravity = 9.81;             // m/s^2 along -z
  double friction_coeff = 0.6;
  int check_interval = 30;           // steps between displacement checks
  double disp_threshold = 1e-3;      // meters; rest/stability displacement bound
  double max_settle_time = 3.0;      // seconds
  double stability_duration = 1.0;   // seconds
  double penetration_tol = 1e-4;     // meters; contact vs. penetration cutoff
  double rot_weight = 0.1;           // m/rad; rotational displacement bound is
                                     // disp_threshold / rot_weight
  int velocity_iterations = 16;
  int position_iterations = 12;
};

struct TileSpec {
  Pose pose;
  Vec3 half_extents;
};

struct BumpSpec {
  Vec3 center;
  double radius = 0.01;
};

struct ObstacleSpec {
  Pose pose;
  Vec3 half_extents;
};

struct ObjectSpec {
  std::string id;
  BoxShape shape;  // shape.mass > 0 for movable objects
};

struct TerrainSpec {
  double ground_height = 0.0;
  std::vector<TileSpec> tiles;
  std::vector<BumpSpec> bumps;
};

struct SceneSpec {
  Aabb workspace{{-0.5, -0.5, 0.0}, {0.5, 0.5, 0.5}};
  TerrainSpec terrain;
  std::vector<ObstacleSpec> obstacles;
  std::vector<ObjectSpec> objects;
  SimConfig sim;

  ObjectId object_index(const std::string& id) const;  // throws on unknown id
  std::size_t object_count() const { return objects.size(); }
};

/// One pose per movable object, indexed by the scene's object order.
struct Arrangement {
  std::vector<Pose> poses;

  Arrangement() = default;
  explicit Arrangement(std::size_t n) : poses(n) {}

  std::size_t size() const { return poses.size(); }
  Pose& operator[](ObjectId o) { return poses[o]; }
  const Pose& operator[](ObjectId o) const { return poses[o]; }
  bool operator==(const Arrangement& other) const { return poses == other.poses; }
};

/// Summed SE(3) distance over corresponding objects.
double arrangement_distance(const Arrangement& a, const Arrangement& b, double w_rot);

struct ProblemSpec {
  Arrangement start;
  Arrangement goal;
  Pose home;                 // gripper home configuration (tucked)
  std::uint64_t seed = 0;
  double time_limit = 60.0;  // seconds of wall clock for the planner
};

}  // namespace sast
