#include "sast/scene.hpp"

#include <stdexcept>

namespace sast {

ObjectId SceneSpec::object_index(const std::string& id) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id == id) return static_cast<ObjectId>(i);
  }
  throw std::invalid_argument("unknown object id: " + id);
}

double arrangement_distance(const Arrangement& a, const Arrangement& b, double w_rot) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("arrangement_distance: mismatched object sets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += pose_distance(a.poses[i], b.poses[i], w_rot);
  }
  return sum;
}

}  // namespace sast
