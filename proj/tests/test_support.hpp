#pragma once

#include "safemm/kinematics.hpp"
#include "safemm/random.hpp"

#include <cmath>
#include <numbers>

namespace safemm::test {

inline Configuration random_configuration(const RobotModel& model, Rng& rng) {
  Configuration q(static_cast<Eigen::Index>(model.dof()));
  const Configuration lo = model.lower_limits();
  const Configuration hi = model.upper_limits();
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(lo[i], hi[i]);
  return q;
}

inline Vec3 random_vec3(Rng& rng, double lo, double hi) {
  return Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

inline Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = random_vec3(rng, -1.0, 1.0);
  } while (v.norm() < 1e-3 || v.norm() > 1.0);
  return v.normalized();
}

inline Eigen::Quaterniond random_quaternion(Rng& rng) {
  Eigen::Vector4d v(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  v.normalize();
  return Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
}

}  // namespace safemm::test
