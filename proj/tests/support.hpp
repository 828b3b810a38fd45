#pragma once

#include "chronosplat/core_scene.hpp"
#include "chronosplat/renderer.hpp"
#include "chronosplat/rng.hpp"

#include <cmath>

namespace testsupport {

using namespace chronosplat;

inline Camera axis_camera(int w = 64, int h = 64, double f = 60.0) {
  Camera c;
  c.width = w;
  c.height = h;
  c.intrinsics << f, 0, (w - 1) / 2.0, 0, f, (h - 1) / 2.0, 0, 0, 1;
  return c;
}

inline Quaterniond random_rotation(Rng& rng) {
  Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q;
}

inline Gaussian3D random_gaussian(Rng& rng, double z_lo = 2.0, double z_hi = 6.0) {
  Gaussian3D g;
  g.center = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(z_lo, z_hi)};
  g.rotation = random_rotation(rng);
  g.scale = {rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
  g.opacity = rng.uniform();
  g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
  return g;
}

inline Deformation random_motion(Rng& rng) {
  Deformation d;
  d.is_static = false;
  d.amplitude = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)};
  d.angular_frequency = rng.uniform(1.0, 4.0);
  d.phase = rng.uniform(0.0, 6.28);
  return d;
}

inline Scene random_scene(Rng& rng, int n, bool moving) {
  Scene s;
  for (int i = 0; i < n; ++i) {
    s.gaussians.push_back(random_gaussian(rng));
    s.motions.push_back(moving ? random_motion(rng) : Deformation{});
  }
  return s;
}

}  // namespace testsupport
