#pragma once

#include "chronosplat/core_scene.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace chronosplat {

/// A Gaussian after projection into one camera.
struct Gaussian2D {
  Vector2d mean = Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  // pixels^2, before regularization
  double depth = 0.0;                                     // camera-frame z
  double opacity = 0.0;
  Vector3d color = Vector3d::Zero();
  std::size_t index = 0;  // position in the source list; breaks depth ties
};

/// Row-major RGB image with per-pixel depth and accumulated coverage
/// (1 - final transmittance).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
  std::vector<double> depth;
  std::vector<double> alpha;

  Image() = default;
  Image(int w, int h, const Vector3d& fill = Vector3d::Zero());

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t offset(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  Vector3d pixel(int x, int y) const {
    const std::size_t o = 3 * offset(x, y);
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
  void set_pixel(int x, int y, const Vector3d& c) {
    const std::size_t o = 3 * offset(x, y);
    rgb[o] = c[0];
    rgb[o + 1] = c[1];
    rgb[o + 2] = c[2];
  }
};

struct RenderOptions {
  Vector3d background = Vector3d::Zero();
  double near_plane = 0.01;
};

/// Footprints are truncated at Mahalanobis distance 3. Over the last unit of
/// squared distance (8..9) the kernel is blended to zero with a smoothstep so
/// the rendered image stays continuous in the Gaussian parameters.
inline constexpr double kFootprintCutoff = 9.0;
inline constexpr double kFootprintTaperStart = 8.0;
inline constexpr double kCovarianceEpsilon = 1e-8;

/// Footprint weight exp(-m2/2) times the boundary taper; zero for m2 >= 9.
double footprint_kernel(double m2);

/// R S S^T R^T.
Matrix3d covariance_from_rotation_scale(const Quaterniond& rotation, const Vector3d& scale);

/// Perspective projection with the local affine (Jacobian) covariance
/// approximation. Returns nullopt when the Gaussian is culled: depth at or
/// behind the near plane, or mean more than 3 projected standard deviations
/// outside the image.
std::optional<Gaussian2D> project_gaussian(const Gaussian3D& g, const Camera& cam, double near_plane = 0.01);

/// Renders the scene as it is at `scene_time` (frames).
Image render_scene_time(const Scene& scene, const Camera& cam, double scene_time, const RenderOptions& opts = {});

/// Renders frame time `t` of camera `camera_index`: the deformation is
/// evaluated at effective_time(time_model, camera_index, t).
Image render(const Scene& scene, const Camera& cam, double t, const TimeModel& time_model, std::size_t camera_index,
             const RenderOptions& opts = {});

/// Mean absolute difference over all pixels and channels.
double photometric_loss(const Image& rendered, const Image& target);

/// dLoss/d(parameter) for the parameters the fine stage optimizes.
struct SceneGradient {
  std::vector<Vector3d> center;  // w.r.t. the time-evolved (world) center
  std::vector<double> opacity;

  explicit SceneGradient(std::size_t n = 0) : center(n, Vector3d::Zero()), opacity(n, 0.0) {}
};

/// Computes weight * photometric_loss(render_scene_time(...), target) and
/// adds its gradient w.r.t. each Gaussian's evolved center and opacity
/// into `grad`. |x| is differentiated with sign(0) = 0.
double photometric_loss_backward(const Scene& scene, const Camera& cam, double scene_time, const Image& target,
                                 double weight, SceneGradient& grad, const RenderOptions& opts = {});

}  // namespace chronosplat
