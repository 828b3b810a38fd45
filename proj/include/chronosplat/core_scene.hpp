#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace chronosplat {

using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector2d;
using Eigen::Vector3d;

/// Raised when a value violates a documented domain invariant.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One anisotropic primitive in canonical (undeformed) space.
struct Gaussian3D {
  Vector3d center = Vector3d::Zero();
  Quaterniond rotation = Quaterniond::Identity();
  Vector3d scale = Vector3d::Ones();
  double opacity = 1.0;
  Vector3d color = Vector3d::Zero();
};

/// Throws InvariantError if `g` has a non-unit quaternion, a non-positive
/// scale, or an opacity/color outside [0, 1].
void validate(const Gaussian3D& g);

/// Per-Gaussian sinusoidal center trajectory:
///   offset(t) = amplitude * sin(angular_frequency * t / frame_rate + phase)
/// with t in frames and angular_frequency in radians per second.
struct Deformation {
  Vector3d amplitude = Vector3d::Zero();
  double angular_frequency = 0.0;
  double phase = 0.0;
  bool is_static = true;

  Vector3d offset(double t, double frame_rate) const;
  /// d offset / dt, per frame.
  Vector3d velocity(double t, double frame_rate) const;
};

/// Pinhole camera. Pixel centers sit at integer coordinates.
struct Camera {
  Matrix3d intrinsics = Matrix3d::Identity();
  Matrix3d rotation = Matrix3d::Identity();  // world -> camera
  Vector3d translation = Vector3d::Zero();   // world -> camera
  int width = 128;
  int height = 128;
  double frame_rate = 15.0;

  Vector3d to_camera(const Vector3d& world) const { return rotation * world + translation; }
  Vector3d center() const { return -rotation.transpose() * translation; }
};

void validate(const Camera& cam);

/// Gaussians with their deformations. `frame_rate` converts frame-valued
/// timestamps to seconds inside the deformation.
struct Scene {
  std::vector<Gaussian3D> gaussians;
  std::vector<Deformation> motions;
  double frame_rate = 15.0;

  std::size_t size() const { return gaussians.size(); }
};

void validate(const Scene& scene);

/// Per-camera time offsets, decomposed into an integer coarse part and a
/// continuous fine residual. The reference camera's fine offset is pinned
/// to zero.
class TimeModel {
 public:
  TimeModel() = default;
  explicit TimeModel(std::size_t num_cameras, std::size_t reference_camera = 0);

  std::size_t num_cameras() const { return coarse_.size(); }
  std::size_t reference_camera() const { return reference_; }

  int coarse(std::size_t cam) const { return coarse_.at(cam); }
  double fine(std::size_t cam) const { return fine_.at(cam); }
  double total(std::size_t cam) const { return coarse(cam) + fine(cam); }

  void set_coarse(std::size_t cam, int offset);
  /// Ignored for the reference camera.
  void set_fine(std::size_t cam, double tau);

  /// Checks every coarse offset against the search radius.
  void check_radius(int radius) const;

  /// t + coarse + fine for camera `cam`; throws std::out_of_range on a bad index.
  double effective_time(std::size_t cam, double t) const;

  bool operator==(const TimeModel&) const = default;

 private:
  std::vector<int> coarse_;
  std::vector<double> fine_;
  std::size_t reference_ = 0;
};

double effective_time(const TimeModel& model, std::size_t camera_index, double t);

/// `g` with its center moved along `d` at time t (frames).
Gaussian3D gaussian_at_time(const Gaussian3D& g, const Deformation& d, double t, double frame_rate);

/// [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
/// per component of x, components concatenated in order.
std::vector<double> positional_encoding(std::span<const double> x, int bands);

Matrix3d rotation_matrix(const Quaterniond& q);

}  // namespace chronosplat
