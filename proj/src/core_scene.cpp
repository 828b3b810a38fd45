#include "chronosplat/core_scene.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace chronosplat {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void validate(const Gaussian3D& g) {
  if (std::abs(g.rotation.norm() - 1.0) > 1e-9) throw InvariantError("Gaussian3D: quaternion is not unit norm");
  if (!(g.scale.array() > 0.0).all()) throw InvariantError("Gaussian3D: scale components must be positive");
  if (!in_unit(g.opacity)) throw InvariantError("Gaussian3D: opacity outside [0,1]");
  for (int c = 0; c < 3; ++c)
    if (!in_unit(g.color[c])) throw InvariantError("Gaussian3D: color channel outside [0,1]");
  if (!g.center.allFinite()) throw InvariantError("Gaussian3D: non-finite center");
}

void validate(const Camera& cam) {
  const Matrix3d& k = cam.intrinsics;
  if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0)
    throw InvariantError("Camera: intrinsics must be upper-triangular with K(2,2) = 1");
  if (!(k(0, 0) > 0.0 && k(1, 1) > 0.0)) throw InvariantError("Camera: focal lengths must be positive");
  const Matrix3d rtr = cam.rotation.transpose() * cam.rotation;
  if (!rtr.isApprox(Matrix3d::Identity(), 1e-9)) throw InvariantError("Camera: rotation is not orthonormal");
  if (std::abs(cam.rotation.determinant() - 1.0) > 1e-9) throw InvariantError("Camera: rotation determinant is not +1");
  if (cam.width <= 0 || cam.height <= 0) throw InvariantError("Camera: image size must be positive");
  if (!(cam.frame_rate > 0.0)) throw InvariantError("Camera: frame rate must be positive");
}

void validate(const Scene& scene) {
  if (scene.gaussians.size() != scene.motions.size())
    throw InvariantError("Scene: one deformation per Gaussian required");
  if (!(scene.frame_rate > 0.0)) throw InvariantError("Scene: frame rate must be positive");
  for (const auto& g : scene.gaussians) validate(g);
}

Vector3d Deformation::offset(double t, double frame_rate) const {
  if (is_static) return Vector3d::Zero();
  return amplitude * std::sin(angular_frequency * t / frame_rate + phase);
}

Vector3d Deformation::velocity(double t, double frame_rate) const {
  if (is_static) return Vector3d::Zero();
  return amplitude * (angular_frequency / frame_rate) * std::cos(angular_frequency * t / frame_rate + phase);
}

TimeModel::TimeModel(std::size_t num_cameras, std::size_t reference_camera)
    : coarse_(num_cameras, 0), fine_(num_cameras, 0.0), reference_(reference_camera) {
  if (num_cameras > 0 && reference_camera >= num_cameras)
    throw std::out_of_range("TimeModel: reference camera index out of range");
}

void TimeModel::set_coarse(std::size_t cam, int offset) { coarse_.at(cam) = offset; }

void TimeModel::set_fine(std::size_t cam, double tau) {
  if (cam == reference_) {
    (void)fine_.at(cam);
    return;
  }
  fine_.at(cam) = tau;
}

void TimeModel::check_radius(int radius) const {
  for (int c : coarse_)
    if (std::abs(c) > radius)
      throw InvariantError("TimeModel: coarse offset " + std::to_string(c) + " exceeds search radius " +
                           std::to_string(radius));
}

double TimeModel::effective_time(std::size_t cam, double t) const {
  if (cam >= coarse_.size()) throw std::out_of_range("TimeModel: invalid camera index " + std::to_string(cam));
  return t + coarse_[cam] + fine_[cam];
}

double effective_time(const TimeModel& model, std::size_t camera_index, double t) {
  return model.effective_time(camera_index, t);
}

Gaussian3D gaussian_at_time(const Gaussian3D& g, const Deformation& d, double t, double frame_rate) {
  Gaussian3D out = g;
  if (!d.is_static) out.center = g.center + d.offset(t, frame_rate);
  return out;
}

std::vector<double> positional_encoding(std::span<const double> x, int bands) {
  if (bands < 1) throw std::invalid_argument("positional_encoding: bands must be >= 1");
  std::vector<double> out;
  out.reserve(2 * static_cast<std::size_t>(bands) * x.size());
  for (double v : x) {
    double freq = std::numbers::pi;
    for (int b = 0; b < bands; ++b, freq *= 2.0) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
    }
  }
  return out;
}

Matrix3d rotation_matrix(const Quaterniond& q) { return q.normalized().toRotationMatrix(); }

}  // namespace chronosplat
