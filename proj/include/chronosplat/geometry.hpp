#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace chronosplat {

/// A putative match between a reference frame and a candidate frame.
struct Correspondence {
  Eigen::Vector2d p_ref = Eigen::Vector2d::Zero();
  Eigen::Vector2d p_other = Eigen::Vector2d::Zero();
  bool fg_ref = false;
  bool fg_other = false;
};

/// Rank-2 epipolar model with p_other^T F p_ref = 0, unit Frobenius norm,
/// and the largest-magnitude entry positive.
struct FundamentalMatrix {
  Eigen::Matrix3d entries = Eigen::Matrix3d::Zero();
};

/// Raised when an operation is called with fewer correspondences than it needs.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Hartley-normalized eight-point estimate. Returns nullopt when the design
/// matrix has rank < 8 (e.g. collinear points). Throws PreconditionError for
/// fewer than 8 correspondences.
std::optional<FundamentalMatrix> estimate_fundamental_8pt(std::span<const Correspondence> corrs);

/// First-order geometric error in pixels^2; +inf when the gradient term
/// vanishes (< 1e-18).
double sampson_distance(const Eigen::Matrix3d& f, const Correspondence& c);
inline double sampson_distance(const FundamentalMatrix& f, const Correspondence& c) {
  return sampson_distance(f.entries, c);
}

/// Scales F to unit Frobenius norm with its largest-magnitude entry positive
/// (first in row-major order on exact ties).
Eigen::Matrix3d normalize_fundamental(const Eigen::Matrix3d& f);

/// F = K_other^{-T} [t]x R K_ref^{-1} for X_other = R X_ref + t.
Eigen::Matrix3d fundamental_from_poses(const Eigen::Matrix3d& k_ref, const Eigen::Matrix3d& k_other,
                                       const Eigen::Matrix3d& r, const Eigen::Vector3d& t);

struct RansacParams {
  int iterations = 1000;
  double threshold = 2.0;  // Sampson distance, pixels^2
  std::uint64_t seed = 0;
};

struct RansacResult {
  FundamentalMatrix model;
  std::vector<std::size_t> inliers;  // ascending
};

/// Fixed-iteration RANSAC over 8-point minimal samples. Iteration i draws
/// from its own stream keyed by (seed, i); the largest consensus set wins
/// with ties going to the earlier iteration, and the model is refit on it.
/// Returns nullopt when no iteration reaches 8 inliers. Throws
/// PreconditionError for fewer than 8 correspondences.
std::optional<RansacResult> ransac_fundamental(std::span<const Correspondence> corrs, const RansacParams& params);

/// CSV with header `x_ref,y_ref,x_other,y_other,fg_ref,fg_other`; flags as 0/1.
void write_correspondences_csv(std::ostream& out, std::span<const Correspondence> corrs);
std::vector<Correspondence> read_correspondences_csv(std::istream& in);

}  // namespace chronosplat
