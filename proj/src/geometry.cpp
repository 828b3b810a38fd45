#include "chronosplat/geometry.hpp"

#include "chronosplat/rng.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace chronosplat {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Row9 = Eigen::Matrix<double, 1, 9>;

constexpr double kRankTolerance = 1e-10;

// Similarity taking the points to centroid 0 and RMS distance sqrt(2).
std::optional<Matrix3d> hartley_transform(std::span<const Correspondence> corrs, bool ref) {
  Vector2d centroid = Vector2d::Zero();
  for (const auto& c : corrs) centroid += ref ? c.p_ref : c.p_other;
  centroid /= static_cast<double>(corrs.size());
  double sq = 0.0;
  for (const auto& c : corrs) sq += ((ref ? c.p_ref : c.p_other) - centroid).squaredNorm();
  const double rms = std::sqrt(sq / static_cast<double>(corrs.size()));
  if (!(rms > 0.0) || !std::isfinite(rms)) return std::nullopt;
  const double s = std::sqrt(2.0) / rms;
  Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

Row9 design_row(const Vector3d& x, const Vector3d& xp) {
  Row9 r;
  r << xp[0] * x[0], xp[0] * x[1], xp[0] * x[2], xp[1] * x[0], xp[1] * x[1], xp[1] * x[2], xp[2] * x[0],
      xp[2] * x[1], xp[2] * x[2];
  return r;
}

template <typename Design>
std::optional<Eigen::Matrix<double, 9, 1>> null_vector(const Design& a) {
  Eigen::JacobiSVD<Design> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 8 || !(sv[0] > 0.0) || sv[7] <= kRankTolerance * sv[0]) return std::nullopt;
  return svd.matrixV().col(8);
}

}  // namespace

Matrix3d normalize_fundamental(const Matrix3d& f) {
  const double norm = f.norm();
  Matrix3d out = f / norm;
  int best = 0;
  for (int i = 1; i < 9; ++i)
    if (std::abs(out(i / 3, i % 3)) > std::abs(out(best / 3, best % 3))) best = i;
  if (out(best / 3, best % 3) < 0.0) out = -out;
  return out;
}

Matrix3d fundamental_from_poses(const Matrix3d& k_ref, const Matrix3d& k_other, const Matrix3d& r,
                                const Vector3d& t) {
  Matrix3d tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return k_other.inverse().transpose() * tx * r * k_ref.inverse();
}

std::optional<FundamentalMatrix> estimate_fundamental_8pt(std::span<const Correspondence> corrs) {
  if (corrs.size() < 8) throw PreconditionError("estimate_fundamental_8pt: at least 8 correspondences required");
  const auto t_ref = hartley_transform(corrs, true);
  const auto t_other = hartley_transform(corrs, false);
  if (!t_ref || !t_other) return std::nullopt;

  std::optional<Eigen::Matrix<double, 9, 1>> v;
  if (corrs.size() == 8) {
    // Minimal sample: the null space is exact, and the last column of Q in
    // A^T = QR spans it.
    Eigen::Matrix<double, 9, 8> at;
    for (int i = 0; i < 8; ++i)
      at.col(i) = design_row(*t_ref * corrs[i].p_ref.homogeneous(), *t_other * corrs[i].p_other.homogeneous()).transpose();
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 9, 8>> qr(at);
    const auto& r = qr.matrixQR();
    if (std::abs(r(7, 7)) > kRankTolerance * std::abs(r(0, 0))) {
      const Eigen::Matrix<double, 9, 9> q = qr.householderQ();
      v = q.col(8);
    }
  } else if (corrs.size() == 9) {
    Eigen::Matrix<double, 9, 9> a;
    for (int i = 0; i < 9; ++i)
      a.row(i) = design_row(*t_ref * corrs[i].p_ref.homogeneous(), *t_other * corrs[i].p_other.homogeneous());
    v = null_vector(a);
  } else {
    Eigen::Matrix<double, Eigen::Dynamic, 9> a(static_cast<Eigen::Index>(corrs.size()), 9);
    for (std::size_t i = 0; i < corrs.size(); ++i)
      a.row(static_cast<Eigen::Index>(i)) =
          design_row(*t_ref * corrs[i].p_ref.homogeneous(), *t_other * corrs[i].p_other.homogeneous());
    v = null_vector(a);
  }
  if (!v) return std::nullopt;

  Matrix3d fn;
  fn << (*v)[0], (*v)[1], (*v)[2], (*v)[3], (*v)[4], (*v)[5], (*v)[6], (*v)[7], (*v)[8];
  Eigen::JacobiSVD<Matrix3d> svd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3d sv = svd.singularValues();
  sv[2] = 0.0;
  fn = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();

  const Matrix3d f = t_other->transpose() * fn * *t_ref;
  if (!f.allFinite() || f.norm() == 0.0) return std::nullopt;
  return FundamentalMatrix{normalize_fundamental(f)};
}

double sampson_distance(const Matrix3d& f, const Correspondence& c) {
  const Vector3d x = c.p_ref.homogeneous();
  const Vector3d xp = c.p_other.homogeneous();
  const Vector3d fx = f * x;
  const Vector3d ftxp = f.transpose() * xp;
  const double num = xp.dot(fx);
  const double den = fx[0] * fx[0] + fx[1] * fx[1] + ftxp[0] * ftxp[0] + ftxp[1] * ftxp[1];
  if (den < 1e-18) return std::numeric_limits<double>::infinity();
  return num * num / den;
}

std::optional<RansacResult> ransac_fundamental(std::span<const Correspondence> corrs, const RansacParams& params) {
  if (corrs.size() < 8) throw PreconditionError("ransac_fundamental: at least 8 correspondences required");

  std::vector<std::size_t> best_inliers;
  std::optional<FundamentalMatrix> best_model;
  std::vector<Correspondence> sample(8);
  std::vector<std::size_t> inliers;
  inliers.reserve(corrs.size());

  for (int it = 0; it < params.iterations; ++it) {
    Rng rng = Rng::stream(params.seed, {static_cast<std::uint64_t>(it)});
    const auto idx = rng.sample_distinct(corrs.size(), 8);
    for (int k = 0; k < 8; ++k) sample[k] = corrs[idx[k]];
    const auto model = estimate_fundamental_8pt(sample);
    if (!model) continue;
    inliers.clear();
    for (std::size_t i = 0; i < corrs.size(); ++i)
      if (sampson_distance(model->entries, corrs[i]) < params.threshold) inliers.push_back(i);
    if (inliers.size() > best_inliers.size()) {
      best_inliers = inliers;
      best_model = model;
    }
  }
  if (best_inliers.size() < 8) return std::nullopt;

  std::vector<Correspondence> consensus;
  consensus.reserve(best_inliers.size());
  for (std::size_t i : best_inliers) consensus.push_back(corrs[i]);
  if (auto refit = estimate_fundamental_8pt(consensus)) best_model = refit;
  return RansacResult{*best_model, std::move(best_inliers)};
}

void write_correspondences_csv(std::ostream& out, std::span<const Correspondence> corrs) {
  out << "x_ref,y_ref,x_other,y_other,fg_ref,fg_other\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& c : corrs) {
    line.str("");
    line << c.p_ref.x() << ',' << c.p_ref.y() << ',' << c.p_other.x() << ',' << c.p_other.y() << ','
         << (c.fg_ref ? 1 : 0) << ',' << (c.fg_other ? 1 : 0) << '\n';
    out << line.str();
  }
}

std::vector<Correspondence> read_correspondences_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("correspondence CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x_ref,y_ref,x_other,y_other,fg_ref,fg_other")
    throw std::runtime_error("correspondence CSV: unexpected header '" + line + "'");
  std::vector<Correspondence> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string field;
    double v[6];
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("correspondence CSV: short row " + std::to_string(row));
      try {
        v[i] = std::stod(field);
      } catch (const std::exception&) {
        throw std::runtime_error("correspondence CSV: bad number on row " + std::to_string(row));
      }
    }
    Correspondence c;
    c.p_ref = {v[0], v[1]};
    c.p_other = {v[2], v[3]};
    c.fg_ref = v[4] != 0.0;
    c.fg_other = v[5] != 0.0;
    out.push_back(c);
  }
  return out;
}

}  // namespace chronosplat
