#include "chronosplat/renderer.hpp"

#include "chronosplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace chronosplat {

namespace {

using Eigen::Matrix2d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

// Rows are split into a fixed number of bands regardless of worker count,
// and per-band gradient partials are summed in band order.
constexpr int kRowBands = 8;

struct Projection {
  Gaussian2D g2;
  Vector3d cam_point;
  Mat23 jacobian;
  Matrix3d cov_cam;  // W Sigma W^T
};

std::optional<Projection> project_detail(const Gaussian3D& g, const Camera& cam, double near_plane,
                                         std::size_t index) {
  const Vector3d p = cam.to_camera(g.center);
  const double z = p.z();
  if (!(z > near_plane)) return std::nullopt;

  const Matrix3d& k = cam.intrinsics;
  const double fx = k(0, 0), s = k(0, 1), cx = k(0, 2), fy = k(1, 1), cy = k(1, 2);
  const double iz = 1.0 / z, iz2 = iz * iz;

  Projection out;
  out.cam_point = p;
  out.g2.mean = {fx * p.x() * iz + s * p.y() * iz + cx, fy * p.y() * iz + cy};
  out.jacobian << fx * iz, s * iz, -(fx * p.x() + s * p.y()) * iz2, 0.0, fy * iz, -fy * p.y() * iz2;
  out.cov_cam = cam.rotation * covariance_from_rotation_scale(g.rotation, g.scale) * cam.rotation.transpose();
  Matrix2d cov = out.jacobian * out.cov_cam * out.jacobian.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  out.g2.covariance = cov;
  out.g2.depth = z;
  out.g2.opacity = g.opacity;
  out.g2.color = g.color;
  out.g2.index = index;

  const double sx = 3.0 * std::sqrt(cov(0, 0) + kCovarianceEpsilon);
  const double sy = 3.0 * std::sqrt(cov(1, 1) + kCovarianceEpsilon);
  const Vector2d& m = out.g2.mean;
  if (m.x() + sx < 0.0 || m.x() - sx > cam.width - 1 || m.y() + sy < 0.0 || m.y() - sy > cam.height - 1)
    return std::nullopt;
  return out;
}

struct Splat {
  Projection proj;
  Matrix2d inv_cov;
  int x0, x1, y0, y1;
};

std::vector<Splat> prepare_splats(const Scene& scene, const Camera& cam, double scene_time, const RenderOptions& opts) {
  std::vector<Splat> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D g = gaussian_at_time(scene.gaussians[i], scene.motions[i], scene_time, scene.frame_rate);
    auto proj = project_detail(g, cam, opts.near_plane, i);
    if (!proj) continue;
    const Matrix2d reg = proj->g2.covariance + kCovarianceEpsilon * Matrix2d::Identity();
    const double sx = 3.0 * std::sqrt(reg(0, 0));
    const double sy = 3.0 * std::sqrt(reg(1, 1));
    const Vector2d& m = proj->g2.mean;
    Splat sp{*proj, reg.inverse(), std::max(0, static_cast<int>(std::ceil(m.x() - sx))),
             std::min(cam.width - 1, static_cast<int>(std::floor(m.x() + sx))),
             std::max(0, static_cast<int>(std::ceil(m.y() - sy))),
             std::min(cam.height - 1, static_cast<int>(std::floor(m.y() + sy)))};
    if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
    splats.push_back(std::move(sp));
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    if (a.proj.g2.depth != b.proj.g2.depth) return a.proj.g2.depth < b.proj.g2.depth;
    return a.proj.g2.index < b.proj.g2.index;
  });
  return splats;
}

// Per-pixel contributor lists in front-to-back order (CSR layout).
struct PixelBins {
  std::vector<std::uint32_t> start;
  std::vector<std::uint32_t> entries;
};

PixelBins bin_splats(const std::vector<Splat>& splats, int width, int height) {
  PixelBins bins;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  bins.start.assign(n + 1, 0);
  for (const Splat& s : splats)
    for (int y = s.y0; y <= s.y1; ++y)
      for (int x = s.x0; x <= s.x1; ++x) ++bins.start[static_cast<std::size_t>(y) * width + x + 1];
  std::partial_sum(bins.start.begin(), bins.start.end(), bins.start.begin());
  bins.entries.resize(bins.start.back());
  std::vector<std::uint32_t> cursor(bins.start.begin(), bins.start.end() - 1);
  for (std::uint32_t id = 0; id < splats.size(); ++id) {
    const Splat& s = splats[id];
    for (int y = s.y0; y <= s.y1; ++y)
      for (int x = s.x0; x <= s.x1; ++x) bins.entries[cursor[static_cast<std::size_t>(y) * width + x]++] = id;
  }
  return bins;
}

double mahalanobis2(const Splat& s, const Vector2d& d) { return d.dot(s.inv_cov * d); }

// d footprint_kernel / d m2.
double footprint_kernel_slope(double m2) {
  if (m2 >= kFootprintCutoff) return 0.0;
  const double e = std::exp(-0.5 * m2);
  if (m2 <= kFootprintTaperStart) return -0.5 * e;
  const double u = kFootprintCutoff - m2;
  const double taper = u * u * (3.0 - 2.0 * u);
  const double dtaper_dm2 = -(6.0 * u - 6.0 * u * u);
  return -0.5 * e * taper + e * dtaper_dm2;
}

struct Contribution {
  std::uint32_t splat;
  double w, transmittance, kernel, m2;
  Vector2d d;
};

}  // namespace

double footprint_kernel(double m2) {
  if (m2 >= kFootprintCutoff) return 0.0;
  const double e = std::exp(-0.5 * m2);
  if (m2 <= kFootprintTaperStart) return e;
  const double u = kFootprintCutoff - m2;
  return e * u * u * (3.0 - 2.0 * u);
}

Image::Image(int w, int h, const Vector3d& fill)
    : width(w), height(h), rgb(3 * static_cast<std::size_t>(w) * h), depth(static_cast<std::size_t>(w) * h, 0.0),
      alpha(static_cast<std::size_t>(w) * h, 0.0) {
  for (std::size_t i = 0; i < pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) rgb[3 * i + c] = fill[c];
}

Matrix3d covariance_from_rotation_scale(const Quaterniond& rotation, const Vector3d& scale) {
  const Matrix3d m = rotation_matrix(rotation) * scale.asDiagonal();
  return m * m.transpose();
}

std::optional<Gaussian2D> project_gaussian(const Gaussian3D& g, const Camera& cam, double near_plane) {
  auto p = project_detail(g, cam, near_plane, 0);
  if (!p) return std::nullopt;
  return p->g2;
}

Image render_scene_time(const Scene& scene, const Camera& cam, double scene_time, const RenderOptions& opts) {
  const std::vector<Splat> splats = prepare_splats(scene, cam, scene_time, opts);
  const PixelBins bins = bin_splats(splats, cam.width, cam.height);
  Image img(cam.width, cam.height);
  const int band_rows = (cam.height + kRowBands - 1) / kRowBands;

  parallel_for(kRowBands, [&](std::size_t band) {
    const int y_begin = static_cast<int>(band) * band_rows;
    const int y_end = std::min(cam.height, y_begin + band_rows);
    for (int y = y_begin; y < y_end; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const std::size_t pix = img.offset(x, y);
        const Vector2d p(x, y);
        double transmittance = 1.0;
        Vector3d color = Vector3d::Zero();
        double depth = 0.0, weight_sum = 0.0;
        for (std::uint32_t e = bins.start[pix]; e < bins.start[pix + 1]; ++e) {
          const Splat& s = splats[bins.entries[e]];
          const double m2 = mahalanobis2(s, p - s.proj.g2.mean);
          if (m2 >= kFootprintCutoff) continue;
          const double w = s.proj.g2.opacity * footprint_kernel(m2);
          const double tw = transmittance * w;
          color += tw * s.proj.g2.color;
          depth += tw * s.proj.g2.depth;
          weight_sum += tw;
          transmittance *= 1.0 - w;
        }
        img.set_pixel(x, y, color + transmittance * opts.background);
        img.depth[pix] = weight_sum > 0.0 ? depth / weight_sum : 0.0;
        img.alpha[pix] = 1.0 - transmittance;
      }
    }
  });
  return img;
}

Image render(const Scene& scene, const Camera& cam, double t, const TimeModel& time_model, std::size_t camera_index,
             const RenderOptions& opts) {
  return render_scene_time(scene, cam, effective_time(time_model, camera_index, t), opts);
}

double photometric_loss(const Image& rendered, const Image& target) {
  if (rendered.width != target.width || rendered.height != target.height)
    throw std::invalid_argument("photometric_loss: image dimensions differ");
  if (rendered.rgb.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.rgb.size(); ++i) sum += std::abs(rendered.rgb[i] - target.rgb[i]);
  return sum / static_cast<double>(rendered.rgb.size());
}

double photometric_loss_backward(const Scene& scene, const Camera& cam, double scene_time, const Image& target,
                                 double weight, SceneGradient& grad, const RenderOptions& opts) {
  if (target.width != cam.width || target.height != cam.height)
    throw std::invalid_argument("photometric_loss_backward: target size does not match camera");
  if (grad.center.size() != scene.size() || grad.opacity.size() != scene.size())
    throw std::invalid_argument("photometric_loss_backward: gradient buffer size mismatch");

  const std::vector<Splat> splats = prepare_splats(scene, cam, scene_time, opts);
  const PixelBins bins = bin_splats(splats, cam.width, cam.height);
  const double scale = weight / (3.0 * static_cast<double>(target.pixel_count()));
  const int band_rows = (cam.height + kRowBands - 1) / kRowBands;

  struct BandPartial {
    double loss = 0.0;
    std::vector<Vector2d> mean;
    std::vector<Matrix2d> cov;
    std::vector<double> opacity;
  };
  std::vector<BandPartial> partial(kRowBands);

  parallel_for(kRowBands, [&](std::size_t band) {
    BandPartial& acc = partial[band];
    acc.mean.assign(splats.size(), Vector2d::Zero());
    acc.cov.assign(splats.size(), Matrix2d::Zero());
    acc.opacity.assign(splats.size(), 0.0);
    std::vector<Contribution> list;
    const int y_begin = static_cast<int>(band) * band_rows;
    const int y_end = std::min(cam.height, y_begin + band_rows);
    for (int y = y_begin; y < y_end; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const std::size_t pix = target.offset(x, y);
        const Vector2d p(x, y);
        list.clear();
        double transmittance = 1.0;
        Vector3d color = Vector3d::Zero();
        for (std::uint32_t e = bins.start[pix]; e < bins.start[pix + 1]; ++e) {
          const std::uint32_t id = bins.entries[e];
          const Splat& s = splats[id];
          const Vector2d d = p - s.proj.g2.mean;
          const double m2 = mahalanobis2(s, d);
          if (m2 >= kFootprintCutoff) continue;
          const double kernel = footprint_kernel(m2);
          const double w = s.proj.g2.opacity * kernel;
          list.push_back({id, w, transmittance, kernel, m2, d});
          color += transmittance * w * s.proj.g2.color;
          transmittance *= 1.0 - w;
        }
        color += transmittance * opts.background;

        Vector3d dl_dc;
        for (int c = 0; c < 3; ++c) {
          const double r = color[c] - target.rgb[3 * pix + c];
          acc.loss += std::abs(r);
          dl_dc[c] = r > 0.0 ? scale : (r < 0.0 ? -scale : 0.0);
        }
        if (dl_dc.isZero()) continue;

        // Back-to-front: rest = color composited from contribution i+1 onward,
        // normalized by its transmittance. dC/dw_i = T_i (c_i - rest).
        Vector3d rest = opts.background;
        for (auto it = list.rbegin(); it != list.rend(); ++it) {
          const Splat& s = splats[it->splat];
          const double dl_dw = dl_dc.dot(it->transmittance * (s.proj.g2.color - rest));
          rest = it->w * s.proj.g2.color + (1.0 - it->w) * rest;
          acc.opacity[it->splat] += dl_dw * it->kernel;
          const double dl_dm2 = dl_dw * s.proj.g2.opacity * footprint_kernel_slope(it->m2);
          if (dl_dm2 == 0.0) continue;
          const Vector2d ad = s.inv_cov * it->d;
          acc.mean[it->splat] += dl_dm2 * (-2.0 * ad);
          acc.cov[it->splat] += dl_dm2 * (-(ad * ad.transpose()));
        }
      }
    }
  });

  double loss = 0.0;
  for (const BandPartial& acc : partial) loss += acc.loss;

  for (std::size_t id = 0; id < splats.size(); ++id) {
    Vector2d g_mean = Vector2d::Zero();
    Matrix2d g_cov = Matrix2d::Zero();
    double g_opacity = 0.0;
    for (const BandPartial& acc : partial) {
      g_mean += acc.mean[id];
      g_cov += acc.cov[id];
      g_opacity += acc.opacity[id];
    }
    const Projection& pr = splats[id].proj;
    const std::size_t gi = pr.g2.index;
    grad.opacity[gi] += g_opacity;

    // Chain through mean = Pi(K x) and cov = J(x) C J(x)^T.
    const Vector3d& x = pr.cam_point;
    const Matrix3d& k = cam.intrinsics;
    const double fx = k(0, 0), s = k(0, 1), fy = k(1, 1);
    const double iz = 1.0 / x.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Mat23 dj[3];
    dj[0] << 0, 0, -fx * iz2, 0, 0, 0;
    dj[1] << 0, 0, -s * iz2, 0, 0, -fy * iz2;
    dj[2] << -fx * iz2, -s * iz2, 2.0 * (fx * x.x() + s * x.y()) * iz3, 0, -fy * iz2, 2.0 * fy * x.y() * iz3;
    Vector3d g_cam = pr.jacobian.transpose() * g_mean;
    const Mat23 jc = pr.jacobian * pr.cov_cam;
    for (int a = 0; a < 3; ++a) {
      const Matrix2d dcov = dj[a] * jc.transpose() + jc * dj[a].transpose();
      g_cam[a] += (g_cov.array() * dcov.array()).sum();
    }
    grad.center[gi] += cam.rotation.transpose() * g_cam;
  }
  return loss * weight / (3.0 * static_cast<double>(target.pixel_count()));
}

}  // namespace chronosplat
