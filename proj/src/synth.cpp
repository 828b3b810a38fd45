#include "chronosplat/synth.hpp"

#include "chronosplat/parallel.hpp"
#include "chronosplat/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace chronosplat {

namespace {

// Stream tags.
constexpr std::uint64_t kTagScene = 1;
constexpr std::uint64_t kTagOffsets = 2;
constexpr std::uint64_t kTagMatches = 3;

constexpr double kCameraDistance = 4.0;
constexpr double kArcHalfAngle = 35.0 * std::numbers::pi / 180.0;
constexpr double kBaseAngularFrequency = std::numbers::pi;  // rad/s: a 2 s period
constexpr double kSwayAmplitude = 0.8;
constexpr double kPartAmplitude = 0.5;

Quaterniond random_rotation(Rng& rng) {
  Eigen::Vector4d v;
  do {
    for (int i = 0; i < 4; ++i) v[i] = rng.normal();
  } while (v.norm() < 1e-6);
  v.normalize();
  return Quaterniond(v[0], v[1], v[2], v[3]);
}

Vector3d random_unit(Rng& rng) {
  Vector3d v;
  do {
    v = {rng.normal(), rng.normal(), rng.normal()};
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Scene dynamic_only(const Scene& scene) {
  Scene out;
  out.frame_rate = scene.frame_rate;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (scene.motions[i].is_static) continue;
    out.gaussians.push_back(scene.gaussians[i]);
    out.motions.push_back(scene.motions[i]);
  }
  return out;
}

bool in_image(const Vector2d& p, const Camera& cam) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= cam.width - 1 && p.y() <= cam.height - 1;
}

std::optional<Vector2d> project_point(const Vector3d& world, const Camera& cam) {
  const Vector3d p = cam.to_camera(world);
  if (!(p.z() > 0.01)) return std::nullopt;
  const Vector3d h = cam.intrinsics * p;
  Vector2d px(h.x() / h.z(), h.y() / h.z());
  if (!in_image(px, cam)) return std::nullopt;
  return px;
}

Vector2d clamp_to_image(Vector2d p, const Camera& cam) {
  p.x() = std::clamp(p.x(), 0.0, static_cast<double>(cam.width - 1));
  p.y() = std::clamp(p.y(), 0.0, static_cast<double>(cam.height - 1));
  return p;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_static < 0 || n_dynamic < 0) throw InvariantError("SynthConfig: Gaussian counts must be >= 0");
  if (n_cameras < 2) throw InvariantError("SynthConfig: at least 2 cameras required");
  if (n_frames <= 2 * search_radius + 1)
    throw InvariantError("SynthConfig: n_frames must exceed 2 * search_radius + 1");
  if (!(frame_rate > 0.0)) throw InvariantError("SynthConfig: frame_rate must be positive");
  if (offset_max < 0) throw InvariantError("SynthConfig: offset_max must be >= 0");
  if (!(noise_sigma >= 0.0)) throw InvariantError("SynthConfig: noise_sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
    throw InvariantError("SynthConfig: outlier_fraction must lie in [0, 1)");
  if (matches_per_pair < 0) throw InvariantError("SynthConfig: matches_per_pair must be >= 0");
  if (width < 8 || height < 8) throw InvariantError("SynthConfig: image must be at least 8x8");
  if (reference_camera >= static_cast<std::size_t>(n_cameras))
    throw InvariantError("SynthConfig: reference camera out of range");
}

bool Mask::at(double x, double y) const {
  const long xi = std::lround(x), yi = std::lround(y);
  if (xi < 0 || yi < 0 || xi >= width || yi >= height) return false;
  return bits[static_cast<std::size_t>(yi) * width + xi] != 0;
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

Scene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, {kTagScene});
  Scene scene;
  scene.frame_rate = cfg.frame_rate;

  for (int i = 0; i < cfg.n_static; ++i) {
    Gaussian3D g;
    g.center = {rng.uniform(-2.2, 2.2), rng.uniform(-1.6, 1.6), rng.uniform(0.9, 2.6)};
    g.rotation = random_rotation(rng);
    g.scale = {rng.uniform(0.07, 0.18), rng.uniform(0.07, 0.18), rng.uniform(0.07, 0.18)};
    g.opacity = rng.uniform(0.5, 0.9);
    g.color = {rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6)};
    scene.gaussians.push_back(g);
    scene.motions.push_back(Deformation{});
  }

  const Vector3d extent(0.28, 0.42, 0.2);
  const Vector3d sway = Vector3d(0.55, 0.8, 0.25).normalized();
  const double base_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < cfg.n_dynamic; ++i) {
    Gaussian3D g;
    for (int a = 0; a < 3; ++a) g.center[a] = extent[a] * std::clamp(rng.normal(), -2.0, 2.0) * 0.6;
    g.rotation = random_rotation(rng);
    g.scale = {rng.uniform(0.035, 0.08), rng.uniform(0.035, 0.08), rng.uniform(0.035, 0.08)};
    g.opacity = rng.uniform(0.7, 0.95);
    g.color = {rng.uniform(0.55, 1.0), rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.9)};

    // Shared sway plus a per-part component of similar size: the subject
    // as a whole moves, and its parts move relative to each other.
    Deformation d;
    d.is_static = false;
    d.angular_frequency = kBaseAngularFrequency * rng.uniform(0.8, 1.2);
    d.phase = base_phase + 1.5 * g.center.y() / extent.y() + 0.3 * rng.normal();
    d.amplitude = cfg.motion_scale * (kSwayAmplitude * sway + kPartAmplitude * random_unit(rng));
    scene.gaussians.push_back(g);
    scene.motions.push_back(d);
  }
  return scene;
}

std::vector<Camera> generate_rig(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Camera> rig;
  const double f = 1.1 * cfg.width;
  Matrix3d k;
  k << f, 0, 0.5 * (cfg.width - 1), 0, f, 0.5 * (cfg.height - 1), 0, 0, 1;
  const Vector3d target = Vector3d::Zero();
  const Vector3d down(0, 1, 0);
  for (int j = 0; j < cfg.n_cameras; ++j) {
    const double u = cfg.n_cameras == 1 ? 0.5 : static_cast<double>(j) / (cfg.n_cameras - 1);
    const double theta = -kArcHalfAngle + 2.0 * kArcHalfAngle * u;
    const double height = 0.35 * std::sin(1.7 * j + 0.4);
    const Vector3d c(kCameraDistance * std::sin(theta), height, -kCameraDistance * std::cos(theta));
    const Vector3d z = (target - c).normalized();
    const Vector3d x = down.cross(z).normalized();
    const Vector3d y = z.cross(x);
    Camera cam;
    cam.intrinsics = k;
    cam.rotation.row(0) = x.transpose();
    cam.rotation.row(1) = y.transpose();
    cam.rotation.row(2) = z.transpose();
    cam.translation = -cam.rotation * c;
    cam.width = cfg.width;
    cam.height = cfg.height;
    cam.frame_rate = cfg.frame_rate;
    rig.push_back(cam);
  }
  return rig;
}

std::vector<double> sample_gt_offsets(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<double> offsets(static_cast<std::size_t>(cfg.n_cameras), 0.0);
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    if (j == cfg.reference_camera) continue;
    // One stream per camera; the integer part is a monotone function of a
    // single uniform, so raising offset_max never shrinks an offset.
    Rng rng = Rng::stream(cfg.seed, {kTagOffsets, j});
    const double u = rng.uniform();
    const double frac = rng.uniform() - 0.5;
    const int whole = std::min(cfg.offset_max, static_cast<int>(std::floor(u * (cfg.offset_max + 1))));
    double value = whole;
    if (cfg.sub_frame_offsets && cfg.offset_max > 0) {
      value = whole + frac;
      if (value < 0.0 || value > cfg.offset_max) value = whole - frac;
    }
    offsets[j] = value;
  }
  return offsets;
}

Mask foreground_mask(const Scene& scene, const Camera& cam, double scene_time) {
  const Image cover = render_scene_time(dynamic_only(scene), cam, scene_time);
  Mask m{cam.width, cam.height, std::vector<std::uint8_t>(cover.pixel_count(), 0)};
  for (std::size_t i = 0; i < cover.pixel_count(); ++i) m.bits[i] = cover.alpha[i] > 0.5 ? 1 : 0;
  return m;
}

std::vector<Video> generate_videos(const Scene& scene, std::span<const Camera> rig, std::span<const double> offsets,
                                   const SynthConfig& cfg) {
  if (offsets.size() != rig.size()) throw InvariantError("generate_videos: one offset per camera required");
  std::vector<Video> videos(rig.size());
  for (auto& v : videos) {
    v.frames.resize(static_cast<std::size_t>(cfg.n_frames));
    v.masks.resize(static_cast<std::size_t>(cfg.n_frames));
  }
  const std::size_t n = rig.size() * static_cast<std::size_t>(cfg.n_frames);
  parallel_for(n, [&](std::size_t item) {
    const std::size_t j = item / cfg.n_frames;
    const std::size_t i = item % cfg.n_frames;
    const double t = static_cast<double>(i) + offsets[j];
    videos[j].frames[i] = render_scene_time(scene, rig[j], t);
    videos[j].masks[i] = foreground_mask(scene, rig[j], t);
  });
  return videos;
}

LabeledCorrespondences generate_correspondences(const Scene& scene, std::span<const Camera> rig, const ViewPair& pair,
                                                const SynthConfig& cfg, const Mask* mask_a, const Mask* mask_b) {
  const Camera& cam_a = rig[pair.camera_a];
  const Camera& cam_b = rig[pair.camera_b];
  Mask own_a, own_b;
  if (!mask_a) {
    own_a = foreground_mask(scene, cam_a, pair.time_a);
    mask_a = &own_a;
  }
  if (!mask_b) {
    own_b = foreground_mask(scene, cam_b, pair.time_b);
    mask_b = &own_b;
  }

  Rng rng = Rng::stream(cfg.seed, {kTagMatches, pair.camera_a, pair.camera_b, key_of(pair.time_a), key_of(pair.time_b)});
  LabeledCorrespondences out;
  const std::size_t wanted = static_cast<std::size_t>(cfg.matches_per_pair);
  if (scene.size() == 0 || wanted == 0) return out;

  std::vector<double> cdf(scene.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < scene.size(); ++i) cdf[i] = acc += scene.gaussians[i].opacity;
  if (!(acc > 0.0)) return out;

  const std::size_t max_attempts = 50 * wanted;
  for (std::size_t attempt = 0; attempt < max_attempts && out.matches.size() < wanted; ++attempt) {
    const double r = rng.uniform() * acc;
    const std::size_t gi = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(), scene.size() - 1);
    const Gaussian3D& g = scene.gaussians[gi];
    const Deformation& d = scene.motions[gi];
    const Vector3d local = rotation_matrix(g.rotation) * g.scale.cwiseProduct(random_unit(rng));
    const Vector3d canonical = g.center + local;
    const auto pa = project_point(canonical + d.offset(pair.time_a, scene.frame_rate), cam_a);
    const auto pb = project_point(canonical + d.offset(pair.time_b, scene.frame_rate), cam_b);
    const Vector2d noise_a(rng.normal(), rng.normal());
    const Vector2d noise_b(rng.normal(), rng.normal());
    if (!pa || !pb) continue;
    if (d.is_static && (mask_a->at(pa->x(), pa->y()) || mask_b->at(pb->x(), pb->y()))) continue;
    Correspondence c;
    c.p_ref = clamp_to_image(*pa + cfg.noise_sigma * noise_a, cam_a);
    c.p_other = clamp_to_image(*pb + cfg.noise_sigma * noise_b, cam_b);
    out.matches.push_back(c);
  }

  out.outlier.assign(out.matches.size(), false);
  const auto n_out = static_cast<std::size_t>(std::llround(cfg.outlier_fraction * static_cast<double>(out.matches.size())));
  for (std::size_t idx : rng.sample_distinct(out.matches.size(), n_out)) {
    out.matches[idx].p_ref = {rng.uniform(0.0, cam_a.width - 1), rng.uniform(0.0, cam_a.height - 1)};
    out.matches[idx].p_other = {rng.uniform(0.0, cam_b.width - 1), rng.uniform(0.0, cam_b.height - 1)};
    out.outlier[idx] = true;
  }
  for (auto& c : out.matches) {
    c.fg_ref = mask_a->at(c.p_ref.x(), c.p_ref.y());
    c.fg_other = mask_b->at(c.p_other.x(), c.p_other.y());
  }
  return out;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  Dataset ds;
  ds.config = cfg;
  ds.scene = generate_scene(cfg);
  ds.rig = generate_rig(cfg);
  ds.offsets = sample_gt_offsets(cfg);
  ds.videos = generate_videos(ds.scene, ds.rig, ds.offsets, cfg);
  return ds;
}

SyntheticMatcher::SyntheticMatcher(const Scene& scene, std::span<const Camera> rig, std::vector<double> offsets,
                                   std::span<const Video> videos, SynthConfig cfg)
    : scene_(scene), rig_(rig), offsets_(std::move(offsets)), videos_(videos), cfg_(cfg) {}

const Mask* SyntheticMatcher::mask_for(const FrameRef& f) const {
  if (f.camera >= videos_.size()) return nullptr;
  const auto& masks = videos_[f.camera].masks;
  if (f.frame < 0 || static_cast<std::size_t>(f.frame) >= masks.size()) return nullptr;
  return &masks[static_cast<std::size_t>(f.frame)];
}

std::vector<Correspondence> SyntheticMatcher::match(const FrameRef& ref, const FrameRef& other) const {
  const ViewPair pair{ref.camera, ref.frame + offsets_.at(ref.camera), other.camera,
                      other.frame + offsets_.at(other.camera)};
  return generate_correspondences(scene_, rig_, pair, cfg_, mask_for(ref), mask_for(other)).matches;
}

}  // namespace chronosplat
