#include "chronosplat/renderer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

using namespace chronosplat;
using testsupport::axis_camera;

namespace {

// Straight-line re-derivation of the per-pixel weight.
double oracle_weight(const Gaussian2D& g, double x, double y) {
  const double a = g.covariance(0, 0) + 1e-8, b = g.covariance(0, 1), d = g.covariance(1, 1) + 1e-8;
  const double det = a * d - b * b;
  const double dx = x - g.mean.x(), dy = y - g.mean.y();
  const double m2 = (d * dx * dx - 2 * b * dx * dy + a * dy * dy) / det;
  if (m2 >= 9.0) return 0.0;
  double k = std::exp(-0.5 * m2);
  if (m2 > 8.0) {
    const double u = 9.0 - m2;
    k *= u * u * (3.0 - 2.0 * u);
  }
  return g.opacity * k;
}

Scene one(const Gaussian3D& g) {
  Scene s;
  s.gaussians.push_back(g);
  s.motions.push_back({});
  return s;
}

}  // namespace

TEST_CASE("covariance from rotation and scale") {
  CHECK(covariance_from_rotation_scale(Quaterniond::Identity(), Vector3d(1, 1, 1)).isApprox(Matrix3d::Identity()));
  const Matrix3d d = covariance_from_rotation_scale(Quaterniond::Identity(), Vector3d(2, 1, 1));
  CHECK(d.isApprox(Vector3d(4, 1, 1).asDiagonal().toDenseMatrix()));
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Matrix3d c = covariance_from_rotation_scale(testsupport::random_rotation(rng), Vector3d(1, 2, 3));
    CHECK((c - c.transpose()).norm() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(c);
    const Vector3d ev = es.eigenvalues();
    CHECK(ev[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(ev[2] == doctest::Approx(9.0).epsilon(1e-12));
  }
}

TEST_CASE("on-axis Gaussian projects to the principal point") {
  const Camera cam = axis_camera(64, 48, 50.0);
  Gaussian3D g;
  g.center = {0, 0, 3};
  g.scale = {0.1, 0.1, 0.1};
  const auto p = project_gaussian(g, cam);
  REQUIRE(p);
  CHECK(p->mean.x() == doctest::Approx(31.5));
  CHECK(p->mean.y() == doctest::Approx(23.5));
  CHECK(p->depth == doctest::Approx(3.0));
}

TEST_CASE("projected covariance agrees with Monte-Carlo projection") {
  const double f = 80.0;
  const Camera cam = axis_camera(64, 64, f);
  Rng rng(11);
  for (const double sigma : {0.05, 0.1}) {
    Gaussian3D g;
    g.center = {0, 0, 4};
    g.scale = Vector3d::Constant(sigma);
    const auto p = project_gaussian(g, cam);
    REQUIRE(p);
    const double expect = (f * sigma / 4.0) * (f * sigma / 4.0);
    CHECK(p->covariance(0, 0) == doctest::Approx(expect).epsilon(1e-12));

    const int n = 100000;
    std::vector<Vector2d> pts(n);
    Vector2d mean = Vector2d::Zero();
    for (auto& q : pts) {
      const Vector3d x = g.center + sigma * Vector3d(rng.normal(), rng.normal(), rng.normal());
      const Vector3d h = cam.intrinsics * cam.to_camera(x);
      q = h.head<2>() / h.z();
      mean += q;
    }
    mean /= n;
    Eigen::Matrix2d mc = Eigen::Matrix2d::Zero();
    for (const auto& q : pts) mc += (q - mean) * (q - mean).transpose();
    mc /= n - 1;
    CHECK((mc - p->covariance).norm() / mc.norm() < 0.02);
  }

  // Anisotropic, rotated and off-axis.
  Gaussian3D g;
  g.center = {0.3, -0.2, 5};
  g.scale = {0.12, 0.04, 0.08};
  g.rotation = testsupport::random_rotation(rng);
  const auto p = project_gaussian(g, cam);
  REQUIRE(p);
  const Matrix3d cov = covariance_from_rotation_scale(g.rotation, g.scale);
  const Eigen::LLT<Matrix3d> llt(cov);
  const int n = 100000;
  std::vector<Vector2d> pts(n);
  Vector2d mean = Vector2d::Zero();
  for (auto& q : pts) {
    const Vector3d x = g.center + llt.matrixL() * Vector3d(rng.normal(), rng.normal(), rng.normal());
    const Vector3d h = cam.intrinsics * cam.to_camera(x);
    q = h.head<2>() / h.z();
    mean += q;
  }
  mean /= n;
  Eigen::Matrix2d mc = Eigen::Matrix2d::Zero();
  for (const auto& q : pts) mc += (q - mean) * (q - mean).transpose();
  mc /= n - 1;
  CHECK((mc - p->covariance).norm() / mc.norm() < 0.02);
}

TEST_CASE("culling") {
  const Camera cam = axis_camera();
  Gaussian3D g;
  g.scale = Vector3d::Constant(0.1);
  g.center = {0, 0, -2};
  CHECK_FALSE(project_gaussian(g, cam));
  g.center = {0, 0, 0.005};
  CHECK_FALSE(project_gaussian(g, cam));
  g.center = {30, 0, 2};  // far outside the image
  CHECK_FALSE(project_gaussian(g, cam));
  g.center = {0, 0, 2};
  CHECK(project_gaussian(g, cam));
}

TEST_CASE("empty scene renders the background") {
  const Camera cam = axis_camera(16, 12);
  RenderOptions opts;
  opts.background = {0.2, 0.4, 0.6};
  const Image img = render_scene_time(Scene{}, cam, 0.0, opts);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) CHECK(img.pixel(x, y) == opts.background);
  CHECK(std::all_of(img.depth.begin(), img.depth.end(), [](double d) { return d == 0.0; }));
}

TEST_CASE("single Gaussian at its mean blends with the background") {
  const Camera cam = axis_camera(33, 33, 40.0);
  Gaussian3D g;
  g.center = {0, 0, 2};
  g.scale = Vector3d::Constant(0.2);
  g.opacity = 0.7;
  g.color = {0.9, 0.5, 0.1};
  RenderOptions opts;
  opts.background = {0.1, 0.2, 0.3};
  const Image img = render_scene_time(one(g), cam, 0.0, opts);
  const Vector3d expect = 0.7 * g.color + 0.3 * opts.background;
  CHECK((img.pixel(16, 16) - expect).norm() < 1e-14);
  CHECK(img.depth[img.offset(16, 16)] == doctest::Approx(2.0));
}

TEST_CASE("photometric loss") {
  Image a(8, 6), b(8, 6);
  Rng rng(5);
  for (double& v : a.rgb) v = rng.uniform(0.1, 0.8);
  CHECK(photometric_loss(a, a) == 0.0);
  b = a;
  for (double& v : b.rgb) v += 0.1;
  CHECK(photometric_loss(a, b) == doctest::Approx(0.1).epsilon(1e-12));
  for (double& v : b.rgb) v = rng.uniform();
  double sum = 0.0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) sum += std::abs(a.pixel(x, y)[c] - b.pixel(x, y)[c]);
  CHECK(std::abs(photometric_loss(a, b) - sum / (8 * 6 * 3)) < 1e-12);
  CHECK_THROWS_AS(photometric_loss(a, Image(8, 5)), std::invalid_argument);
}

TEST_CASE("randomized renderer properties (1000 cases)") {
  const Camera cam = axis_camera(24, 24, 22.0);
  int checked_pairs = 0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    Rng rng = Rng::stream(2024, {k});
    RenderOptions opts;
    opts.background = {rng.uniform(), rng.uniform(), rng.uniform()};

    // Two-Gaussian blend against the straight-line oracle.
    Scene two = testsupport::random_scene(rng, 2, false);
    const auto p0 = project_gaussian(two.gaussians[0], cam), p1 = project_gaussian(two.gaussians[1], cam);
    const Image img2 = render_scene_time(two, cam, 0.0, opts);
    double worst = 0.0;
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        std::vector<Gaussian2D> gs;
        if (p0) gs.push_back(*p0);
        if (p1) gs.push_back(*p1);
        if (gs.size() == 2 && gs[1].depth < gs[0].depth) std::swap(gs[0], gs[1]);
        Vector3d c = opts.background;
        if (gs.size() == 1) {
          const double w = oracle_weight(gs[0], x, y);
          c = w * gs[0].color + (1 - w) * opts.background;
        } else if (gs.size() == 2) {
          const double w0 = oracle_weight(gs[0], x, y), w1 = oracle_weight(gs[1], x, y);
          c = w0 * gs[0].color + (1 - w0) * w1 * gs[1].color + (1 - w0) * (1 - w1) * opts.background;
        }
        worst = std::max(worst, (img2.pixel(x, y) - c).cwiseAbs().maxCoeff());
      }
    CHECK(worst < 1e-12);
    if (p0 && p1) ++checked_pairs;

    // Larger scenes: range, permutation invariance, monotone transmittance.
    const int n = 2 + static_cast<int>(rng.below(10));
    Scene s = testsupport::random_scene(rng, n, true);
    const double t = rng.uniform(0.0, 30.0);
    const Image img = render_scene_time(s, cam, t, opts);
    CHECK(std::all_of(img.rgb.begin(), img.rgb.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
    CHECK(std::all_of(img.alpha.begin(), img.alpha.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));

    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Scene shuffled;
    for (std::size_t i : perm) {
      shuffled.gaussians.push_back(s.gaussians[i]);
      shuffled.motions.push_back(s.motions[i]);
    }
    CHECK(render_scene_time(shuffled, cam, t, opts).rgb == img.rgb);

    // Adding Gaussians behind everything already composited never raises
    // the transmittance (1 - alpha) at any pixel.
    Scene frozen;
    for (std::size_t i = 0; i < s.size(); ++i)
      frozen.gaussians.push_back(gaussian_at_time(s.gaussians[i], s.motions[i], t, s.frame_rate));
    std::sort(frozen.gaussians.begin(), frozen.gaussians.end(),
              [&](const Gaussian3D& a, const Gaussian3D& b) { return cam.to_camera(a.center).z() < cam.to_camera(b.center).z(); });
    frozen.motions.assign(frozen.size(), Deformation{});
    Scene prefix;
    std::vector<double> prev(cam.width * cam.height, 0.0);
    for (std::size_t i = 0; i < frozen.size(); ++i) {
      prefix.gaussians.push_back(frozen.gaussians[i]);
      prefix.motions.push_back({});
      const Image pi = render_scene_time(prefix, cam, 0.0, opts);
      for (std::size_t q = 0; q < prev.size(); ++q) CHECK_MESSAGE(pi.alpha[q] >= prev[q] - 1e-15, "pixel " << q);
      prev = pi.alpha;
    }
  }
  CHECK(checked_pairs > 500);
}

TEST_CASE("zero opacity renders the background exactly and rendering is deterministic") {
  Rng rng(99);
  Scene s = testsupport::random_scene(rng, 20, true);
  const Camera cam = axis_camera(32, 32, 30.0);
  const Image a = render_scene_time(s, cam, 3.5), b = render_scene_time(s, cam, 3.5);
  CHECK(a.rgb == b.rgb);
  CHECK(a.depth == b.depth);
  for (auto& g : s.gaussians) g.opacity = 0.0;
  RenderOptions opts;
  opts.background = {0.25, 0.5, 0.75};
  const Image z = render_scene_time(s, cam, 3.5, opts);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(z.pixel(x, y) == opts.background);
}

TEST_CASE("render uses the camera's effective time") {
  Rng rng(4);
  const Scene s = testsupport::random_scene(rng, 10, true);
  const Camera cam = axis_camera(20, 20, 20.0);
  TimeModel tm(2);
  tm.set_coarse(1, 3);
  tm.set_fine(1, 0.25);
  CHECK(render(s, cam, 5.0, tm, 1).rgb == render_scene_time(s, cam, 8.25).rgb);
}

TEST_CASE("footprint kernel is continuous at the cutoff") {
  CHECK(footprint_kernel(0.0) == 1.0);
  CHECK(footprint_kernel(9.0) == 0.0);
  CHECK(footprint_kernel(8.0) == doctest::Approx(std::exp(-4.0)));
  CHECK(footprint_kernel(8.999999) < 1e-8);
  CHECK(footprint_kernel(12.0) == 0.0);
}
