// End-to-end runs on the default dataset. Slow: about 6 minutes on one core.

#include "chronosplat/harness.hpp"
#include "chronosplat/io.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace chronosplat;
namespace fs = std::filesystem;

namespace {

VideoSet video_set(const Dataset& ds) {
  VideoSet v;
  v.cameras = ds.rig;
  for (const auto& video : ds.videos) v.frames.push_back(video.frames);
  return v;
}

struct Run {
  Dataset ds;
  AlignmentOutcome out;
};

Run align(const RunConfig& cfg, AlignMode mode) {
  Run r{generate_dataset(cfg.synth), {}};
  const SyntheticMatcher matcher(r.ds.scene, r.ds.rig, r.ds.offsets, r.ds.videos, cfg.synth);
  r.out = run_alignment(r.ds.scene, video_set(r.ds), matcher, mode, cfg);
  return r;
}

double worst_error(const Run& r) {
  double worst = 0.0;
  for (std::size_t j = 0; j < r.ds.rig.size(); ++j)
    worst = std::max(worst, std::abs(r.out.time_model.total(j) - r.ds.offsets[j]));
  return worst;
}

}  // namespace

TEST_CASE("default dataset layout and offset range") {
  const fs::path dir = fs::temp_directory_path() / "chronosplat_pipeline_layout";
  fs::remove_all(dir);
  RunConfig cfg = default_config();
  std::ostringstream log;
  REQUIRE(cmd_synth(cfg, dir, log) == kExitOk);
  for (int j = 0; j < cfg.synth.n_cameras; ++j)
    for (int i = 0; i < cfg.synth.n_frames; ++i) {
      CHECK(fs::exists(dir / ("cam_" + std::to_string(j)) / ("frame_" + std::to_string(i) + ".ppm")));
      CHECK(fs::exists(dir / ("cam_" + std::to_string(j)) / ("mask_" + std::to_string(i) + ".ppm")));
    }
  CHECK_FALSE(fs::exists(dir / ("cam_" + std::to_string(cfg.synth.n_cameras))));
  fs::remove_all(dir);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.apply_seed(seed);
    for (double o : sample_gt_offsets(cfg.synth)) {
      CHECK(o >= 0.0);
      CHECK(o <= 10.0);
    }
  }
}

TEST_CASE("coarse mode recovers integer offsets exactly") {
  int exact = 0, cameras = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RunConfig cfg;
    cfg.apply_seed(seed);
    cfg.synth.sub_frame_offsets = false;
    const Run r = align(cfg, AlignMode::coarse);
    for (std::size_t j = 1; j < r.ds.rig.size(); ++j) {
      ++cameras;
      exact += r.out.time_model.total(j) == r.ds.offsets[j];
    }
    for (std::size_t j = 0; j < r.ds.rig.size(); ++j) CHECK(r.out.time_model.fine(j) == 0.0);
  }
  CHECK(exact >= static_cast<int>(std::ceil(0.95 * cameras)));
}

TEST_CASE("full mode recovers sub-frame offsets") {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RunConfig cfg;
    cfg.apply_seed(seed);
    const Run r = align(cfg, AlignMode::full);
    if (worst_error(r) < 0.05) ++good;
    else MESSAGE("seed " << seed << ": worst camera error " << worst_error(r));
  }
  CHECK(good >= 18);
}

TEST_CASE("fine-only descent stalls far from a 6-frame offset") {
  RunConfig cfg;
  cfg.apply_seed(2);
  const Scene scene = generate_scene(cfg.synth);
  const auto rig = generate_rig(cfg.synth);
  std::vector<double> offsets(rig.size(), 0.0);
  for (std::size_t j = 1; j < offsets.size(); ++j) offsets[j] = 6.0;
  const auto videos = generate_videos(scene, rig, offsets, cfg.synth);
  VideoSet v;
  v.cameras = rig;
  for (const auto& video : videos) v.frames.push_back(video.frames);
  const SyntheticMatcher matcher(scene, rig, offsets, videos, cfg.synth);

  const AlignmentOutcome out = run_alignment(scene, v, matcher, AlignMode::fine, cfg);
  int far = 0;
  for (std::size_t j = 1; j < rig.size(); ++j) {
    CHECK(out.time_model.coarse(j) == 0);
    far += std::abs(out.time_model.total(j) - 6.0) > 1.0;
  }
  CHECK(far >= 1);
  MESSAGE(far << " of " << rig.size() - 1 << " cameras end more than a frame from the truth");
}

TEST_CASE("recovered offsets improve held-in renders") {
  RunConfig cfg;
  cfg.apply_seed(1);
  const Run r = align(cfg, AlignMode::full);
  const VideoSet v = video_set(r.ds);
  const auto pairs = evaluation_pairs(v.num_cameras(), v.num_frames(), cfg);
  const EvalSummary before = evaluate_time_model(r.ds.scene, v, TimeModel(v.num_cameras()), pairs);
  const EvalSummary after = evaluate_time_model(r.ds.scene, v, r.out.time_model, pairs);
  CHECK(after.mean_psnr > before.mean_psnr);
  CHECK(after.mean_ssim > before.mean_ssim);
  CHECK(mean_offset_error(r.out.time_model, r.ds.offsets) < 0.05);
}
