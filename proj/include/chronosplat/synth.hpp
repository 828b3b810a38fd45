#pragma once

#include "chronosplat/coarse_align.hpp"
#include "chronosplat/core_scene.hpp"
#include "chronosplat/renderer.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace chronosplat {

/// Knobs for the synthetic unsynchronized multi-view benchmark.
struct SynthConfig {
  std::uint64_t seed = 0;
  int n_static = 100;
  int n_dynamic = 50;
  int n_cameras = 8;
  int n_frames = 60;
  double frame_rate = 15.0;
  int offset_max = 10;  // tau_max, frames
  bool sub_frame_offsets = true;
  double noise_sigma = 0.5;  // pixels
  double outlier_fraction = 0.2;
  int matches_per_pair = 200;
  int width = 128;
  int height = 128;
  double motion_scale = 1.0;
  int search_radius = 12;  // only used to check n_frames
  std::size_t reference_camera = 0;

  /// Throws InvariantError on inconsistent settings.
  void validate() const;
};

/// Binary image; pixel centers at integer coordinates.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  /// Value at the nearest pixel; false outside the image.
  bool at(double x, double y) const;
  std::size_t count() const;
};

/// Static Gaussians fill a box behind the origin; dynamic Gaussians form a
/// subject around the origin whose parts follow phase-shifted sinusoids, so
/// the subject deforms non-rigidly.
Scene generate_scene(const SynthConfig& cfg);

/// Cameras on a circular arc in front of the scene, all aimed at the origin,
/// sharing one set of intrinsics.
std::vector<Camera> generate_rig(const SynthConfig& cfg);

/// Ground-truth offsets in frames; the reference camera gets 0.
std::vector<double> sample_gt_offsets(const SynthConfig& cfg);

/// Coverage > 0.5 of a render containing only the dynamic Gaussians.
Mask foreground_mask(const Scene& scene, const Camera& cam, double scene_time);

struct Video {
  std::vector<Image> frames;
  std::vector<Mask> masks;
};

/// Frame i of camera j shows scene time i + offsets[j].
std::vector<Video> generate_videos(const Scene& scene, std::span<const Camera> rig, std::span<const double> offsets,
                                   const SynthConfig& cfg);

/// Two views at given scene times.
struct ViewPair {
  std::size_t camera_a = 0;
  double time_a = 0.0;
  std::size_t camera_b = 0;
  double time_b = 0.0;
};

struct LabeledCorrespondences {
  std::vector<Correspondence> matches;
  std::vector<bool> outlier;  // ground-truth label per row
};

/// Stand-in for a learned dense matcher. Samples surface points (opacity
/// weighted), places them at their positions at time_a / time_b, projects
/// into both views, perturbs with pixel noise, and replaces a fixed fraction
/// of rows with uniform random pixel pairs. Background points hidden behind
/// the subject in either view are rejected. Foreground flags come from the
/// given masks, or from freshly rendered ones when null.
LabeledCorrespondences generate_correspondences(const Scene& scene, std::span<const Camera> rig, const ViewPair& pair,
                                                const SynthConfig& cfg, const Mask* mask_a = nullptr,
                                                const Mask* mask_b = nullptr);

/// Everything the generator knows about one benchmark instance.
struct Dataset {
  SynthConfig config;
  Scene scene;
  std::vector<Camera> rig;
  std::vector<double> offsets;
  std::vector<Video> videos;
};

Dataset generate_dataset(const SynthConfig& cfg);

/// Matcher backed by the generator. It maps frame indices to scene times
/// with the ground-truth offsets it was built from; callers only see the
/// Matcher interface.
class SyntheticMatcher : public Matcher {
 public:
  SyntheticMatcher(const Scene& scene, std::span<const Camera> rig, std::vector<double> offsets,
                   std::span<const Video> videos, SynthConfig cfg);

  std::vector<Correspondence> match(const FrameRef& ref, const FrameRef& other) const override;

 private:
  const Mask* mask_for(const FrameRef& f) const;

  const Scene& scene_;
  std::span<const Camera> rig_;
  std::vector<double> offsets_;
  std::span<const Video> videos_;
  SynthConfig cfg_;
};

}  // namespace chronosplat
