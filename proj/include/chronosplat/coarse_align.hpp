#pragma once

#include "chronosplat/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace chronosplat {

/// A frame of one camera's video.
struct FrameRef {
  std::size_t camera = 0;
  int frame = 0;
};

/// Source of putative correspondences between two video frames. The
/// returned matches carry foreground flags from each frame's mask.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual std::vector<Correspondence> match(const FrameRef& ref, const FrameRef& other) const = 0;
};

/// Integer offset search configuration. Candidate `dt` pairs reference
/// frame t_i with frame t_i - dt of the other video, so that the winning
/// candidate is directly the other camera's time offset (frame i of a
/// camera with offset d shows scene time i + d).
struct CoarseSearchConfig {
  int radius = 12;  // k
  std::vector<int> reference_frames;
  RansacParams ransac;
  std::uint64_t seed = 0;

  /// Throws InvariantError unless k >= 0 and k <= t_i <= num_frames - 1 - k.
  void validate(int num_frames) const;
};

/// `count` reference frames spread evenly over [k, num_frames - 1 - k].
std::vector<int> default_reference_frames(int num_frames, int radius, int count = 5);

/// Inlier counts per candidate offset in [-radius, radius].
struct ScoreTable {
  int radius = 0;
  std::vector<int> reference_frames;
  std::vector<long> total;                 // indexed by dt + radius
  std::vector<std::vector<long>> per_frame;  // [dt + radius][frame slot]

  long total_at(int dt) const { return total.at(static_cast<std::size_t>(dt + radius)); }
};

/// Matches where both endpoints are inside their frame's foreground mask.
std::vector<Correspondence> filter_foreground(std::span<const Correspondence> corrs);

/// Sum over reference frames of the RANSAC inlier count on the foreground
/// matches between (ref, t_i) and (other, t_i - dt). Pairs with fewer than
/// 8 foreground matches, or where RANSAC fails, contribute 0. When
/// `per_frame` is non-null it receives the per-frame counts.
long alignment_score(const Matcher& matcher, std::size_t ref_camera, std::size_t other_camera, int dt,
                     const CoarseSearchConfig& cfg, std::vector<long>* per_frame = nullptr);

struct CoarseResult {
  int offset = 0;
  bool has_signal = true;  // false when every candidate scored 0
  ScoreTable table;
};

/// Argmax of alignment_score over dt in [-k, k]; ties go to the smaller
/// |dt|, then to the smaller signed value. Without any signal the offset
/// is 0 and has_signal is false.
CoarseResult coarse_offset_search(const Matcher& matcher, std::size_t ref_camera, std::size_t other_camera,
                                  int num_frames, const CoarseSearchConfig& cfg);

/// CSV `delta_t,total_inliers,frame_0,...,frame_{m-1}`.
void write_score_table_csv(std::ostream& out, const ScoreTable& table);

}  // namespace chronosplat
