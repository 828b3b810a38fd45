#include "chronosplat/coarse_align.hpp"

#include "chronosplat/core_scene.hpp"
#include "chronosplat/parallel.hpp"
#include "chronosplat/rng.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace chronosplat {

void CoarseSearchConfig::validate(int num_frames) const {
  if (radius < 0) throw InvariantError("coarse search radius must be >= 0");
  if (reference_frames.empty()) throw InvariantError("coarse search needs at least one reference frame");
  for (int t : reference_frames)
    if (t < radius || t > num_frames - 1 - radius)
      throw InvariantError("reference frame " + std::to_string(t) + " is closer than k=" + std::to_string(radius) +
                           " frames to a video end (" + std::to_string(num_frames) + " frames)");
}

std::vector<int> default_reference_frames(int num_frames, int radius, int count) {
  const int lo = radius;
  const int hi = num_frames - 1 - radius;
  if (hi < lo || count < 1) throw InvariantError("video too short for search radius " + std::to_string(radius));
  std::vector<int> frames;
  if (count == 1 || hi == lo) {
    frames.push_back((lo + hi) / 2);
    return frames;
  }
  for (int i = 0; i < count; ++i) {
    const int t = lo + static_cast<int>(std::lround(static_cast<double>(i) * (hi - lo) / (count - 1)));
    if (frames.empty() || frames.back() != t) frames.push_back(t);
  }
  return frames;
}

std::vector<Correspondence> filter_foreground(std::span<const Correspondence> corrs) {
  std::vector<Correspondence> out;
  for (const auto& c : corrs)
    if (c.fg_ref && c.fg_other) out.push_back(c);
  return out;
}

long alignment_score(const Matcher& matcher, std::size_t ref_camera, std::size_t other_camera, int dt,
                     const CoarseSearchConfig& cfg, std::vector<long>* per_frame) {
  long total = 0;
  if (per_frame) per_frame->assign(cfg.reference_frames.size(), 0);
  for (std::size_t i = 0; i < cfg.reference_frames.size(); ++i) {
    const int t = cfg.reference_frames[i];
    const auto fg = filter_foreground(matcher.match({ref_camera, t}, {other_camera, t - dt}));
    long count = 0;
    if (fg.size() >= 8) {
      RansacParams rp = cfg.ransac;
      // Keyed on the frame value, not its slot, so reordering {t_i} is harmless.
      rp.seed = Rng::stream(cfg.seed, {0x636f61727365ULL, other_camera, static_cast<std::uint64_t>(t),
                                       static_cast<std::uint64_t>(static_cast<std::int64_t>(dt))})
                    .next();
      if (auto res = ransac_fundamental(fg, rp)) count = static_cast<long>(res->inliers.size());
    }
    if (per_frame) (*per_frame)[i] = count;
    total += count;
  }
  return total;
}

CoarseResult coarse_offset_search(const Matcher& matcher, std::size_t ref_camera, std::size_t other_camera,
                                  int num_frames, const CoarseSearchConfig& cfg) {
  cfg.validate(num_frames);
  const int k = cfg.radius;
  const std::size_t n = static_cast<std::size_t>(2 * k + 1);

  CoarseResult result;
  result.table.radius = k;
  result.table.reference_frames = cfg.reference_frames;
  result.table.total.assign(n, 0);
  result.table.per_frame.assign(n, {});
  parallel_for(n, [&](std::size_t slot) {
    const int dt = static_cast<int>(slot) - k;
    result.table.total[slot] = alignment_score(matcher, ref_camera, other_camera, dt, cfg, &result.table.per_frame[slot]);
  });

  long best_score = 0;
  int best = 0;
  bool found = false;
  for (std::size_t slot = 0; slot < n; ++slot) {
    const int dt = static_cast<int>(slot) - k;
    const long s = result.table.total[slot];
    if (s <= 0) continue;
    const bool better = !found || s > best_score ||
                        (s == best_score && (std::abs(dt) < std::abs(best) || (std::abs(dt) == std::abs(best) && dt < best)));
    if (better) {
      best_score = s;
      best = dt;
      found = true;
    }
  }
  result.offset = found ? best : 0;
  result.has_signal = found;
  return result;
}

void write_score_table_csv(std::ostream& out, const ScoreTable& table) {
  out << "delta_t,total_inliers";
  for (std::size_t i = 0; i < table.reference_frames.size(); ++i) out << ",frame_" << i;
  out << '\n';
  for (std::size_t slot = 0; slot < table.total.size(); ++slot) {
    out << static_cast<int>(slot) - table.radius << ',' << table.total[slot];
    for (long c : table.per_frame[slot]) out << ',' << c;
    out << '\n';
  }
}

}  // namespace chronosplat
