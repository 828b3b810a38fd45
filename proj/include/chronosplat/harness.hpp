#pragma once

#include "chronosplat/coarse_align.hpp"
#include "chronosplat/fine_align.hpp"
#include "chronosplat/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace chronosplat {

inline constexpr const char* kToolVersion = "1.0.0";

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNoSignal = 3;

enum class AlignMode { none, coarse, fine, full };

std::string to_string(AlignMode m);
AlignMode parse_align_mode(const std::string& s);

struct CoarseOptions {
  int radius = 12;
  int reference_frame_count = 5;
  std::vector<int> reference_frames;  // explicit list overrides the count
  int ransac_iterations = 1000;
  double ransac_threshold = 2.0;
};

struct EvalOptions {
  int frame_stride = 5;  // evaluate frames 0, stride, 2*stride, ...
};

struct AblateOptions {
  std::vector<int> offset_max_grid{3, 5, 10};
  std::vector<AlignMode> methods{AlignMode::none, AlignMode::coarse, AlignMode::fine, AlignMode::full};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
};

/// One JSON document configures every command.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  CoarseOptions coarse;
  FineOptConfig fine;
  EvalOptions eval;
  AblateOptions ablate;
  bool write_depth = false;
  bool write_correspondences = false;

  RunConfig();
  /// Pushes `seed` and the reference camera into the sub-configs.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

RunConfig default_config();
nlohmann::json config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);

CoarseSearchConfig coarse_search_config(const RunConfig& cfg);

/// Result of running one alignment mode on in-memory data. Never sees
/// ground truth.
struct AlignmentOutcome {
  AlignMode mode = AlignMode::none;
  TimeModel time_model;
  std::vector<std::optional<CoarseResult>> coarse;  // per camera; empty for the reference
  std::optional<LossTrace> trace;
  bool any_no_signal = false;
};

/// Coarse stage for every non-reference camera against the reference.
std::vector<std::optional<CoarseResult>> run_coarse_stage(const Matcher& matcher, std::size_t num_cameras,
                                                          int num_frames, const RunConfig& cfg);

/// Runs `mode`. When `precomputed_coarse` is given (coarse/full), it is used
/// instead of searching again.
AlignmentOutcome run_alignment(const Scene& scene, const VideoSet& videos, const Matcher& matcher, AlignMode mode,
                               const RunConfig& cfg,
                               const std::vector<std::optional<CoarseResult>>* precomputed_coarse = nullptr);

struct PairMetrics {
  std::size_t camera = 0;
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalSummary {
  std::vector<PairMetrics> pairs;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_loss = 0.0;  // photometric
};

/// Evaluation (camera, frame) pairs: the held-out camera if configured,
/// otherwise every camera, at frames 0, stride, 2*stride, ...
std::vector<FrameSample> evaluation_pairs(std::size_t num_cameras, int num_frames, const RunConfig& cfg);

EvalSummary evaluate_time_model(const Scene& scene, const VideoSet& videos, const TimeModel& tm,
                                std::span<const FrameSample> pairs);

/// Mean |recovered - truth| over non-reference cameras, with truth taken
/// relative to the reference camera.
double mean_offset_error(const TimeModel& tm, std::span<const double> ground_truth);

/// The AlignmentReport document. Everything except "run_info" is a pure
/// function of the inputs.
nlohmann::json make_report(const AlignmentOutcome& outcome, std::span<const double> ground_truth,
                           const RunConfig& cfg, const std::optional<EvalSummary>& misaligned,
                           const std::optional<EvalSummary>& aligned);

/// Recomputes each camera's absolute error and checks it against the stored
/// value (1e-12). Throws DataError on mismatch or missing fields.
void validate_report(const nlohmann::json& report);

/// TimeModel stored in a report.
TimeModel time_model_from_report(const nlohmann::json& report);

/// Dataset directory contents needed for alignment and evaluation.
struct LoadedDataset {
  Scene scene;
  VideoSet videos;
  std::vector<std::vector<Mask>> masks;
  std::vector<double> ground_truth;
};

void write_dataset(const Dataset& ds, const RunConfig& cfg, const std::filesystem::path& dir);
LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Matcher over CSV files `matches/cam<a>_f<ia>__cam<b>_f<ib>.csv`;
/// missing files yield no matches.
class CsvMatcher : public Matcher {
 public:
  explicit CsvMatcher(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<Correspondence> match(const FrameRef& ref, const FrameRef& other) const override;
  static std::string file_name(const FrameRef& ref, const FrameRef& other);

 private:
  std::filesystem::path dir_;
};

// Commands. Each returns a process exit code and writes diagnostics to `log`.
int cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_align(const RunConfig& cfg, const std::filesystem::path& data_dir, AlignMode mode,
              const std::filesystem::path& report_path, std::ostream& log);
int cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& report_path,
                 const std::filesystem::path& metrics_path, std::ostream& log);
int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// One row of the ablation summary.
struct AblationRow {
  AlignMode method = AlignMode::none;
  int offset_max = 0;
  double mean_offset_error = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_loss = 0.0;
  std::size_t runs = 0;
};

/// Runs the method x offset_max grid over the seed list in memory.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, std::ostream* log = nullptr);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace chronosplat
