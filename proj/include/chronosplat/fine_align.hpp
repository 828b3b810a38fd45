#pragma once

#include "chronosplat/core_scene.hpp"
#include "chronosplat/renderer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace chronosplat {

enum class GradientMode { analytic, finite_difference };

struct FineOptConfig {
  double learning_rate = 4.0;
  int iterations = 200;
  double fd_step = 1.0 / 30.0;  // frames
  GradientMode gradient_mode = GradientMode::analytic;
  bool central_difference = false;  // diagnostics only
  bool joint_mode = false;
  double center_learning_rate = 0.05;
  double opacity_learning_rate = 0.5;
  int frames_per_iteration = 4;
  std::uint64_t seed = 0;
  std::optional<std::size_t> held_out_camera;

  void validate() const;
};

/// Supervision: cameras and their recorded frames, frames[cam][i].
struct VideoSet {
  std::vector<Camera> cameras;
  std::vector<std::vector<Image>> frames;

  std::size_t num_cameras() const { return cameras.size(); }
  int num_frames() const { return frames.empty() ? 0 : static_cast<int>(frames.front().size()); }
};

struct FrameSample {
  std::size_t camera = 0;
  int frame = 0;
};

/// `frames_per_iteration` distinct frames drawn from the stream keyed by
/// (seed, iteration), paired with every camera except `excluded`.
std::vector<FrameSample> sample_batch(std::size_t num_cameras, int num_frames, int frames_per_iteration,
                                      std::uint64_t seed, std::uint64_t iteration,
                                      std::optional<std::size_t> excluded = std::nullopt);

/// Mean photometric loss over the samples; frame i of camera j is compared
/// with the render at effective_time(time_model, j, i).
double reconstruction_loss(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                           std::span<const FrameSample> samples, const RenderOptions& opts = {});

/// Same, over the batch sample_batch(..., seed, 0).
double reconstruction_loss(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                           int frames_per_sample, std::uint64_t seed, const RenderOptions& opts = {});

/// Exact dL/dtau per camera by back-propagating through compositing,
/// projection and the deformation's time derivative. The reference camera
/// gets 0.
std::vector<double> grad_tau_analytic(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                                      std::span<const FrameSample> samples, const RenderOptions& opts = {});

/// (L(tau_j + h) - L(tau_j)) / h per camera with the other offsets held;
/// central (L(tau_j + h) - L(tau_j - h)) / 2h when `central`. The reference
/// camera gets 0.
std::vector<double> grad_tau_fd(const std::function<double(const TimeModel&)>& loss, const TimeModel& time_model,
                                double h, bool central = false);

std::vector<double> grad_tau_fd(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                                std::span<const FrameSample> samples, double h, bool central = false,
                                const RenderOptions& opts = {});

struct LossTrace {
  std::vector<double> loss;
  std::vector<std::vector<double>> tau;
  std::vector<std::vector<double>> grad;

  std::size_t size() const { return loss.size(); }
};

/// CSV `iter,loss,tau_0,...,tau_{n-1},grad_0,...,grad_{n-1}`.
void write_loss_trace_csv(std::ostream& out, const LossTrace& trace);

struct FineResult {
  TimeModel time_model;
  Scene scene;  // updated in joint mode, otherwise a copy of the input
  LossTrace trace;
};

/// Raised when the loss or a gradient becomes non-finite.
class FineAlignError : public std::runtime_error {
 public:
  FineAlignError(const std::string& what, LossTrace trace) : std::runtime_error(what), trace_(std::move(trace)) {}
  const LossTrace& trace() const { return trace_; }

 private:
  LossTrace trace_;
};

/// Plain gradient descent on the fine offsets (and, in joint mode, on
/// Gaussian centers and opacities). Each iteration evaluates the loss and
/// gradients at the current state on its batch, records them, then steps.
FineResult optimize_offsets(const Scene& scene, const VideoSet& videos, const TimeModel& init,
                            const FineOptConfig& cfg, const RenderOptions& opts = {});

}  // namespace chronosplat
