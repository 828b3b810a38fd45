#include "chronosplat/fine_align.hpp"

#include "chronosplat/parallel.hpp"
#include "chronosplat/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace chronosplat {

namespace {

constexpr std::uint64_t kTagBatch = 0x6261746368ULL;

struct Evaluation {
  double loss = 0.0;
  std::vector<double> grad_tau;
  SceneGradient scene_grad;
};

void check_videos(const Scene& scene, const VideoSet& videos, const TimeModel& tm) {
  if (videos.frames.size() != videos.cameras.size())
    throw std::invalid_argument("VideoSet: one frame sequence per camera required");
  if (tm.num_cameras() != videos.num_cameras())
    throw std::invalid_argument("time model and video set disagree on camera count");
  (void)scene;
}

const Image& target_of(const VideoSet& videos, const FrameSample& s) {
  return videos.frames.at(s.camera).at(static_cast<std::size_t>(s.frame));
}

// Loss and analytic gradients over a batch. Per-sample partials are reduced
// in sample order.
Evaluation evaluate_analytic(const Scene& scene, const VideoSet& videos, const TimeModel& tm,
                             std::span<const FrameSample> samples, const RenderOptions& opts, bool want_scene_grad) {
  check_videos(scene, videos, tm);
  const double weight = samples.empty() ? 0.0 : 1.0 / static_cast<double>(samples.size());
  std::vector<double> losses(samples.size(), 0.0);
  std::vector<double> dt(samples.size(), 0.0);
  std::vector<SceneGradient> grads(want_scene_grad ? samples.size() : 0);

  parallel_for(samples.size(), [&](std::size_t i) {
    const FrameSample& s = samples[i];
    const double t = tm.effective_time(s.camera, s.frame);
    SceneGradient g(scene.size());
    losses[i] = photometric_loss_backward(scene, videos.cameras.at(s.camera), t, target_of(videos, s), weight, g, opts);
    double d = 0.0;
    for (std::size_t k = 0; k < scene.size(); ++k) {
      if (scene.motions[k].is_static) continue;
      d += g.center[k].dot(scene.motions[k].velocity(t, scene.frame_rate));
    }
    dt[i] = d;
    if (want_scene_grad) grads[i] = std::move(g);
  });

  Evaluation ev;
  ev.grad_tau.assign(tm.num_cameras(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ev.loss += losses[i];
    ev.grad_tau[samples[i].camera] += dt[i];
  }
  ev.grad_tau[tm.reference_camera()] = 0.0;
  if (want_scene_grad) {
    ev.scene_grad = SceneGradient(scene.size());
    for (const SceneGradient& g : grads)
      for (std::size_t k = 0; k < scene.size(); ++k) {
        ev.scene_grad.center[k] += g.center[k];
        ev.scene_grad.opacity[k] += g.opacity[k];
      }
  }
  return ev;
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void FineOptConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvariantError("FineOptConfig: learning_rate must be positive");
  if (!(fd_step > 0.0)) throw InvariantError("FineOptConfig: fd_step must be positive");
  if (iterations < 0) throw InvariantError("FineOptConfig: iterations must be >= 0");
  if (frames_per_iteration < 1) throw InvariantError("FineOptConfig: frames_per_iteration must be >= 1");
  if (joint_mode && !(center_learning_rate >= 0.0 && opacity_learning_rate >= 0.0))
    throw InvariantError("FineOptConfig: joint learning rates must be >= 0");
}

std::vector<FrameSample> sample_batch(std::size_t num_cameras, int num_frames, int frames_per_iteration,
                                      std::uint64_t seed, std::uint64_t iteration, std::optional<std::size_t> excluded) {
  Rng rng = Rng::stream(seed, {kTagBatch, iteration});
  const auto frames = rng.sample_distinct(static_cast<std::size_t>(std::max(num_frames, 0)),
                                          static_cast<std::size_t>(std::max(frames_per_iteration, 0)));
  std::vector<FrameSample> out;
  for (std::size_t cam = 0; cam < num_cameras; ++cam) {
    if (excluded && *excluded == cam) continue;
    for (std::size_t f : frames) out.push_back({cam, static_cast<int>(f)});
  }
  return out;
}

double reconstruction_loss(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                           std::span<const FrameSample> samples, const RenderOptions& opts) {
  check_videos(scene, videos, time_model);
  if (samples.empty()) return 0.0;
  std::vector<double> losses(samples.size(), 0.0);
  parallel_for(samples.size(), [&](std::size_t i) {
    const FrameSample& s = samples[i];
    const Image img = render(scene, videos.cameras.at(s.camera), s.frame, time_model, s.camera, opts);
    losses[i] = photometric_loss(img, target_of(videos, s));
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(samples.size());
}

double reconstruction_loss(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                           int frames_per_sample, std::uint64_t seed, const RenderOptions& opts) {
  const auto samples = sample_batch(videos.num_cameras(), videos.num_frames(), frames_per_sample, seed, 0);
  return reconstruction_loss(scene, videos, time_model, samples, opts);
}

std::vector<double> grad_tau_analytic(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                                      std::span<const FrameSample> samples, const RenderOptions& opts) {
  return evaluate_analytic(scene, videos, time_model, samples, opts, false).grad_tau;
}

std::vector<double> grad_tau_fd(const std::function<double(const TimeModel&)>& loss, const TimeModel& time_model,
                                double h, bool central) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_tau_fd: step must be positive");
  std::vector<double> grad(time_model.num_cameras(), 0.0);
  const double base = central ? 0.0 : loss(time_model);
  for (std::size_t j = 0; j < time_model.num_cameras(); ++j) {
    if (j == time_model.reference_camera()) continue;
    TimeModel plus = time_model;
    plus.set_fine(j, time_model.fine(j) + h);
    if (central) {
      TimeModel minus = time_model;
      minus.set_fine(j, time_model.fine(j) - h);
      grad[j] = (loss(plus) - loss(minus)) / (2.0 * h);
    } else {
      grad[j] = (loss(plus) - base) / h;
    }
  }
  return grad;
}

std::vector<double> grad_tau_fd(const Scene& scene, const VideoSet& videos, const TimeModel& time_model,
                                std::span<const FrameSample> samples, double h, bool central,
                                const RenderOptions& opts) {
  return grad_tau_fd(
      [&](const TimeModel& tm) { return reconstruction_loss(scene, videos, tm, samples, opts); }, time_model, h,
      central);
}

void write_loss_trace_csv(std::ostream& out, const LossTrace& trace) {
  const std::size_t n = trace.tau.empty() ? 0 : trace.tau.front().size();
  out << "iter,loss";
  for (std::size_t j = 0; j < n; ++j) out << ",tau_" << j;
  for (std::size_t j = 0; j < n; ++j) out << ",grad_" << j;
  out << '\n';
  std::ostringstream line;
  line.precision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    line.str("");
    line << i << ',' << trace.loss[i];
    for (double v : trace.tau[i]) line << ',' << v;
    for (double v : trace.grad[i]) line << ',' << v;
    line << '\n';
    out << line.str();
  }
}

FineResult optimize_offsets(const Scene& scene, const VideoSet& videos, const TimeModel& init,
                            const FineOptConfig& cfg, const RenderOptions& opts) {
  cfg.validate();
  check_videos(scene, videos, init);
  FineResult result{init, scene, {}};
  TimeModel& tm = result.time_model;
  Scene& current = result.scene;
  const std::size_t n_cams = tm.num_cameras();

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto samples = sample_batch(n_cams, videos.num_frames(), cfg.frames_per_iteration, cfg.seed,
                                      static_cast<std::uint64_t>(it), cfg.held_out_camera);
    Evaluation ev;
    if (cfg.gradient_mode == GradientMode::analytic) {
      ev = evaluate_analytic(current, videos, tm, samples, opts, cfg.joint_mode);
    } else {
      if (cfg.joint_mode) ev = evaluate_analytic(current, videos, tm, samples, opts, true);
      ev.loss = reconstruction_loss(current, videos, tm, samples, opts);
      ev.grad_tau = grad_tau_fd(current, videos, tm, samples, cfg.fd_step, cfg.central_difference, opts);
    }
    if (cfg.held_out_camera && *cfg.held_out_camera < n_cams) ev.grad_tau[*cfg.held_out_camera] = 0.0;

    std::vector<double> taus(n_cams);
    for (std::size_t j = 0; j < n_cams; ++j) taus[j] = tm.fine(j);
    if (!std::isfinite(ev.loss) || !all_finite(ev.grad_tau)) {
      std::ostringstream msg;
      msg << "optimize_offsets: non-finite " << (std::isfinite(ev.loss) ? "gradient" : "loss") << " at iteration "
          << it;
      throw FineAlignError(msg.str(), result.trace);
    }
    result.trace.loss.push_back(ev.loss);
    result.trace.tau.push_back(taus);
    result.trace.grad.push_back(ev.grad_tau);

    for (std::size_t j = 0; j < n_cams; ++j) tm.set_fine(j, tm.fine(j) - cfg.learning_rate * ev.grad_tau[j]);
    if (cfg.joint_mode) {
      for (std::size_t k = 0; k < current.size(); ++k) {
        if (!ev.scene_grad.center[k].allFinite() || !std::isfinite(ev.scene_grad.opacity[k]))
          throw FineAlignError("optimize_offsets: non-finite scene gradient at iteration " + std::to_string(it),
                               result.trace);
        Gaussian3D& g = current.gaussians[k];
        g.center -= cfg.center_learning_rate * ev.scene_grad.center[k];
        g.opacity = std::clamp(g.opacity - cfg.opacity_learning_rate * ev.scene_grad.opacity[k], 0.0, 1.0);
      }
    }
  }
  return result;
}

}  // namespace chronosplat
