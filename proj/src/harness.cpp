#include "chronosplat/harness.hpp"

#include "chronosplat/io.hpp"
#include "chronosplat/metrics.hpp"
#include "chronosplat/parallel.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace chronosplat {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AlignMode m) {
  switch (m) {
    case AlignMode::none: return "none";
    case AlignMode::coarse: return "coarse";
    case AlignMode::fine: return "fine";
    case AlignMode::full: return "full";
  }
  return "none";
}

AlignMode parse_align_mode(const std::string& s) {
  if (s == "none") return AlignMode::none;
  if (s == "coarse") return AlignMode::coarse;
  if (s == "fine") return AlignMode::fine;
  if (s == "full") return AlignMode::full;
  throw InvariantError("unknown mode '" + s + "' (expected none, coarse, fine or full)");
}

RunConfig::RunConfig() { apply_seed(0); }

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  fine.seed = s;
  synth.search_radius = coarse.radius;
}

CoarseSearchConfig coarse_search_config(const RunConfig& cfg) {
  CoarseSearchConfig c;
  c.radius = cfg.coarse.radius;
  c.reference_frames = cfg.coarse.reference_frames.empty()
                           ? default_reference_frames(cfg.synth.n_frames, cfg.coarse.radius,
                                                      cfg.coarse.reference_frame_count)
                           : cfg.coarse.reference_frames;
  c.ransac.iterations = cfg.coarse.ransac_iterations;
  c.ransac.threshold = cfg.coarse.ransac_threshold;
  c.seed = cfg.seed;
  return c;
}

void RunConfig::validate() const {
  synth.validate();
  fine.validate();
  if (synth.search_radius != coarse.radius) throw InvariantError("config: synth search radius must match coarse.radius");
  if (coarse.reference_frame_count < 1) throw InvariantError("config: coarse.reference_frame_count must be >= 1");
  if (coarse.ransac_iterations < 1) throw InvariantError("config: coarse.ransac_iterations must be >= 1");
  if (!(coarse.ransac_threshold > 0.0)) throw InvariantError("config: coarse.ransac_threshold must be positive");
  coarse_search_config(*this).validate(synth.n_frames);
  if (eval.frame_stride < 1) throw InvariantError("config: eval.frame_stride must be >= 1");
  if (fine.held_out_camera) {
    if (*fine.held_out_camera >= static_cast<std::size_t>(synth.n_cameras))
      throw InvariantError("config: held-out camera out of range");
    if (*fine.held_out_camera == synth.reference_camera)
      throw InvariantError("config: the reference camera cannot be held out");
  }
  if (ablate.offset_max_grid.empty() || ablate.methods.empty() || ablate.seeds.empty())
    throw InvariantError("config: ablation grid must be non-empty");
  for (int om : ablate.offset_max_grid)
    if (om < 0) throw InvariantError("config: ablation offset_max must be >= 0");
}

RunConfig default_config() { return RunConfig{}; }

json config_to_json(const RunConfig& cfg) {
  const SynthConfig& s = cfg.synth;
  const FineOptConfig& f = cfg.fine;
  json methods = json::array();
  for (AlignMode m : cfg.ablate.methods) methods.push_back(to_string(m));
  return {
      {"seed", cfg.seed},
      {"synth",
       {{"n_static", s.n_static},
        {"n_dynamic", s.n_dynamic},
        {"n_cameras", s.n_cameras},
        {"n_frames", s.n_frames},
        {"frame_rate", s.frame_rate},
        {"offset_max", s.offset_max},
        {"sub_frame_offsets", s.sub_frame_offsets},
        {"noise_sigma", s.noise_sigma},
        {"outlier_fraction", s.outlier_fraction},
        {"matches_per_pair", s.matches_per_pair},
        {"width", s.width},
        {"height", s.height},
        {"motion_scale", s.motion_scale},
        {"reference_camera", s.reference_camera}}},
      {"coarse",
       {{"radius", cfg.coarse.radius},
        {"reference_frame_count", cfg.coarse.reference_frame_count},
        {"reference_frames", cfg.coarse.reference_frames},
        {"ransac_iterations", cfg.coarse.ransac_iterations},
        {"ransac_threshold", cfg.coarse.ransac_threshold}}},
      {"fine",
       {{"learning_rate", f.learning_rate},
        {"iterations", f.iterations},
        {"fd_step", f.fd_step},
        {"gradient_mode", f.gradient_mode == GradientMode::analytic ? "analytic" : "finite_difference"},
        {"central_difference", f.central_difference},
        {"joint_mode", f.joint_mode},
        {"center_learning_rate", f.center_learning_rate},
        {"opacity_learning_rate", f.opacity_learning_rate},
        {"frames_per_iteration", f.frames_per_iteration},
        {"held_out_camera", f.held_out_camera ? json(*f.held_out_camera) : json(nullptr)}}},
      {"eval", {{"frame_stride", cfg.eval.frame_stride}}},
      {"ablate",
       {{"offset_max_grid", cfg.ablate.offset_max_grid}, {"methods", methods}, {"seeds", cfg.ablate.seeds}}},
      {"output", {{"write_depth", cfg.write_depth}, {"write_correspondences", cfg.write_correspondences}}},
  };
}

namespace {

// Reads the keys present in one config section and rejects unknown ones.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw InvariantError("config: '" + name + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvariantError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return obj_ && obj_->contains(key) ? &obj_->at(key) : nullptr;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& item : obj_->items())
      if (!seen_.count(item.key())) throw InvariantError("config: unknown key " + name_ + "." + item.key());
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvariantError("config: top level must be an object");
  static const std::set<std::string> top{"seed", "synth", "coarse", "fine", "eval", "ablate", "output"};
  for (const auto& item : j.items())
    if (!top.count(item.key())) throw InvariantError("config: unknown key " + item.key());

  RunConfig cfg;
  std::uint64_t seed = 0;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InvariantError("config: seed must be a non-negative integer");
    seed = j["seed"].get<std::uint64_t>();
  }

  Section s(j, "synth");
  s.get("n_static", cfg.synth.n_static);
  s.get("n_dynamic", cfg.synth.n_dynamic);
  s.get("n_cameras", cfg.synth.n_cameras);
  s.get("n_frames", cfg.synth.n_frames);
  s.get("frame_rate", cfg.synth.frame_rate);
  s.get("offset_max", cfg.synth.offset_max);
  s.get("sub_frame_offsets", cfg.synth.sub_frame_offsets);
  s.get("noise_sigma", cfg.synth.noise_sigma);
  s.get("outlier_fraction", cfg.synth.outlier_fraction);
  s.get("matches_per_pair", cfg.synth.matches_per_pair);
  s.get("width", cfg.synth.width);
  s.get("height", cfg.synth.height);
  s.get("motion_scale", cfg.synth.motion_scale);
  s.get("reference_camera", cfg.synth.reference_camera);
  s.finish();

  Section c(j, "coarse");
  c.get("radius", cfg.coarse.radius);
  c.get("reference_frame_count", cfg.coarse.reference_frame_count);
  c.get("reference_frames", cfg.coarse.reference_frames);
  c.get("ransac_iterations", cfg.coarse.ransac_iterations);
  c.get("ransac_threshold", cfg.coarse.ransac_threshold);
  c.finish();

  Section f(j, "fine");
  f.get("learning_rate", cfg.fine.learning_rate);
  f.get("iterations", cfg.fine.iterations);
  f.get("fd_step", cfg.fine.fd_step);
  if (const json* gm = f.raw("gradient_mode")) {
    const std::string v = gm->is_string() ? gm->get<std::string>() : "";
    if (v == "analytic") cfg.fine.gradient_mode = GradientMode::analytic;
    else if (v == "finite_difference") cfg.fine.gradient_mode = GradientMode::finite_difference;
    else throw InvariantError("config: fine.gradient_mode must be 'analytic' or 'finite_difference'");
  }
  f.get("central_difference", cfg.fine.central_difference);
  f.get("joint_mode", cfg.fine.joint_mode);
  f.get("center_learning_rate", cfg.fine.center_learning_rate);
  f.get("opacity_learning_rate", cfg.fine.opacity_learning_rate);
  f.get("frames_per_iteration", cfg.fine.frames_per_iteration);
  if (const json* h = f.raw("held_out_camera")) {
    if (h->is_null()) cfg.fine.held_out_camera.reset();
    else if (h->is_number_unsigned()) cfg.fine.held_out_camera = h->get<std::size_t>();
    else throw InvariantError("config: fine.held_out_camera must be null or a camera index");
  }
  f.finish();

  Section e(j, "eval");
  e.get("frame_stride", cfg.eval.frame_stride);
  e.finish();

  Section a(j, "ablate");
  a.get("offset_max_grid", cfg.ablate.offset_max_grid);
  a.get("seeds", cfg.ablate.seeds);
  if (const json* m = a.raw("methods")) {
    if (!m->is_array()) throw InvariantError("config: ablate.methods must be an array");
    cfg.ablate.methods.clear();
    for (const json& v : *m) {
      if (!v.is_string()) throw InvariantError("config: ablate.methods entries must be strings");
      cfg.ablate.methods.push_back(parse_align_mode(v.get<std::string>()));
    }
  }
  a.finish();

  Section o(j, "output");
  o.get("write_depth", cfg.write_depth);
  o.get("write_correspondences", cfg.write_correspondences);
  o.finish();

  cfg.apply_seed(seed);
  return cfg;
}

std::vector<std::optional<CoarseResult>> run_coarse_stage(const Matcher& matcher, std::size_t num_cameras,
                                                          int num_frames, const RunConfig& cfg) {
  const CoarseSearchConfig cs = coarse_search_config(cfg);
  const std::size_t ref = cfg.synth.reference_camera;
  std::vector<std::optional<CoarseResult>> out(num_cameras);
  for (std::size_t j = 0; j < num_cameras; ++j)
    if (j != ref) out[j] = coarse_offset_search(matcher, ref, j, num_frames, cs);
  return out;
}

AlignmentOutcome run_alignment(const Scene& scene, const VideoSet& videos, const Matcher& matcher, AlignMode mode,
                               const RunConfig& cfg,
                               const std::vector<std::optional<CoarseResult>>* precomputed_coarse) {
  AlignmentOutcome out;
  out.mode = mode;
  out.time_model = TimeModel(videos.num_cameras(), cfg.synth.reference_camera);
  if (mode == AlignMode::coarse || mode == AlignMode::full) {
    out.coarse = precomputed_coarse ? *precomputed_coarse
                                    : run_coarse_stage(matcher, videos.num_cameras(), videos.num_frames(), cfg);
    for (std::size_t j = 0; j < out.coarse.size(); ++j) {
      if (!out.coarse[j]) continue;
      out.time_model.set_coarse(j, out.coarse[j]->offset);
      if (!out.coarse[j]->has_signal) out.any_no_signal = true;
    }
  }
  if (mode == AlignMode::fine || mode == AlignMode::full) {
    FineResult r = optimize_offsets(scene, videos, out.time_model, cfg.fine);
    out.time_model = r.time_model;
    out.trace = std::move(r.trace);
  }
  return out;
}

std::vector<FrameSample> evaluation_pairs(std::size_t num_cameras, int num_frames, const RunConfig& cfg) {
  std::vector<std::size_t> cams;
  if (cfg.fine.held_out_camera) cams.push_back(*cfg.fine.held_out_camera);
  else
    for (std::size_t j = 0; j < num_cameras; ++j) cams.push_back(j);
  std::vector<FrameSample> out;
  for (std::size_t j : cams)
    for (int i = 0; i < num_frames; i += cfg.eval.frame_stride) out.push_back({j, i});
  return out;
}

EvalSummary evaluate_time_model(const Scene& scene, const VideoSet& videos, const TimeModel& tm,
                                std::span<const FrameSample> pairs) {
  EvalSummary out;
  out.pairs.resize(pairs.size());
  std::vector<double> losses(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    const FrameSample& p = pairs[k];
    const Image& target = videos.frames.at(p.camera).at(static_cast<std::size_t>(p.frame));
    const Image img = render(scene, videos.cameras[p.camera], p.frame, tm, p.camera);
    out.pairs[k] = {p.camera, p.frame, psnr(img, target), ssim(img, target)};
    losses[k] = photometric_loss(img, target);
  });
  if (pairs.empty()) return out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.mean_psnr += out.pairs[k].psnr;
    out.mean_ssim += out.pairs[k].ssim;
    out.mean_loss += losses[k];
  }
  const double n = static_cast<double>(pairs.size());
  out.mean_psnr /= n;
  out.mean_ssim /= n;
  out.mean_loss /= n;
  return out;
}

double mean_offset_error(const TimeModel& tm, std::span<const double> ground_truth) {
  const std::size_t ref = tm.reference_camera();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < tm.num_cameras(); ++j) {
    if (j == ref) continue;
    sum += std::abs(tm.total(j) - (ground_truth[j] - ground_truth[ref]));
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

json eval_json(const EvalSummary& e) {
  json pairs = json::array();
  for (const PairMetrics& p : e.pairs)
    pairs.push_back({{"camera", p.camera}, {"frame", p.frame}, {"psnr", p.psnr}, {"ssim", p.ssim}});
  return {{"mean_psnr", e.mean_psnr}, {"mean_ssim", e.mean_ssim}, {"mean_loss", e.mean_loss}, {"pairs", pairs}};
}

json score_table_json(std::size_t camera, const ScoreTable& t) {
  json rows = json::array();
  for (int dt = -t.radius; dt <= t.radius; ++dt) {
    const auto k = static_cast<std::size_t>(dt + t.radius);
    rows.push_back({{"delta_t", dt}, {"total_inliers", t.total[k]}, {"per_frame", t.per_frame[k]}});
  }
  return {{"camera", camera}, {"radius", t.radius}, {"reference_frames", t.reference_frames}, {"rows", rows}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

}  // namespace

json make_report(const AlignmentOutcome& outcome, std::span<const double> ground_truth, const RunConfig& cfg,
                 const std::optional<EvalSummary>& misaligned, const std::optional<EvalSummary>& aligned) {
  const TimeModel& tm = outcome.time_model;
  const std::size_t ref = tm.reference_camera();
  if (ground_truth.size() != tm.num_cameras()) throw DataError("ground truth has the wrong number of cameras");

  json cams = json::array();
  for (std::size_t j = 0; j < tm.num_cameras(); ++j) {
    const double gt = ground_truth[j] - ground_truth[ref];
    const double recovered = tm.coarse(j) + tm.fine(j);
    json c = {{"index", j},
              {"ground_truth_offset", gt},
              {"coarse_offset", tm.coarse(j)},
              {"fine_offset", tm.fine(j)},
              {"recovered_offset", recovered},
              {"absolute_error", std::abs(recovered - gt)}};
    if (j < outcome.coarse.size() && outcome.coarse[j]) c["coarse_signal"] = outcome.coarse[j]->has_signal;
    cams.push_back(std::move(c));
  }

  json tables = json::array();
  for (std::size_t j = 0; j < outcome.coarse.size(); ++j)
    if (outcome.coarse[j]) tables.push_back(score_table_json(j, outcome.coarse[j]->table));

  json report = {{"tool", "chronosplat"},
                 {"version", kToolVersion},
                 {"seed", cfg.seed},
                 {"mode", to_string(outcome.mode)},
                 {"reference_camera", ref},
                 {"cameras", cams},
                 {"mean_absolute_error", mean_offset_error(tm, ground_truth)},
                 {"score_tables", tables},
                 {"config", config_to_json(cfg)}};

  if (outcome.trace && outcome.trace->size() > 0) {
    const LossTrace& t = *outcome.trace;
    report["loss_trace"] = {{"iterations", t.size()},
                            {"initial_loss", t.loss.front()},
                            {"final_loss", t.loss.back()},
                            {"min_loss", *std::min_element(t.loss.begin(), t.loss.end())}};
  } else {
    report["loss_trace"] = nullptr;
  }
  json metrics = json::object();
  if (misaligned) metrics["misaligned"] = eval_json(*misaligned);
  if (aligned) metrics["aligned"] = eval_json(*aligned);
  report["image_metrics"] = metrics;
  report["run_info"] = {{"timestamp_utc", utc_timestamp()}, {"elapsed_seconds", 0.0}};
  return report;
}

void validate_report(const json& report) {
  try {
    for (const json& c : report.at("cameras")) {
      const double recovered = c.at("coarse_offset").get<int>() + c.at("fine_offset").get<double>();
      const double err = std::abs(recovered - c.at("ground_truth_offset").get<double>());
      if (std::abs(err - c.at("absolute_error").get<double>()) > 1e-12)
        throw DataError("report: absolute error of camera " + c.at("index").dump() + " does not match its offsets");
      if (std::abs(recovered - c.at("recovered_offset").get<double>()) > 1e-12)
        throw DataError("report: recovered offset of camera " + c.at("index").dump() + " is inconsistent");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

TimeModel time_model_from_report(const json& report) {
  try {
    const json& cams = report.at("cameras");
    TimeModel tm(cams.size(), report.at("reference_camera").get<std::size_t>());
    for (std::size_t j = 0; j < cams.size(); ++j) {
      tm.set_coarse(j, cams[j].at("coarse_offset").get<int>());
      tm.set_fine(j, cams[j].at("fine_offset").get<double>());
    }
    return tm;
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

namespace {

fs::path cam_dir(const fs::path& dir, std::size_t j) { return dir / ("cam_" + std::to_string(j)); }
fs::path frame_path(const fs::path& dir, std::size_t j, int i) {
  return cam_dir(dir, j) / ("frame_" + std::to_string(i) + ".ppm");
}
fs::path mask_path(const fs::path& dir, std::size_t j, int i) {
  return cam_dir(dir, j) / ("mask_" + std::to_string(i) + ".ppm");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

std::string CsvMatcher::file_name(const FrameRef& ref, const FrameRef& other) {
  return "cam" + std::to_string(ref.camera) + "_f" + std::to_string(ref.frame) + "__cam" +
         std::to_string(other.camera) + "_f" + std::to_string(other.frame) + ".csv";
}

std::vector<Correspondence> CsvMatcher::match(const FrameRef& ref, const FrameRef& other) const {
  const fs::path p = dir_ / file_name(ref, other);
  std::ifstream in(p);
  if (!in) return {};
  try {
    return read_correspondences_csv(in);
  } catch (const std::runtime_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_dataset(const Dataset& ds, const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const int nf = ds.config.n_frames;
  for (std::size_t j = 0; j < ds.rig.size(); ++j) {
    fs::create_directories(cam_dir(dir, j));
    for (int i = 0; i < nf; ++i) {
      const auto k = static_cast<std::size_t>(i);
      write_ppm(frame_path(dir, j, i), ds.videos[j].frames[k]);
      write_mask_ppm(mask_path(dir, j, i), ds.videos[j].masks[k]);
      if (cfg.write_depth)
        write_depth_raw(cam_dir(dir, j) / ("depth_" + std::to_string(i) + ".raw"), ds.videos[j].frames[k]);
    }
  }
  write_json(dir / "scene.json", scene_to_json(ds.scene, ds.rig, ds.offsets));
  write_json(dir / "ground_truth.json", {{"reference_camera", ds.config.reference_camera},
                                         {"offsets", ds.offsets},
                                         {"frame_rate", ds.config.frame_rate},
                                         {"n_frames", nf},
                                         {"seed", ds.config.seed}});
  write_json(dir / "config.json", config_to_json(cfg));

  if (!cfg.write_correspondences) return;
  // Every frame pair the coarse search will ask for, with outlier labels
  // kept in a separate directory.
  const fs::path mdir = dir / "matches";
  fs::create_directories(mdir / "labels");
  const CoarseSearchConfig cs = coarse_search_config(cfg);
  const std::size_t ref = ds.config.reference_camera;
  for (std::size_t j = 0; j < ds.rig.size(); ++j) {
    if (j == ref) continue;
    for (int ti : cs.reference_frames)
      for (int dt = -cs.radius; dt <= cs.radius; ++dt) {
        const FrameRef a{ref, ti}, b{j, ti - dt};
        const ViewPair pair{ref, ti + ds.offsets[ref], j, ti - dt + ds.offsets[j]};
        const auto lc = generate_correspondences(ds.scene, ds.rig, pair, ds.config,
                                                 &ds.videos[ref].masks[static_cast<std::size_t>(ti)],
                                                 &ds.videos[j].masks[static_cast<std::size_t>(ti - dt)]);
        std::ostringstream csv;
        write_correspondences_csv(csv, lc.matches);
        write_text(mdir / CsvMatcher::file_name(a, b), csv.str());
        std::string labels = "outlier\n";
        for (bool o : lc.outlier) labels += o ? "1\n" : "0\n";
        write_text(mdir / "labels" / CsvMatcher::file_name(a, b), labels);
      }
  }
}

LoadedDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  LoadedDataset out;
  SceneFile sf = scene_from_json(read_json(dir / "scene.json"));
  out.scene = std::move(sf.scene);
  out.videos.cameras = std::move(sf.cameras);
  const json gt = read_json(dir / "ground_truth.json");
  int nf = 0;
  try {
    out.ground_truth = gt.at("offsets").get<std::vector<double>>();
    nf = gt.at("n_frames").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("ground_truth.json: ") + e.what());
  }
  const std::size_t nc = out.videos.cameras.size();
  if (out.ground_truth.size() != nc) throw DataError("ground_truth.json: offset count does not match the cameras");
  if (nf < 1) throw DataError("ground_truth.json: n_frames must be positive");
  out.videos.frames.resize(nc);
  out.masks.resize(nc);
  for (std::size_t j = 0; j < nc; ++j)
    for (int i = 0; i < nf; ++i) {
      Image img = read_ppm(frame_path(dir, j, i));
      if (img.width != out.videos.cameras[j].width || img.height != out.videos.cameras[j].height)
        throw DataError(frame_path(dir, j, i).string() + ": size does not match its camera");
      out.videos.frames[j].push_back(std::move(img));
      out.masks[j].push_back(read_mask_ppm(mask_path(dir, j, i)));
    }
  return out;
}

namespace {

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const DataError& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const FineAlignError& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << '\n';
    return kExitData;
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const Dataset ds = generate_dataset(cfg.synth);
    write_dataset(ds, cfg, out_dir);
    log << "wrote " << ds.rig.size() << " cameras x " << cfg.synth.n_frames << " frames to " << out_dir.string()
        << '\n';
    return kExitOk;
  });
}

int cmd_align(const RunConfig& cfg_in, const fs::path& data_dir, AlignMode mode, const fs::path& report_path,
              std::ostream& log) {
  return guarded(log, [&] {
    const auto start = std::chrono::steady_clock::now();
    LoadedDataset data = load_dataset(data_dir);
    RunConfig cfg = cfg_in;
    // Sizes come from the data; algorithm settings from the config.
    cfg.synth.n_cameras = static_cast<int>(data.videos.num_cameras());
    cfg.synth.n_frames = data.videos.num_frames();
    cfg.validate();

    std::vector<Video> videos(data.videos.num_cameras());
    for (std::size_t j = 0; j < videos.size(); ++j) videos[j].masks = data.masks[j];

    const fs::path matches_dir = data_dir / "matches";
    std::unique_ptr<Matcher> matcher;
    if (fs::is_directory(matches_dir)) {
      matcher = std::make_unique<CsvMatcher>(matches_dir);
    } else {
      matcher = std::make_unique<SyntheticMatcher>(data.scene, data.videos.cameras, data.ground_truth, videos,
                                                   cfg.synth);
    }

    const AlignmentOutcome outcome = run_alignment(data.scene, data.videos, *matcher, mode, cfg);
    const auto pairs = evaluation_pairs(data.videos.num_cameras(), data.videos.num_frames(), cfg);
    const TimeModel identity(data.videos.num_cameras(), cfg.synth.reference_camera);
    const EvalSummary before = evaluate_time_model(data.scene, data.videos, identity, pairs);
    const EvalSummary after = evaluate_time_model(data.scene, data.videos, outcome.time_model, pairs);

    json report = make_report(outcome, data.ground_truth, cfg, before, after);
    report["run_info"]["elapsed_seconds"] = seconds_since(start);
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    write_json(report_path, report);
    if (outcome.trace) {
      fs::path trace_path = report_path;
      trace_path.replace_extension();
      trace_path += "_loss_trace.csv";
      std::ostringstream csv;
      write_loss_trace_csv(csv, *outcome.trace);
      write_text(trace_path, csv.str());
    }

    for (const json& c : report["cameras"])
      log << "camera " << c["index"] << ": recovered " << c["recovered_offset"] << " truth "
          << c["ground_truth_offset"] << " error " << c["absolute_error"] << '\n';
    log << "mean absolute error " << report["mean_absolute_error"] << '\n';
    if (outcome.any_no_signal) {
      log << "warning: at least one camera produced no coarse signal\n";
      return kExitNoSignal;
    }
    return kExitOk;
  });
}

int cmd_evaluate(const RunConfig& cfg_in, const fs::path& data_dir, const fs::path& report_path,
                 const fs::path& metrics_path, std::ostream& log) {
  return guarded(log, [&] {
    LoadedDataset data = load_dataset(data_dir);
    RunConfig cfg = cfg_in;
    cfg.synth.n_cameras = static_cast<int>(data.videos.num_cameras());
    cfg.synth.n_frames = data.videos.num_frames();
    cfg.validate();
    const json report = read_json(report_path);
    validate_report(report);
    const TimeModel recovered = time_model_from_report(report);
    if (recovered.num_cameras() != data.videos.num_cameras())
      throw DataError("report and dataset disagree on the number of cameras");

    const auto pairs = evaluation_pairs(data.videos.num_cameras(), data.videos.num_frames(), cfg);
    const TimeModel identity(data.videos.num_cameras(), recovered.reference_camera());
    const EvalSummary before = evaluate_time_model(data.scene, data.videos, identity, pairs);
    const EvalSummary after = evaluate_time_model(data.scene, data.videos, recovered, pairs);

    json pair_rows = json::array();
    for (std::size_t k = 0; k < pairs.size(); ++k)
      pair_rows.push_back({{"camera", pairs[k].camera},
                           {"frame", pairs[k].frame},
                           {"misaligned", {{"psnr", before.pairs[k].psnr}, {"ssim", before.pairs[k].ssim}}},
                           {"aligned", {{"psnr", after.pairs[k].psnr}, {"ssim", after.pairs[k].ssim}}}});
    const json metrics = {
        {"tool", "chronosplat"},
        {"version", kToolVersion},
        {"ssim_channel", "luma (Rec. 601)"},
        {"pairs", pair_rows},
        {"mean",
         {{"misaligned", {{"psnr", before.mean_psnr}, {"ssim", before.mean_ssim}}},
          {"aligned", {{"psnr", after.mean_psnr}, {"ssim", after.mean_ssim}}}}},
    };
    if (metrics_path.has_parent_path()) fs::create_directories(metrics_path.parent_path());
    write_json(metrics_path, metrics);
    log << "misaligned: PSNR " << before.mean_psnr << " SSIM " << before.mean_ssim << '\n';
    log << "aligned:    PSNR " << after.mean_psnr << " SSIM " << after.mean_ssim << '\n';
    return kExitOk;
  });
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, std::ostream* log) {
  const auto& methods = cfg.ablate.methods;
  std::vector<AblationRow> rows;
  for (int om : cfg.ablate.offset_max_grid) {
    std::vector<AblationRow> block(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) block[m] = {methods[m], om, 0, 0, 0, 0, 0};
    for (std::uint64_t seed : cfg.ablate.seeds) {
      RunConfig c = cfg;
      c.apply_seed(seed);
      c.synth.offset_max = om;
      c.validate();
      const Dataset ds = generate_dataset(c.synth);
      VideoSet vs;
      vs.cameras = ds.rig;
      for (const Video& v : ds.videos) vs.frames.push_back(v.frames);
      const SyntheticMatcher matcher(ds.scene, ds.rig, ds.offsets, ds.videos, c.synth);
      const auto pairs = evaluation_pairs(vs.num_cameras(), vs.num_frames(), c);

      std::optional<std::vector<std::optional<CoarseResult>>> coarse;
      for (std::size_t m = 0; m < methods.size(); ++m) {
        if ((methods[m] == AlignMode::coarse || methods[m] == AlignMode::full) && !coarse)
          coarse = run_coarse_stage(matcher, vs.num_cameras(), vs.num_frames(), c);
        const AlignmentOutcome out =
            run_alignment(ds.scene, vs, matcher, methods[m], c, coarse ? &*coarse : nullptr);
        const EvalSummary ev = evaluate_time_model(ds.scene, vs, out.time_model, pairs);
        const double err = mean_offset_error(out.time_model, ds.offsets);
        AblationRow& r = block[m];
        r.mean_offset_error += err;
        r.mean_psnr += ev.mean_psnr;
        r.mean_ssim += ev.mean_ssim;
        r.mean_loss += ev.mean_loss;
        ++r.runs;
        if (log)
          *log << "offset_max " << om << " seed " << seed << " " << to_string(methods[m]) << ": error " << err
               << " PSNR " << ev.mean_psnr << '\n';
      }
    }
    for (AblationRow& r : block) {
      const double n = static_cast<double>(r.runs);
      r.mean_offset_error /= n;
      r.mean_psnr /= n;
      r.mean_ssim /= n;
      r.mean_loss /= n;
      rows.push_back(r);
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "method,offset_max,mean_offset_error,mean_psnr,mean_ssim,mean_loss,runs\n";
  std::ostringstream line;
  line.precision(10);
  for (const AblationRow& r : rows) {
    line.str("");
    line << to_string(r.method) << ',' << r.offset_max << ',' << r.mean_offset_error << ',' << r.mean_psnr << ','
         << r.mean_ssim << ',' << r.mean_loss << ',' << r.runs << '\n';
    out << line.str();
  }
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto rows = run_ablation(cfg, &log);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    write_text(out_dir / "ablation_summary.csv", csv.str());
    log << "wrote " << (out_dir / "ablation_summary.csv").string() << '\n';
    return kExitOk;
  });
}

}  // namespace chronosplat
