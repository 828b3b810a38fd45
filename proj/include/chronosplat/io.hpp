#pragma once

#include "chronosplat/core_scene.hpp"
#include "chronosplat/renderer.hpp"
#include "chronosplat/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace chronosplat {

/// Raised for unreadable, missing or malformed data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6, maxval 255). Values are clamped to [0,1] and rounded.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
void write_mask_ppm(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_ppm(const std::filesystem::path& path);

// 16-byte header: "CSDEPTH1", width and height as little-endian uint32,
// then width*height little-endian float32 values, row-major.
void write_depth_raw(const std::filesystem::path& path, const Image& img);
std::vector<float> read_depth_raw(const std::filesystem::path& path, int& width, int& height);

nlohmann::json scene_to_json(const Scene& scene, std::span<const Camera> cameras, std::span<const double> offsets);

struct SceneFile {
  Scene scene;
  std::vector<Camera> cameras;
  std::vector<double> ground_truth_offsets;
};
SceneFile scene_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace chronosplat
