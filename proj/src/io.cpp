#include "chronosplat/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace chronosplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void write_p6(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& bytes) {
  auto out = open_out(path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

// Next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::vector<std::uint8_t> read_p6(const fs::path& path, int& w, int& h) {
  auto in = open_in(path);
  if (ppm_token(in) != "P6") throw DataError(path.string() + ": not a binary PPM");
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    if (std::stoi(ppm_token(in)) != 255) throw DataError(path.string() + ": only maxval 255 is supported");
  } catch (const std::logic_error&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0) throw DataError(path.string() + ": bad PPM size");
  std::vector<std::uint8_t> bytes(3 * static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated PPM");
  return bytes;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Matrix3d& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Matrix3d mat3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3x3 matrix");
  Matrix3d m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3(j[r]).transpose();
  return m;
}

}  // namespace

void write_ppm(const fs::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.rgb.size());
  std::transform(img.rgb.begin(), img.rgb.end(), bytes.begin(), to_byte);
  write_p6(path, img.width, img.height, bytes);
}

Image read_ppm(const fs::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_p6(path, w, h);
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
  return img;
}

void write_mask_ppm(const fs::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(3 * mask.bits.size());
  for (std::size_t i = 0; i < mask.bits.size(); ++i) bytes[3 * i] = bytes[3 * i + 1] = bytes[3 * i + 2] = mask.bits[i] ? 255 : 0;
  write_p6(path, mask.width, mask.height, bytes);
}

Mask read_mask_ppm(const fs::path& path) {
  int w = 0, h = 0;
  const auto bytes = read_p6(path, w, h);
  Mask m{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = bytes[3 * i] >= 128 ? 1 : 0;
  return m;
}

void write_depth_raw(const fs::path& path, const Image& img) {
  auto out = open_out(path);
  out.write("CSDEPTH1", 8);
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.height));
  for (double d : img.depth) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<float> read_depth_raw(const fs::path& path, int& width, int& height) {
  auto in = open_in(path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "CSDEPTH1", 8) != 0) throw DataError(path.string() + ": bad depth magic");
  width = static_cast<int>(get_u32(in));
  height = static_cast<int>(get_u32(in));
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  for (float& v : out) v = std::bit_cast<float>(get_u32(in));
  if (!in) throw DataError(path.string() + ": truncated depth map");
  return out;
}

json scene_to_json(const Scene& scene, std::span<const Camera> cameras, std::span<const double> offsets) {
  json j;
  j["format"] = "chronosplat-scene";
  j["version"] = 1;
  j["frame_rate"] = scene.frame_rate;
  json gs = json::array();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    const Deformation& d = scene.motions[i];
    gs.push_back({{"center", vec_json(g.center)},
                  {"rotation", {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()}},
                  {"scale", vec_json(g.scale)},
                  {"opacity", g.opacity},
                  {"color", vec_json(g.color)},
                  {"motion",
                   {{"static", d.is_static},
                    {"amplitude", vec_json(d.amplitude)},
                    {"angular_frequency", d.angular_frequency},
                    {"phase", d.phase}}}});
  }
  j["gaussians"] = std::move(gs);
  json cams = json::array();
  for (const Camera& c : cameras)
    cams.push_back({{"intrinsics", mat_json(c.intrinsics)},
                    {"rotation", mat_json(c.rotation)},
                    {"translation", vec_json(c.translation)},
                    {"width", c.width},
                    {"height", c.height},
                    {"frame_rate", c.frame_rate}});
  j["cameras"] = std::move(cams);
  j["ground_truth_offsets"] = std::vector<double>(offsets.begin(), offsets.end());
  return j;
}

SceneFile scene_from_json(const json& j) {
  try {
    if (j.value("format", "") != "chronosplat-scene") throw DataError("scene file: unknown format");
    SceneFile sf;
    sf.scene.frame_rate = j.at("frame_rate").get<double>();
    for (const json& g : j.at("gaussians")) {
      Gaussian3D out;
      out.center = vec3(g.at("center"));
      const auto& q = g.at("rotation");
      if (!q.is_array() || q.size() != 4) throw DataError("scene file: rotation must be [w,x,y,z]");
      out.rotation = Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      out.scale = vec3(g.at("scale"));
      out.opacity = g.at("opacity").get<double>();
      out.color = vec3(g.at("color"));
      const json& m = g.at("motion");
      Deformation d;
      d.is_static = m.at("static").get<bool>();
      d.amplitude = vec3(m.at("amplitude"));
      d.angular_frequency = m.at("angular_frequency").get<double>();
      d.phase = m.at("phase").get<double>();
      sf.scene.gaussians.push_back(out);
      sf.scene.motions.push_back(d);
    }
    for (const json& c : j.at("cameras")) {
      Camera cam;
      cam.intrinsics = mat3(c.at("intrinsics"));
      cam.rotation = mat3(c.at("rotation"));
      cam.translation = vec3(c.at("translation"));
      cam.width = c.at("width").get<int>();
      cam.height = c.at("height").get<int>();
      cam.frame_rate = c.at("frame_rate").get<double>();
      validate(cam);
      sf.cameras.push_back(cam);
    }
    if (j.contains("ground_truth_offsets")) sf.ground_truth_offsets = j["ground_truth_offsets"].get<std::vector<double>>();
    validate(sf.scene);
    return sf;
  } catch (const json::exception& e) {
    throw DataError(std::string("scene file: ") + e.what());
  } catch (const InvariantError& e) {
    throw DataError(std::string("scene file: ") + e.what());
  }
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace chronosplat
