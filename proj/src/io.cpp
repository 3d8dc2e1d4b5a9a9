#include "epiflow/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "epiflow/error.hpp"

namespace epiflow {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::ConfigError, key + ": expected " + want + ", got '" + value + "'");
}

static_assert(std::endian::native == std::endian::little, "flo codec assumes little-endian");

void put_bytes(std::vector<unsigned char>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  out.insert(out.end(), b, b + n);
}

constexpr float kFloMagic = 202021.25f;
constexpr float kUnknownFlow = 1e10f;

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::ConfigError, "duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) bad_value(key, value, "a non-negative integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_list(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<unsigned char> read_binary_file(const std::filesystem::path& path) {
  const std::string s = read_text_file(path);
  return {s.begin(), s.end()};
}

std::vector<unsigned char> encode_flo(const FlowField& flow) {
  std::vector<unsigned char> out;
  out.reserve(12 + 8 * flow.size());
  const auto w = static_cast<std::int32_t>(flow.width());
  const auto h = static_cast<std::int32_t>(flow.height());
  put_bytes(out, &kFloMagic, 4);
  put_bytes(out, &w, 4);
  put_bytes(out, &h, 4);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    float uv[2] = {kUnknownFlow, kUnknownFlow};
    if (flow.valid(i)) {
      uv[0] = static_cast<float>(flow.data()[2 * i]);
      uv[1] = static_cast<float>(flow.data()[2 * i + 1]);
    }
    put_bytes(out, uv, 8);
  }
  return out;
}

FlowField decode_flo(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::IoError, "flo: truncated header");
  float magic;
  std::int32_t w, h;
  std::memcpy(&magic, bytes.data(), 4);
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  if (magic != kFloMagic) throw Error(ErrorCode::IoError, "flo: bad magic number");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw Error(ErrorCode::IoError, "flo: implausible size");
  }
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != 12 + 8 * n) throw Error(ErrorCode::IoError, "flo: payload size mismatch");
  FlowField flow(w, h);
  bool any_unknown = false;
  std::vector<std::uint8_t> mask(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    float uv[2];
    std::memcpy(uv, bytes.data() + 12 + 8 * i, 8);
    if (!(std::abs(uv[0]) <= 1e9f && std::abs(uv[1]) <= 1e9f)) {
      mask[i] = 0;
      any_unknown = true;
      continue;
    }
    flow.set(i, Vec2(uv[0], uv[1]));
  }
  if (any_unknown) flow.mask() = std::move(mask);
  return flow;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  const auto bytes = encode_flo(flow);
  write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_binary_file(path)); }

namespace {

Image read_pnm(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_int = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = 10 * v + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw Error(ErrorCode::IoError, name + ": malformed PNM header");
    return v;
  };
  const bool color = bytes[1] == '6';
  const int w = next_int(), h = next_int(), maxval = next_int();
  ++pos;  // single whitespace before the raster
  if (maxval != 255 || w <= 0 || h <= 0) {
    throw Error(ErrorCode::IoError, name + ": only 8-bit PNM is supported");
  }
  const std::size_t channels = color ? 3 : 1;
  if (bytes.size() < pos + channels * static_cast<std::size_t>(w) * h) {
    throw Error(ErrorCode::IoError, name + ": truncated raster");
  }
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t o = pos + channels * (static_cast<std::size_t>(y) * w + x);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bytes[o + (color ? c : 0)] / 255.0;
    }
  }
  return img;
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw Error(ErrorCode::IoError, path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::IoError, path.string() + ": " + msg);
  }
  const int w = static_cast<int>(png.width), h = static_cast<int>(png.height);
  Image img(w, h);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = buf[i] / 255.0;
  return img;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return read_pnm(bytes, path.string());
  }
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
    return read_png(path);
  }
  throw Error(ErrorCode::IoError, path.string() + ": unsupported image format (PPM, PGM or PNG)");
}

std::vector<unsigned char> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (double v : img.data()) {
    out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

std::vector<CorrespondenceRow> read_correspondence_table(std::istream& in) {
  std::vector<CorrespondenceRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.empty() && ls.eof()) continue;
    if ((v.size() != 4 && v.size() != 5) || !ls.eof()) {
      throw Error(ErrorCode::IoError, "correspondence line " + std::to_string(lineno) +
                                          ": expected 'u v u2 v2 [label]'");
    }
    CorrespondenceRow r;
    r.first = {v[0], v[1]};
    r.second = {v[2], v[3]};
    if (v.size() == 5) r.label = static_cast<int>(v[4]);
    rows.push_back(r);
  }
  return rows;
}

void write_correspondence_table(std::ostream& out, const std::vector<CorrespondenceRow>& rows) {
  out << "# u v u2 v2 label (1 = inlier, 0 = planted outlier)\n";
  for (const auto& r : rows) {
    out << format_double(r.first.u) << ' ' << format_double(r.first.v) << ' '
        << format_double(r.second.u) << ' ' << format_double(r.second.v);
    if (r.label >= 0) out << ' ' << r.label;
    out << '\n';
  }
}

NormalizedCorrespondenceSet normalize_rows(const std::vector<CorrespondenceRow>& rows,
                                           const CameraIntrinsics& K, const CameraIntrinsics& K2) {
  std::vector<PixelPoint> a, b;
  for (const auto& r : rows) {
    a.push_back(r.first);
    b.push_back(r.second);
  }
  const auto na = normalize_points(a, K);
  const auto nb = normalize_points(b, K2);
  NormalizedCorrespondenceSet out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({na[i], nb[i], i});
  return out;
}

std::pair<CameraIntrinsics, CameraIntrinsics> parse_intrinsics(const std::string& text) {
  CameraIntrinsics K, K2;
  bool has_k2 = false;
  std::set<std::string> seen1;
  for (const auto& [key, value] : parse_key_values(text)) {
    const auto dot = key.find('.');
    const std::string cam = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string field = dot == std::string::npos ? key : key.substr(dot + 1);
    CameraIntrinsics* target = nullptr;
    if (cam == "camera1") {
      target = &K;
      seen1.insert(field);
    } else if (cam == "camera2") {
      target = &K2;
      has_k2 = true;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown intrinsics key '" + key + "'");
    }
    const double v = parse_double(key, value);
    if (field == "fx") target->fx = v;
    else if (field == "fy") target->fy = v;
    else if (field == "cx") target->cx = v;
    else if (field == "cy") target->cy = v;
    else if (field == "skew") target->skew = v;
    else throw Error(ErrorCode::ConfigError, "unknown intrinsics key '" + key + "'");
  }
  if (!seen1.count("fx") || !seen1.count("fy")) {
    throw Error(ErrorCode::ConfigError, "intrinsics need at least camera1.fx and camera1.fy");
  }
  if (!has_k2) K2 = K;
  K.validate();
  K2.validate();
  return {K, K2};
}

std::string format_intrinsics(const CameraIntrinsics& K, const CameraIntrinsics& K2) {
  std::ostringstream os;
  for (const auto& [name, c] : {std::pair{"camera1", K}, std::pair{"camera2", K2}}) {
    os << name << ".fx=" << format_double(c.fx) << '\n' << name << ".fy=" << format_double(c.fy)
       << '\n' << name << ".cx=" << format_double(c.cx) << '\n' << name
       << ".cy=" << format_double(c.cy) << '\n' << name << ".skew=" << format_double(c.skew)
       << '\n';
  }
  return os.str();
}

std::string to_config_text(const RobustConfig& cfg) {
  std::ostringstream os;
  os << "inlier_threshold=" << format_double(cfg.inlier_threshold) << '\n'
     << "sample_pool=" << cfg.sample_pool << '\n'
     << "test_set_size=" << cfg.test_set_size << '\n'
     << "hypothesis_count=" << cfg.hypothesis_count << '\n'
     << "irls_max_iters=" << cfg.irls_max_iters << '\n'
     << "irls_objective_floor=" << format_double(cfg.irls_objective_floor) << '\n'
     << "rng_seed=" << cfg.rng_seed << '\n';
  return os.str();
}

RobustConfig parse_robust_config(const std::string& text, const RobustConfig& base) {
  RobustConfig cfg = base;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "inlier_threshold") cfg.inlier_threshold = parse_double(key, value);
    else if (key == "sample_pool") cfg.sample_pool = parse_u64(key, value);
    else if (key == "test_set_size") cfg.test_set_size = parse_u64(key, value);
    else if (key == "hypothesis_count") cfg.hypothesis_count = parse_u64(key, value);
    else if (key == "irls_max_iters") cfg.irls_max_iters = static_cast<int>(parse_int(key, value));
    else if (key == "irls_objective_floor") cfg.irls_objective_floor = parse_double(key, value);
    else if (key == "rng_seed") cfg.rng_seed = parse_u64(key, value);
    else throw Error(ErrorCode::ConfigError, "unknown robust config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

std::string to_config_text(const SceneConfig& cfg) {
  std::ostringstream os;
  os << "width=" << cfg.width << '\n'
     << "height=" << cfg.height << '\n'
     << format_intrinsics(cfg.K, cfg.K2)
     << "rotation_min=" << format_double(cfg.rotation_min) << '\n'
     << "rotation_max=" << format_double(cfg.rotation_max) << '\n'
     << "translation_mode=" << to_string(cfg.translation_mode) << '\n'
     << "forward_cone=" << format_double(cfg.forward_cone) << '\n'
     << "baseline=" << format_double(cfg.baseline) << '\n'
     << "depth_min=" << format_double(cfg.depth_min) << '\n'
     << "depth_max=" << format_double(cfg.depth_max) << '\n'
     << "point_count=" << cfg.point_count << '\n'
     << "pixel_noise=" << format_double(cfg.pixel_noise) << '\n'
     << "outlier_fraction=" << format_double(cfg.outlier_fraction) << '\n'
     << "mode=" << to_string(cfg.mode) << '\n'
     << "occluder=" << (cfg.occluder ? "true" : "false") << '\n'
     << "rng_seed=" << cfg.rng_seed << '\n';
  return os.str();
}

SceneConfig parse_scene_config(const std::string& text, const SceneConfig& base) {
  SceneConfig cfg = base;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "width") cfg.width = static_cast<int>(parse_int(key, value));
    else if (key == "height") cfg.height = static_cast<int>(parse_int(key, value));
    else if (key.rfind("camera1.", 0) == 0 || key.rfind("camera2.", 0) == 0) {
      CameraIntrinsics& c = key[6] == '1' ? cfg.K : cfg.K2;
      const std::string field = key.substr(8);
      const double v = parse_double(key, value);
      if (field == "fx") c.fx = v;
      else if (field == "fy") c.fy = v;
      else if (field == "cx") c.cx = v;
      else if (field == "cy") c.cy = v;
      else if (field == "skew") c.skew = v;
      else throw Error(ErrorCode::ConfigError, "unknown scene config key '" + key + "'");
    } else if (key == "rotation_min") cfg.rotation_min = parse_double(key, value);
    else if (key == "rotation_max") cfg.rotation_max = parse_double(key, value);
    else if (key == "translation_mode") {
      if (value == "forward") cfg.translation_mode = TranslationMode::Forward;
      else if (value == "uniform") cfg.translation_mode = TranslationMode::Uniform;
      else bad_value(key, value, "forward or uniform");
    } else if (key == "forward_cone") cfg.forward_cone = parse_double(key, value);
    else if (key == "baseline") cfg.baseline = parse_double(key, value);
    else if (key == "depth_min") cfg.depth_min = parse_double(key, value);
    else if (key == "depth_max") cfg.depth_max = parse_double(key, value);
    else if (key == "point_count") cfg.point_count = parse_u64(key, value);
    else if (key == "pixel_noise") cfg.pixel_noise = parse_double(key, value);
    else if (key == "outlier_fraction") cfg.outlier_fraction = parse_double(key, value);
    else if (key == "mode") {
      if (value == "sparse") cfg.mode = SceneMode::Sparse;
      else if (value == "dense") cfg.mode = SceneMode::Dense;
      else bad_value(key, value, "sparse or dense");
    } else if (key == "occluder") cfg.occluder = parse_bool(key, value);
    else if (key == "rng_seed") cfg.rng_seed = parse_u64(key, value);
    else throw Error(ErrorCode::ConfigError, "unknown scene config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace epiflow
