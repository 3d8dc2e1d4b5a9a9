#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epiflow/flow.hpp"
#include "epiflow/geometry.hpp"
#include "epiflow/robust.hpp"
#include "epiflow/synth.hpp"

namespace epiflow {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key=value` lines, '#' comments, blank lines ignored. Throws ConfigError
/// with the line number on malformed or duplicate keys.
KeyValues parse_key_values(const std::string& text);

double parse_double(const std::string& key, const std::string& value);
std::int64_t parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<double> parse_list(const std::string& key, const std::string& value);

/// Shortest decimal form that round-trips exactly.
std::string format_double(double v);
std::string format_list(std::span<const double> v);
template <std::size_t N>
std::string format_list(const std::array<double, N>& v) {
  return format_list(std::span<const double>(v.data(), N));
}

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::vector<unsigned char> read_binary_file(const std::filesystem::path& path);

/// Middlebury .flo: magic 202021.25f, int32 width and height, then interleaved
/// float32 (u, v), little-endian. Undefined pixels are stored as 1e10 and read
/// back as invalid (|value| > 1e9).
std::vector<unsigned char> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<unsigned char>& bytes);
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

/// 8-bit binary PPM (P6) / PGM (P5), and 8-bit PNG through libpng.
Image read_image(const std::filesystem::path& path);
std::vector<unsigned char> encode_ppm(const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

struct CorrespondenceRow {
  PixelPoint first;
  PixelPoint second;
  int label = -1;  // -1 when the column is absent
};

/// `u v u' v' [label]` per line, '#' comments.
std::vector<CorrespondenceRow> read_correspondence_table(std::istream& in);
void write_correspondence_table(std::ostream& out, const std::vector<CorrespondenceRow>& rows);
NormalizedCorrespondenceSet normalize_rows(const std::vector<CorrespondenceRow>& rows,
                                           const CameraIntrinsics& K, const CameraIntrinsics& K2);

/// camera1.{fx,fy,cx,cy,skew} and optional camera2.*; camera2 defaults to camera1.
std::pair<CameraIntrinsics, CameraIntrinsics> parse_intrinsics(const std::string& text);
std::string format_intrinsics(const CameraIntrinsics& K, const CameraIntrinsics& K2);

std::string to_config_text(const RobustConfig& cfg);
RobustConfig parse_robust_config(const std::string& text, const RobustConfig& base = {});

std::string to_config_text(const SceneConfig& cfg);
SceneConfig parse_scene_config(const std::string& text, const SceneConfig& base = {});

}  // namespace epiflow
