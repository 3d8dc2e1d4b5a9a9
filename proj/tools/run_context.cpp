#include "run_context.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <map>

#include "epiflow/io.hpp"

namespace epiflow::cli {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidIntrinsics:
    case ErrorCode::DegenerateScene:
      return kConfig;
    case ErrorCode::IoError:
    case ErrorCode::InsufficientData:
    case ErrorCode::InsufficientTrajectory:
    case ErrorCode::EmptyMask:
      return kInput;
    default:
      return kNumerical;
  }
}

std::string sha256_hex(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_binary_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "sha256 failed for " + path.string());
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

void Report::add(const std::string& key, const std::string& value) { lines_.emplace_back(key, value); }
void Report::add(const std::string& key, double value) { add(key, format_double(value)); }
void Report::add(const std::string& key, std::int64_t value) { add(key, std::to_string(value)); }
void Report::add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }

std::string Report::text() const {
  std::string s;
  for (const auto& [k, v] : lines_) s += k + "=" + v + "\n";
  return s;
}

std::filesystem::path RunContext::input(const std::filesystem::path& path) {
  inputs_.push_back(path);
  return path;
}

void RunContext::config(const std::string& key, const std::string& value) {
  config_.emplace_back(key, value);
}

void RunContext::config_text(const std::string& prefix, const std::string& text) {
  for (const auto& [k, v] : parse_key_values(text)) config(prefix + k, v);
}

std::string RunContext::manifest_text(const std::string& version) const {
  std::string s = "# epiflow run manifest; replay with: epiflow --manifest <this file>\n";
  s += "version=" + version + "\n";
  s += "command=" + command_ + "\n";
  if (seed_) s += "rng_seed=" + std::to_string(*seed_) + "\n";
  s += "argc=" + std::to_string(args_.size()) + "\n";
  for (std::size_t i = 0; i < args_.size(); ++i) s += "arg." + std::to_string(i) + "=" + args_[i] + "\n";
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    s += "input." + std::to_string(i) + ".path=" + inputs_[i].string() + "\n";
    s += "input." + std::to_string(i) + ".sha256=" + sha256_hex(inputs_[i]) + "\n";
  }
  for (const auto& [k, v] : config_) s += "config." + k + "=" + v + "\n";
  return s;
}

ReplayPlan load_manifest(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : parse_key_values(read_text_file(path))) kv.emplace(k, v);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::ConfigError, "manifest lacks key '" + key + "'");
    return it->second;
  };
  ReplayPlan plan;
  plan.command = get("command");
  const std::int64_t argc = parse_int("argc", get("argc"));
  for (std::int64_t i = 0; i < argc; ++i) plan.args.push_back(get("arg." + std::to_string(i)));
  for (std::size_t i = 0;; ++i) {
    const std::string base = "input." + std::to_string(i);
    auto p = kv.find(base + ".path");
    if (p == kv.end()) break;
    const std::string want = get(base + ".sha256");
    if (!std::filesystem::exists(p->second))
      throw Error(ErrorCode::IoError, "manifest input missing: " + p->second);
    if (sha256_hex(p->second) != want)
      throw Error(ErrorCode::IoError, "manifest input changed since the recorded run: " + p->second);
  }
  return plan;
}

std::uint64_t default_seed(std::uint64_t fallback) {
  const char* env = std::getenv("EPIFLOW_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  return parse_u64("EPIFLOW_SEED", env);
}

}  // namespace epiflow::cli
