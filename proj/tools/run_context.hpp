#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epiflow/error.hpp"

namespace epiflow::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kInput = 3,
  kNumerical = 4,
};

int exit_code_for(ErrorCode code);

std::string sha256_hex(const std::filesystem::path& path);

/// Ordered key=value lines; printed to stdout and mirrored into result.txt.
class Report {
 public:
  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  void add(const std::string& key, std::int64_t value);
  void add(const std::string& key, std::size_t value);
  void add(const std::string& key, int value) { add(key, static_cast<std::int64_t>(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "1" : "0")); }

  std::string text() const;

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

/// Everything needed to replay a run: the canonical argument list, the
/// resolved configuration and digests of every file read.
class RunContext {
 public:
  explicit RunContext(std::string command) : command_(std::move(command)) {}

  const std::string& command() const { return command_; }

  /// Records the path and returns it, so reads can be written inline.
  std::filesystem::path input(const std::filesystem::path& path);
  void config(const std::string& key, const std::string& value);
  /// Each non-comment key=value line of `text`, prefixed.
  void config_text(const std::string& prefix, const std::string& text);
  void seed(std::uint64_t s) { seed_ = s; }
  std::optional<std::uint64_t> recorded_seed() const { return seed_; }
  void set_args(std::vector<std::string> args) { args_ = std::move(args); }

  std::string manifest_text(const std::string& version) const;

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::pair<std::string, std::string>> config_;
  std::optional<std::uint64_t> seed_;
};

struct ReplayPlan {
  std::string command;
  std::vector<std::string> args;
};

/// Parses a manifest and checks every recorded input digest. A changed or
/// missing input raises IoError.
ReplayPlan load_manifest(const std::filesystem::path& path);

/// Seed default: EPIFLOW_SEED when set, else `fallback`. Malformed values
/// raise ConfigError.
std::uint64_t default_seed(std::uint64_t fallback);

}  // namespace epiflow::cli
