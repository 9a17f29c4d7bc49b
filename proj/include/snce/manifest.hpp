#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace snce {

inline constexpr const char* kToolVersion = "0.1.0";

// Provenance record written as manifest.json next to every command's
// outputs. config_hash is the FNV-1a 64 digest of the canonical (sorted-key)
// JSON configuration.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);
std::string iso8601_utc_now();

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& out_dir);

}  // namespace snce
