#include "snce/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "snce/errors.hpp"

namespace snce {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string fnv1a64_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& out_dir) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["config_hash"] = manifest.config_hash;
  j["seed"] = manifest.seed;
  j["tool_version"] = manifest.tool_version;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  j["outputs"] = manifest.outputs;

  const auto path = out_dir / "manifest.json";
  std::ofstream f(path);
  if (!f) throw IoError("write_manifest: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace snce
