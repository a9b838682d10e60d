// Run manifests: what was run, on which inputs, with which seed.

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace abam {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a of a file's bytes; empty string when unreadable.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    if (!in) break;
  }
  return "fnv1a64:" + hex64(h);
}

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // effective option values
  std::map<std::string, std::string> inputs;  // path -> checksum
  std::uint64_t seed = 0;
  std::string tool_version{kToolVersion};
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  double elapsed_ms = 0;
  nlohmann::json extra = nlohmann::json::object();

  std::string config_hash() const {
    std::string canon = command;
    for (const auto& [k, v] : config) canon += "\n" + k + "=" + v;
    return "fnv1a64:" + hex64(fnv1a(canon));
  }

  void add_input(const std::string& path) { inputs[path] = file_checksum(path); }

  void finish() {
    elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  }

  nlohmann::json to_json() const {
    return {{"command", command}, {"config", config},           {"config_hash", config_hash()},
            {"inputs", inputs},   {"seed", seed},               {"tool_version", tool_version},
            {"timings", {{"elapsed_ms", elapsed_ms}}}, {"extra", extra}};
  }
};

}  // namespace abam
