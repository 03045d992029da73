#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cll/core.hpp"
#include "cll/dataset_io.hpp"
#include "cll/version.hpp"

namespace cll {

namespace detail {

// FNV-1a, 64-bit. Fast, dependency-free, and stable across platforms;
// collision resistance is irrelevant here (digests detect drift, not
// adversaries).
inline std::uint64_t fnv1a64(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

}  // namespace detail

inline std::string digest_bytes(const unsigned char* p, std::size_t n) {
  return "fnv1a64:" + detail::hex64(detail::fnv1a64(p, n));
}

inline std::string digest_file(const std::string& path) {
  auto bytes = detail::slurp(path);
  return digest_bytes(bytes.data(), bytes.size());
}

// Run identity: the resolved configuration (seed included) plus the command
// name, nothing environmental. Two runs with equal ids write equal bytes.
inline std::string make_run_id(const std::string& command,
                               const std::map<std::string, std::string>& cfg) {
  std::string blob = command + "\n";
  for (const auto& [k, v] : cfg) blob += k + "=" + v + "\n";
  auto h = detail::fnv1a64(
      reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  auto it = cfg.find("run_name");
  std::string name = it == cfg.end() ? std::string("run") : it->second;
  return name + "-" + detail::hex64(h);
}

// Everything needed to reproduce one subcommand invocation. Input digests
// are taken before any computation; no timestamps or host details appear,
// so a rerun emits the identical manifest.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::map<std::string, std::string> config;  // resolved key -> value
  std::map<std::string, std::string> inputs;  // path -> digest
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<std::string> outputs;  // paths relative to the out dir
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["run_id"] = m.run_id;
  j["command"] = m.command;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["outputs"] = m.outputs;
  detail::atomic_write(path, j.dump(2) + "\n");
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path + " is missing fields: " + e.what());
  }
  return m;
}

}  // namespace cll
