#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mono3d {

// 64-bit FNV-1a over raw bytes; the project's content fingerprint.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

// File/dir fingerprints. Directories hash file names and contents in sorted
// relative-path order, so the result is stable across platforms.
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_dir(const std::filesystem::path& root);

// Every command writes one of these next to its outputs: what ran, with
// which settings, on which inputs, producing which files. Rerunning with an
// identical manifest must reproduce the outputs byte for byte.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;  // flattened key=value snapshot
  std::string inputs_hash;                    // hex fingerprint of consumed data
  std::vector<std::string> outputs;           // paths relative to the manifest

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  void write(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

}  // namespace mono3d
