#include "mono3d/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mono3d/check.hpp"

namespace mono3d {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("hash: cannot open '", path.string(), "'"));
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

std::uint64_t hash_dir(const fs::path& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error(cat("hash: '", root.string(), "' is not a directory"));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::vector<std::string> rel;
  rel.reserve(files.size());
  for (const auto& f : files) rel.push_back(f.lexically_relative(root).generic_string());
  std::vector<std::size_t> order(rel.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rel[a] < rel[b]; });
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i : order) {
    h = fnv1a64(rel[i].data(), rel[i].size(), h);
    h ^= hash_file(files[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;  // std::map keeps keys sorted
  j["inputs_hash"] = inputs_hash;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(cat("manifest: ", e.what()));
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.inputs_hash = j.value("inputs_hash", "");
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(cat("manifest: cannot open '", path.string(), "' for writing"));
  os << to_json();
  if (!os) throw std::runtime_error(cat("manifest: write to '", path.string(), "' failed"));
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("manifest: cannot open '", path.string(), "'"));
  std::ostringstream os;
  os << is.rdbuf();
  return from_json(os.str());
}

}  // namespace mono3d
