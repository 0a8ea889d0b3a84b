#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mono3d/rng.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Named trainable tensors in insertion order. Checkpoints are written as a
// little-endian binary stream: magic, format version, parameter count, then
// per parameter the name, rank, extents and raw float64 values.
class ParamRegistry {
 public:
  TensorRef create(const std::string& name, const Shape& shape, double fill = 0.0);
  TensorRef create_uniform(const std::string& name, const Shape& shape, Rng& rng, double lo,
                           double hi);
  TensorRef get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, TensorRef>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void zero_grads();

  void save(const std::filesystem::path& path) const;
  // Replaces the values of already-registered parameters; names, ranks and
  // extents must match exactly.
  void load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, TensorRef>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mono3d
