#include "mono3d/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'N', 'O', '3', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("checkpoint: truncated stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("checkpoint: truncated stream");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

TensorRef ParamRegistry::create(const std::string& name, const Shape& shape, double fill) {
  if (index_.count(name))
    throw std::invalid_argument(cat("params: duplicate parameter '", name, "'"));
  auto t = make_tensor(shape, fill);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

TensorRef ParamRegistry::create_uniform(const std::string& name, const Shape& shape, Rng& rng,
                                        double lo, double hi) {
  auto t = create(name, shape);
  for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(lo, hi);
  return t;
}

TensorRef ParamRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument(cat("params: unknown parameter '", name, "'"));
  return items_[it->second].second;
}

void ParamRegistry::zero_grads() {
  for (auto& [name, t] : items_) t->zero_grad();
}

void ParamRegistry::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(cat("checkpoint: cannot open '", path.string(), "' for writing"));
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(items_.size()));
  for (const auto& [name, t] : items_) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t->shape().rank));
    for (int i = 0; i < t->shape().rank; ++i)
      put_u32(os, static_cast<std::uint32_t>(t->shape()[i]));
    for (std::int64_t i = 0; i < t->size(); ++i) put_f64(os, (*t)[i]);
  }
  if (!os) throw std::runtime_error(cat("checkpoint: write to '", path.string(), "' failed"));
}

void ParamRegistry::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(cat("checkpoint: cannot open '", path.string(), "'"));
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError(cat("checkpoint: '", path.string(), "' has a bad magic header"));
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw ParseError(cat("checkpoint: unsupported format version ", version));
  const std::uint32_t count = get_u32(is);
  if (count != items_.size())
    throw ParseError(cat("checkpoint: holds ", count, " parameters, registry has ", items_.size()));
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint: truncated stream");
    auto it = index_.find(name);
    if (it == index_.end())
      throw ParseError(cat("checkpoint: parameter '", name, "' is not registered"));
    TensorRef t = items_[it->second].second;
    const std::uint32_t rank = get_u32(is);
    if (static_cast<int>(rank) != t->shape().rank)
      throw ParseError(cat("checkpoint: '", name, "' rank ", rank, " does not match ",
                           t->shape().str()));
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t e = get_u32(is);
      if (static_cast<int>(e) != t->shape()[static_cast<int>(i)])
        throw ParseError(cat("checkpoint: '", name, "' extent ", e, " does not match ",
                             t->shape().str()));
    }
    for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] = get_f64(is);
  }
}

}  // namespace mono3d
