#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mono3d {

// Dense row-major shape, rank 1..4. Image tensors use [h, w, c] with the
// channel index fastest; matrices are [rows, cols].
struct Shape {
  std::array<int, 4> extent{1, 1, 1, 1};
  int rank = 1;

  static Shape vec(int n) { return make({n}, 1); }
  static Shape mat(int r, int c) { return make({r, c}, 2); }
  static Shape hwc(int h, int w, int c) { return make({h, w, c}, 3); }
  static Shape of4(int a, int b, int c, int d) { return make({a, b, c, d}, 4); }

  int operator[](int i) const { return extent[static_cast<std::size_t>(i)]; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= extent[static_cast<std::size_t>(i)];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (extent[static_cast<std::size_t>(i)] != o.extent[static_cast<std::size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const;

 private:
  static Shape make(std::initializer_list<int> dims, int rank_);
};

// Value buffer plus an optional gradient buffer of the same extent. Gradients
// are allocated lazily on first touch and accumulate until zeroed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& s, double fill = 0.0)
      : shape_(s), v_(static_cast<std::size_t>(s.numel()), fill) {}

  static Tensor from(const Shape& s, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }
  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }

  // Rank-2 accessors.
  double at(int i, int j) const { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j) { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  // Rank-3 [h, w, c] accessors.
  double at(int y, int x, int c) const {
    return v_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  double& at(int y, int x, int c) {
    return v_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }

  bool grad_allocated() const { return !g_.empty(); }
  std::vector<double>& grad() {
    if (g_.empty()) g_.assign(v_.size(), 0.0);
    return g_;
  }
  const std::vector<double>& grad_view() const { return g_; }
  void zero_grad() {
    if (!g_.empty()) g_.assign(g_.size(), 0.0);
  }
  void drop_grad() { g_.clear(); }

 private:
  Shape shape_{};
  std::vector<double> v_;
  std::vector<double> g_;
};

using TensorRef = std::shared_ptr<Tensor>;

inline TensorRef make_tensor(const Shape& s, double fill = 0.0) {
  return std::make_shared<Tensor>(s, fill);
}
TensorRef make_tensor(const Shape& s, std::vector<double> values);

}  // namespace mono3d
