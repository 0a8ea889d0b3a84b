#include "mono3d/tensor.hpp"

#include <cstdio>
#include <stdexcept>

#include "mono3d/check.hpp"
#include "mono3d/tape.hpp"

namespace mono3d {

Shape Shape::make(std::initializer_list<int> dims, int rank_) {
  Shape s;
  s.rank = rank_;
  int i = 0;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument(cat("shape: extent ", d, " must be positive"));
    s.extent[static_cast<std::size_t>(i++)] = d;
  }
  return s;
}

std::string Shape::str() const {
  std::string out = "[";
  for (int i = 0; i < rank; ++i) {
    if (i) out += ",";
    out += std::to_string(extent[static_cast<std::size_t>(i)]);
  }
  return out + "]";
}

Tensor Tensor::from(const Shape& s, std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != s.numel())
    throw std::invalid_argument(cat("tensor: ", values.size(), " values for shape ", s.str()));
  Tensor t;
  t.shape_ = s;
  t.v_ = std::move(values);
  return t;
}

TensorRef make_tensor(const Shape& s, std::vector<double> values) {
  return std::make_shared<Tensor>(Tensor::from(s, std::move(values)));
}

void Tape::backward(const TensorRef& loss) {
  if (!loss || loss->size() != 1)
    throw std::invalid_argument("backward: loss must be a single-element tensor");
  loss->grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace mono3d
