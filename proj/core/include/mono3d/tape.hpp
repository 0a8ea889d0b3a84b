#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mono3d/tensor.hpp"

namespace mono3d {

// Reverse-mode tape. Each op records one closure that moves gradients from
// its output to its inputs; backward() seeds a scalar loss with 1 and replays
// the closures in reverse order. The tape owns nothing else: tensors are kept
// alive by the shared_ptr captures inside the closures.
class Tape {
 public:
  using BackFn = std::function<void()>;

  void record(BackFn fn) { nodes_.push_back(std::move(fn)); }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
  void backward(const TensorRef& loss);

  void clear() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<BackFn> nodes_;
};

}  // namespace mono3d
