#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mono3d/params.hpp"

namespace mono3d {

struct AdamConfig {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l1 = 0.0;  // L1 penalty strength folded into the gradient
};

// Adam with optional L1 regularization. Every registered parameter must have
// an allocated gradient when step() runs (a missing buffer means the forward
// pass silently dropped a parameter, which is treated as a logic error);
// gradients are zeroed after the update.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParamRegistry& params);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int steps_taken() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::unordered_map<std::string, Slot> state_;
  int t_ = 0;
};

}  // namespace mono3d
