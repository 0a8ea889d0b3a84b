#include "mono3d/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

void Adam::step(ParamRegistry& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (auto& [name, p] : params.items()) {
    if (!p->grad_allocated())
      throw std::logic_error(cat("adam: parameter '", name,
                                 "' has no gradient buffer; it never entered the forward pass"));
    auto& slot = state_[name];
    const std::size_t n = static_cast<std::size_t>(p->size());
    if (slot.m.empty()) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
    }
    auto& g = p->grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gi = g[i];
      if (cfg_.l1 != 0.0) {
        const double w = (*p)[static_cast<std::int64_t>(i)];
        gi += cfg_.l1 * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
      }
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * gi;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      (*p)[static_cast<std::int64_t>(i)] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  params.zero_grads();
}

}  // namespace mono3d
