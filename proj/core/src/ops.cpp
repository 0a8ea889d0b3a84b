#include "mono3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_rank(const TensorRef& t, int rank, const char* op) {
  require(t && t->shape().rank == rank,
          cat(op, ": expected rank-", rank, " tensor, got ",
              t ? t->shape().str() : std::string("null")));
}

void require_same_shape(const TensorRef& a, const TensorRef& b, const char* op) {
  require(a && b && a->shape() == b->shape(),
          cat(op, ": shape mismatch ", a ? a->shape().str() : std::string("null"), " vs ",
              b ? b->shape().str() : std::string("null")));
}

}  // namespace

TensorRef matmul(Tape& tape, const TensorRef& a, const TensorRef& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a->shape()[0], k = a->shape()[1], n = b->shape()[1];
  require(b->shape()[0] == k,
          cat("matmul: inner extents disagree: ", a->shape().str(), " vs ", b->shape().str()));
  auto out = make_tensor(Shape::mat(m, n));
  const double* av = a->data();
  const double* bv = b->data();
  double* ov = out->data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv + static_cast<std::size_t>(p) * n;
      double* orow = ov + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  tape.record([a, b, out, m, k, n] {
    const auto& go = out->grad();
    auto& ga = a->grad();
    auto& gb = b->grad();
    const double* bv = b->data();
    const double* av = a->data();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double s = 0.0;
        const double* brow = bv + static_cast<std::size_t>(p) * n;
        const double* grow = go.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
        ga[static_cast<std::size_t>(i) * k + p] += s;
      }
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        const double* grow = go.data() + static_cast<std::size_t>(i) * n;
        double* gbrow = gb.data() + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
      }
  });
  return out;
}

TensorRef transpose(Tape& tape, const TensorRef& x) {
  require_rank(x, 2, "transpose");
  const int m = x->shape()[0], n = x->shape()[1];
  auto out = make_tensor(Shape::mat(n, m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->at(j, i) = x->at(i, j);
  tape.record([x, out, m, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx[static_cast<std::size_t>(i) * n + j] += go[static_cast<std::size_t>(j) * m + i];
  });
  return out;
}

TensorRef conv1x1(Tape& tape, const TensorRef& x, const TensorRef& w, const TensorRef& b) {
  require_rank(x, 3, "conv1x1");
  require_rank(w, 2, "conv1x1");
  require_rank(b, 1, "conv1x1");
  const int h = x->shape()[0], wd = x->shape()[1], ci = x->shape()[2];
  const int co = w->shape()[1];
  require(w->shape()[0] == ci,
          cat("conv1x1: weight ", w->shape().str(), " does not match input channels ", ci));
  require(b->shape()[0] == co,
          cat("conv1x1: bias ", b->shape().str(), " does not match output channels ", co));
  auto out = make_tensor(Shape::hwc(h, wd, co));
  const std::int64_t pixels = static_cast<std::int64_t>(h) * wd;
  const double* xv = x->data();
  const double* wv = w->data();
  const double* bv = b->data();
  double* ov = out->data();
  for (std::int64_t p = 0; p < pixels; ++p) {
    double* orow = ov + p * co;
    for (int o = 0; o < co; ++o) orow[o] = bv[o];
    const double* xrow = xv + p * ci;
    for (int i = 0; i < ci; ++i) {
      const double xi = xrow[i];
      const double* wrow = wv + static_cast<std::size_t>(i) * co;
      for (int o = 0; o < co; ++o) orow[o] += xi * wrow[o];
    }
  }
  tape.record([x, w, b, out, pixels, ci, co] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    auto& gw = w->grad();
    auto& gb = b->grad();
    const double* xv = x->data();
    const double* wv = w->data();
    for (std::int64_t p = 0; p < pixels; ++p) {
      const double* grow = go.data() + p * co;
      for (int o = 0; o < co; ++o) gb[static_cast<std::size_t>(o)] += grow[o];
      const double* xrow = xv + p * ci;
      double* gxrow = gx.data() + p * ci;
      for (int i = 0; i < ci; ++i) {
        const double* wrow = wv + static_cast<std::size_t>(i) * co;
        double* gwrow = gw.data() + static_cast<std::size_t>(i) * co;
        double s = 0.0;
        const double xi = xrow[i];
        for (int o = 0; o < co; ++o) {
          s += wrow[o] * grow[o];
          gwrow[o] += xi * grow[o];
        }
        gxrow[i] += s;
      }
    }
  });
  return out;
}

TensorRef relu(Tape& tape, const TensorRef& x) {
  require(x != nullptr, "relu: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] > 0.0 ? (*x)[i] : 0.0;
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    // Subgradient at exactly zero is taken as zero.
    for (std::int64_t i = 0; i < n; ++i)
      if ((*x)[i] > 0.0) gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef sigmoid(Tape& tape, const TensorRef& x) {
  require(x != nullptr, "sigmoid: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = 1.0 / (1.0 + std::exp(-(*x)[i]));
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double s = (*out)[i];
      gx[static_cast<std::size_t>(i)] += s * (1.0 - s) * go[static_cast<std::size_t>(i)];
    }
  });
  return out;
}

TensorRef tanh_channel(Tape& tape, const TensorRef& x, int channel) {
  require_rank(x, 3, "tanh_channel");
  const int c = x->shape()[2];
  require(channel >= 0 && channel < c,
          cat("tanh_channel: channel ", channel, " out of range for ", x->shape().str()));
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = (*x)[i];
    (*out)[i] = (i % c == channel) ? std::tanh(v) : v;
  }
  tape.record([x, out, n, c, channel] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) {
      if (i % c == channel) {
        const double t = (*out)[i];
        gx[static_cast<std::size_t>(i)] += (1.0 - t * t) * go[static_cast<std::size_t>(i)];
      } else {
        gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
      }
    }
  });
  return out;
}

TensorRef group_norm(Tape& tape, const TensorRef& x, int groups, const TensorRef& scale,
                     const TensorRef& shift, double eps) {
  require_rank(x, 3, "group_norm");
  require_rank(scale, 1, "group_norm");
  require_rank(shift, 1, "group_norm");
  const int h = x->shape()[0], w = x->shape()[1], c = x->shape()[2];
  require(groups > 0 && c % groups == 0,
          cat("group_norm: ", c, " channels not divisible by ", groups, " groups"));
  require(scale->shape()[0] == c && shift->shape()[0] == c,
          cat("group_norm: affine extents ", scale->shape().str(), "/", shift->shape().str(),
              " do not match ", c, " channels"));
  const int cg = c / groups;
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
  const double m = static_cast<double>(pixels * cg);
  auto out = make_tensor(x->shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x->size()));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(groups));
  const double* xv = x->data();
  double* ov = out->data();
  for (int g = 0; g < groups; ++g) {
    double mean = 0.0;
    for (std::int64_t p = 0; p < pixels; ++p) {
      const double* row = xv + p * c + static_cast<std::size_t>(g) * cg;
      for (int j = 0; j < cg; ++j) mean += row[j];
    }
    mean /= m;
    double var = 0.0;
    for (std::int64_t p = 0; p < pixels; ++p) {
      const double* row = xv + p * c + static_cast<std::size_t>(g) * cg;
      for (int j = 0; j < cg; ++j) {
        const double d = row[j] - mean;
        var += d * d;
      }
    }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(g)] = inv;
    for (std::int64_t p = 0; p < pixels; ++p) {
      const double* row = xv + p * c + static_cast<std::size_t>(g) * cg;
      for (int j = 0; j < cg; ++j) {
        const std::size_t idx = static_cast<std::size_t>(p * c) + static_cast<std::size_t>(g) * cg + j;
        const double xh = (row[j] - mean) * inv;
        (*xhat)[idx] = xh;
        const int ch = g * cg + j;
        ov[idx] = (*scale)[ch] * xh + (*shift)[ch];
      }
    }
  }
  tape.record([x, scale, shift, out, xhat, invstd, pixels, groups, cg, c, m] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    auto& gscale = scale->grad();
    auto& gshift = shift->grad();
    for (int g = 0; g < groups; ++g) {
      // dL/dxhat = dL/dy * scale; reduce within the group, then redistribute.
      double s1 = 0.0, s2 = 0.0;
      for (std::int64_t p = 0; p < pixels; ++p)
        for (int j = 0; j < cg; ++j) {
          const std::size_t idx = static_cast<std::size_t>(p * c) + static_cast<std::size_t>(g) * cg + j;
          const int ch = g * cg + j;
          const double dxh = go[idx] * (*scale)[ch];
          s1 += dxh;
          s2 += dxh * (*xhat)[idx];
          gscale[static_cast<std::size_t>(ch)] += go[idx] * (*xhat)[idx];
          gshift[static_cast<std::size_t>(ch)] += go[idx];
        }
      const double inv = (*invstd)[static_cast<std::size_t>(g)];
      for (std::int64_t p = 0; p < pixels; ++p)
        for (int j = 0; j < cg; ++j) {
          const std::size_t idx = static_cast<std::size_t>(p * c) + static_cast<std::size_t>(g) * cg + j;
          const int ch = g * cg + j;
          const double dxh = go[idx] * (*scale)[ch];
          gx[idx] += inv * (dxh - (s1 + (*xhat)[idx] * s2) / m);
        }
    }
  });
  return out;
}

TensorRef resample_bilinear(Tape& tape, const TensorRef& x, int out_h, int out_w) {
  require_rank(x, 3, "resample_bilinear");
  require(out_h > 0 && out_w > 0, cat("resample_bilinear: bad target ", out_h, "x", out_w));
  const int h = x->shape()[0], w = x->shape()[1], c = x->shape()[2];
  auto out = make_tensor(Shape::hwc(out_h, out_w, c));
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  struct Tap {
    int y0, y1, x0, x1;
    double w00, w01, w10, w11;
  };
  auto taps = std::make_shared<std::vector<Tap>>();
  taps->reserve(static_cast<std::size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int ya = std::clamp(y0, 0, h - 1);
    const int yb = std::clamp(y0 + 1, 0, h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int xa = std::clamp(x0, 0, w - 1);
      const int xb = std::clamp(x0 + 1, 0, w - 1);
      Tap t{ya, yb, xa, xb, (1.0 - wy) * (1.0 - wx), (1.0 - wy) * wx, wy * (1.0 - wx), wy * wx};
      taps->push_back(t);
      double* orow = out->data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
      const double* r00 = x->data() + (static_cast<std::size_t>(t.y0) * w + t.x0) * c;
      // Zero-weight taps are skipped so that a same-size resample copies
      // values exactly instead of accumulating rounding noise.
      for (int ch = 0; ch < c; ++ch) orow[ch] = t.w00 * r00[ch];
      if (t.w01 != 0.0) {
        const double* r = x->data() + (static_cast<std::size_t>(t.y0) * w + t.x1) * c;
        for (int ch = 0; ch < c; ++ch) orow[ch] += t.w01 * r[ch];
      }
      if (t.w10 != 0.0) {
        const double* r = x->data() + (static_cast<std::size_t>(t.y1) * w + t.x0) * c;
        for (int ch = 0; ch < c; ++ch) orow[ch] += t.w10 * r[ch];
      }
      if (t.w11 != 0.0) {
        const double* r = x->data() + (static_cast<std::size_t>(t.y1) * w + t.x1) * c;
        for (int ch = 0; ch < c; ++ch) orow[ch] += t.w11 * r[ch];
      }
    }
  }
  tape.record([x, out, taps, out_h, out_w, w, c] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& t = (*taps)[static_cast<std::size_t>(oy) * out_w + ox];
        const double* grow = go.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
        for (int ch = 0; ch < c; ++ch) {
          const double g = grow[ch];
          if (g == 0.0) continue;
          gx[(static_cast<std::size_t>(t.y0) * w + t.x0) * c + ch] += t.w00 * g;
          if (t.w01 != 0.0) gx[(static_cast<std::size_t>(t.y0) * w + t.x1) * c + ch] += t.w01 * g;
          if (t.w10 != 0.0) gx[(static_cast<std::size_t>(t.y1) * w + t.x0) * c + ch] += t.w10 * g;
          if (t.w11 != 0.0) gx[(static_cast<std::size_t>(t.y1) * w + t.x1) * c + ch] += t.w11 * g;
        }
      }
  });
  return out;
}

TensorRef reshape(Tape& tape, const TensorRef& x, const Shape& s) {
  require(x != nullptr, "reshape: null input");
  require(x->shape().numel() == s.numel(),
          cat("reshape: ", x->shape().str(), " to ", s.str(), " changes element count"));
  auto out = make_tensor(s);
  out->values() = x->values();
  const std::int64_t n = x->size();
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
TensorRef binary_elementwise(Tape& tape, const TensorRef& a, const TensorRef& b, const char* name,
                             Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  auto out = make_tensor(a->shape());
  const std::int64_t n = a->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = fwd((*a)[i], (*b)[i]);
  tape.record([a, b, out, n, bwd] {
    const auto& go = out->grad();
    auto& ga = a->grad();
    auto& gb = b->grad();
    for (std::int64_t i = 0; i < n; ++i)
      bwd((*a)[i], (*b)[i], (*out)[i], go[static_cast<std::size_t>(i)],
          ga[static_cast<std::size_t>(i)], gb[static_cast<std::size_t>(i)]);
  });
  return out;
}

}  // namespace

TensorRef add(Tape& tape, const TensorRef& a, const TensorRef& b) {
  return binary_elementwise(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

TensorRef sub(Tape& tape, const TensorRef& a, const TensorRef& b) {
  return binary_elementwise(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

TensorRef mul(Tape& tape, const TensorRef& a, const TensorRef& b) {
  return binary_elementwise(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& ga, double& gb) {
        ga += y * g;
        gb += x * g;
      });
}

TensorRef div(Tape& tape, const TensorRef& a, const TensorRef& b) {
  return binary_elementwise(
      tape, a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double o, double g, double& ga, double& gb) {
        ga += g / y;
        gb -= o * g / y;
      });
}

TensorRef add_const(Tape& tape, const TensorRef& x, double cst) {
  require(x != nullptr, "add_const: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] + cst;
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef mul_const(Tape& tape, const TensorRef& x, double k) {
  require(x != nullptr, "mul_const: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] * k;
  tape.record([x, out, n, k] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += k * go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef add_constvec(Tape& tape, const TensorRef& x, const std::vector<double>& cst) {
  require(x != nullptr, "add_constvec: null input");
  require(static_cast<std::int64_t>(cst.size()) == x->size(),
          cat("add_constvec: ", cst.size(), " constants for ", x->shape().str()));
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] + cst[static_cast<std::size_t>(i)];
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef mul_constvec(Tape& tape, const TensorRef& x, const std::vector<double>& cst) {
  require(x != nullptr, "mul_constvec: null input");
  require(static_cast<std::int64_t>(cst.size()) == x->size(),
          cat("mul_constvec: ", cst.size(), " constants for ", x->shape().str()));
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] * cst[static_cast<std::size_t>(i)];
  tape.record([x, out, cst, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i)
      gx[static_cast<std::size_t>(i)] += cst[static_cast<std::size_t>(i)] * go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef exp(Tape& tape, const TensorRef& x) {
  require(x != nullptr, "exp: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = std::exp((*x)[i]);
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i)
      gx[static_cast<std::size_t>(i)] += (*out)[i] * go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef sqrt(Tape& tape, const TensorRef& x) {
  require(x != nullptr, "sqrt: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = std::sqrt((*x)[i]);
  tape.record([x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i)
      gx[static_cast<std::size_t>(i)] += 0.5 / (*out)[i] * go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef clamp_min(Tape& tape, const TensorRef& x, double floor) {
  require(x != nullptr, "clamp_min: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*x)[i] > floor ? (*x)[i] : floor;
  tape.record([x, out, n, floor] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i)
      if ((*x)[i] > floor) gx[static_cast<std::size_t>(i)] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef scale_by(Tape& tape, const TensorRef& alpha, const TensorRef& x) {
  require(alpha && alpha->size() == 1, "scale_by: alpha must hold one element");
  require(x != nullptr, "scale_by: null input");
  auto out = make_tensor(x->shape());
  const std::int64_t n = x->size();
  const double a = (*alpha)[0];
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = a * (*x)[i];
  tape.record([alpha, x, out, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    auto& ga = alpha->grad();
    const double a = (*alpha)[0];
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      gx[static_cast<std::size_t>(i)] += a * go[static_cast<std::size_t>(i)];
      s += (*x)[i] * go[static_cast<std::size_t>(i)];
    }
    ga[0] += s;
  });
  return out;
}

TensorRef add_scaled(Tape& tape, const TensorRef& a, const TensorRef& alpha, const TensorRef& b) {
  require(alpha && alpha->size() == 1, "add_scaled: alpha must hold one element");
  require_same_shape(a, b, "add_scaled");
  auto out = make_tensor(a->shape());
  const std::int64_t n = a->size();
  const double al = (*alpha)[0];
  for (std::int64_t i = 0; i < n; ++i) (*out)[i] = (*a)[i] + al * (*b)[i];
  tape.record([a, alpha, b, out, n] {
    const auto& go = out->grad();
    auto& ga = a->grad();
    auto& gb = b->grad();
    auto& gal = alpha->grad();
    const double al = (*alpha)[0];
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double g = go[static_cast<std::size_t>(i)];
      ga[static_cast<std::size_t>(i)] += g;
      gb[static_cast<std::size_t>(i)] += al * g;
      s += (*b)[i] * g;
    }
    gal[0] += s;
  });
  return out;
}

TensorRef row_l1_normalize(Tape& tape, const TensorRef& x, double eps) {
  require_rank(x, 2, "row_l1_normalize");
  const int m = x->shape()[0], n = x->shape()[1];
  auto out = make_tensor(x->shape());
  auto sums = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double s = eps;
    for (int j = 0; j < n; ++j) s += x->at(i, j);
    (*sums)[static_cast<std::size_t>(i)] = s;
    for (int j = 0; j < n; ++j) out->at(i, j) = x->at(i, j) / s;
  }
  tape.record([x, out, sums, m, n] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (int i = 0; i < m; ++i) {
      const double s = (*sums)[static_cast<std::size_t>(i)];
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        dot += go[static_cast<std::size_t>(i) * n + j] * out->at(i, j);
      for (int j = 0; j < n; ++j)
        gx[static_cast<std::size_t>(i) * n + j] += (go[static_cast<std::size_t>(i) * n + j] - dot) / s;
    }
  });
  return out;
}

TensorRef gather_rows(Tape& tape, const TensorRef& x, const std::vector<int>& idx) {
  require_rank(x, 2, "gather_rows");
  require(!idx.empty(), "gather_rows: empty index list");
  const int m = x->shape()[0], n = x->shape()[1];
  for (int r : idx)
    require(r >= 0 && r < m, cat("gather_rows: row ", r, " out of range for ", x->shape().str()));
  const int k = static_cast<int>(idx.size());
  auto out = make_tensor(Shape::mat(k, n));
  for (int r = 0; r < k; ++r)
    for (int j = 0; j < n; ++j) out->at(r, j) = x->at(idx[static_cast<std::size_t>(r)], j);
  tape.record([x, out, idx, n, k] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < n; ++j)
        gx[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)]) * n + j] +=
            go[static_cast<std::size_t>(r) * n + j];
  });
  return out;
}

TensorRef select_column(Tape& tape, const TensorRef& x, int col) {
  require_rank(x, 2, "select_column");
  const int m = x->shape()[0], n = x->shape()[1];
  require(col >= 0 && col < n, cat("select_column: column ", col, " out of range for ", x->shape().str()));
  auto out = make_tensor(Shape::vec(m));
  for (int i = 0; i < m; ++i) (*out)[i] = x->at(i, col);
  tape.record([x, out, m, n, col] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    for (int i = 0; i < m; ++i) gx[static_cast<std::size_t>(i) * n + col] += go[static_cast<std::size_t>(i)];
  });
  return out;
}

TensorRef dot_const(Tape& tape, const TensorRef& x, const std::vector<double>& w) {
  require(x != nullptr, "dot_const: null input");
  require(static_cast<std::int64_t>(w.size()) == x->size(),
          cat("dot_const: ", w.size(), " weights for ", x->shape().str()));
  auto out = make_tensor(Shape::vec(1));
  const std::int64_t n = x->size();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += w[static_cast<std::size_t>(i)] * (*x)[i];
  (*out)[0] = s;
  tape.record([x, out, w, n] {
    const double g = out->grad()[0];
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i)] * g;
  });
  return out;
}

TensorRef smooth_l1_to_const(Tape& tape, const TensorRef& x, const std::vector<double>& target,
                             double delta) {
  require(x != nullptr, "smooth_l1_to_const: null input");
  require(static_cast<std::int64_t>(target.size()) == x->size(),
          cat("smooth_l1_to_const: ", target.size(), " targets for ", x->shape().str()));
  require(delta > 0.0, cat("smooth_l1_to_const: non-positive delta ", delta));
  auto out = make_tensor(Shape::vec(1));
  const std::int64_t n = x->size();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = (*x)[i] - target[static_cast<std::size_t>(i)];
    const double a = std::abs(d);
    s += a <= delta ? d * d / (2.0 * delta) : a - 0.5 * delta;
  }
  (*out)[0] = s;
  tape.record([x, out, target, delta, n] {
    const double g = out->grad()[0];
    auto& gx = x->grad();
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = (*x)[i] - target[static_cast<std::size_t>(i)];
      const double dd = std::abs(d) <= delta ? d / delta : (d > 0.0 ? 1.0 : -1.0);
      gx[static_cast<std::size_t>(i)] += dd * g;
    }
  });
  return out;
}

}  // namespace mono3d
