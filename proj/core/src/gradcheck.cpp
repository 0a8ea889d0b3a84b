#include "mono3d/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mono3d/attention.hpp"
#include "mono3d/check.hpp"
#include "mono3d/detector.hpp"
#include "mono3d/ops.hpp"
#include "mono3d/synth.hpp"
#include "mono3d/targets.hpp"

namespace mono3d {

double fd_max_rel_err(const GraphBuilder& build, const std::vector<TensorRef>& leaves, Rng& rng,
                      int probes, const std::vector<std::vector<std::int64_t>>& probe_sets) {
  if (probes < 1) throw std::invalid_argument("fd_max_rel_err: probes must be positive");
  for (const auto& l : leaves) l->drop_grad();

  Tape tape;
  TensorRef loss = build(tape);
  if (!loss || loss->size() != 1)
    throw std::invalid_argument("fd_max_rel_err: graphs must end in a scalar");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves) analytic.push_back(l->grad_view());

  const auto eval = [&build]() {
    Tape t;
    TensorRef l = build(t);
    return (*l)[0];
  };

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = *leaves[li];
    const std::vector<std::int64_t>* pool =
        (li < probe_sets.size() && !probe_sets[li].empty()) ? &probe_sets[li] : nullptr;
    const std::int64_t avail = pool ? static_cast<std::int64_t>(pool->size()) : leaf.size();

    std::vector<std::int64_t> idx;
    if (avail <= probes) {
      for (std::int64_t j = 0; j < avail; ++j) idx.push_back(pool ? (*pool)[static_cast<std::size_t>(j)] : j);
    } else {
      for (int p = 0; p < probes; ++p) {
        const std::int64_t j = rng.uniform_int(0, avail - 1);
        idx.push_back(pool ? (*pool)[static_cast<std::size_t>(j)] : j);
      }
    }

    for (std::int64_t i : idx) {
      const double x0 = leaf[i];
      const double h = 1e-5 * std::max(1.0, std::abs(x0));
      leaf[i] = x0 + h;
      const double fp = eval();
      leaf[i] = x0 - h;
      const double fm = eval();
      leaf[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a =
          analytic[li].empty() ? 0.0 : analytic[li][static_cast<std::size_t>(i)];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

bool GradCheckReport::passed() const {
  if (rows.empty()) return false;
  for (const auto& r : rows)
    if (!(r.max_rel_err <= tolerance)) return false;
  return true;
}

std::string GradCheckReport::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-24s %7s  %12s  %s\n", "op", "trials", "max rel err",
                "status");
  out << line << std::string(56, '-') << "\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-24s %7d  %12.3e  %s\n", r.op.c_str(), r.trials,
                  r.max_rel_err, r.max_rel_err <= tolerance ? "ok" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof(line), "tolerance %.1e: %s\n", tolerance,
                passed() ? "all checks passed" : "FAILURES above tolerance");
  out << line;
  return out.str();
}

namespace {

TensorRef rand_leaf(Rng& rng, const Shape& s, double lo, double hi) {
  auto t = make_tensor(s);
  for (std::int64_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(lo, hi);
  return t;
}

// Samples coordinates that keep a safety margin from every kink value, so
// central differences never straddle a non-smooth point.
TensorRef rand_leaf_away(Rng& rng, const Shape& s, double lo, double hi,
                         const std::vector<double>& kinks, double margin) {
  auto t = make_tensor(s);
  for (std::int64_t i = 0; i < t->size(); ++i) {
    double v = 0;
    for (;;) {
      v = rng.uniform(lo, hi);
      bool clear = true;
      for (double k : kinks)
        if (std::abs(v - k) < margin) {
          clear = false;
          break;
        }
      if (clear) break;
    }
    (*t)[i] = v;
  }
  return t;
}

std::vector<double> rand_weights(Rng& rng, std::int64_t n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

struct Check {
  std::string name;
  std::function<double(Rng&)> trial;  // one random configuration -> worst rel err
};

SceneConfig gradcheck_scene_config() {
  SceneConfig cfg;
  cfg.targets.image_w = 32;
  cfg.targets.image_h = 32;
  cfg.targets.stride = 4;
  cfg.targets.reduce = 2;
  cfg.targets.classes = 1;
  cfg.min_objects = 1;
  cfg.max_objects = 3;
  cfg.min_depth = 6.0;
  cfg.max_depth = 19.0;
  cfg.min_cell_separation = 2;
  return cfg;
}

std::vector<Check> build_checks(const GradCheckOptions& opt) {
  const int probes = opt.probes;
  std::vector<Check> checks;

  checks.push_back({"matmul", [probes](Rng& rng) {
    const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), n = rng.uniform_int(1, 4);
    auto a = rand_leaf(rng, Shape::mat(m, k), -1, 1);
    auto b = rand_leaf(rng, Shape::mat(k, n), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(m) * n);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, matmul(t, a, b), w); }, {a, b}, rng, probes);
  }});

  checks.push_back({"transpose", [probes](Rng& rng) {
    const int m = rng.uniform_int(1, 5), n = rng.uniform_int(1, 5);
    auto x = rand_leaf(rng, Shape::mat(m, n), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(m) * n);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, transpose(t, x), w); }, {x}, rng, probes);
  }});

  checks.push_back({"conv1x1", [probes](Rng& rng) {
    const int h = rng.uniform_int(1, 4), wd = rng.uniform_int(1, 4);
    const int ci = rng.uniform_int(1, 4), co = rng.uniform_int(1, 4);
    auto x = rand_leaf(rng, Shape::hwc(h, wd, ci), -1, 1);
    auto wgt = rand_leaf(rng, Shape::mat(ci, co), -1, 1);
    auto b = rand_leaf(rng, Shape::vec(co), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(h) * wd * co);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, conv1x1(t, x, wgt, b), w); }, {x, wgt, b}, rng,
        probes);
  }});

  checks.push_back({"conv3x3", [probes](Rng& rng) {
    const int h = rng.uniform_int(2, 5), wd = rng.uniform_int(2, 5);
    const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
    const int stride = rng.bernoulli(0.5) ? 2 : 1;
    const int oh = (h + stride - 1) / stride, ow = (wd + stride - 1) / stride;
    auto x = rand_leaf(rng, Shape::hwc(h, wd, ci), -1, 1);
    auto wgt = rand_leaf(rng, Shape::of4(3, 3, ci, co), -1, 1);
    auto b = rand_leaf(rng, Shape::vec(co), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(oh) * ow * co);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, conv3x3(t, x, wgt, b, stride), w); }, {x, wgt, b},
        rng, probes);
  }});

  checks.push_back({"relu", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 12);
    auto x = rand_leaf_away(rng, Shape::vec(n), -1, 1, {0.0}, 1e-3);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, relu(t, x), w); }, {x}, rng,
                          probes);
  }});

  checks.push_back({"sigmoid", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 12);
    auto x = rand_leaf(rng, Shape::vec(n), -4, 4);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, sigmoid(t, x), w); }, {x}, rng,
                          probes);
  }});

  checks.push_back({"tanh_channel", [probes](Rng& rng) {
    const int h = rng.uniform_int(1, 3), wd = rng.uniform_int(1, 3), c = rng.uniform_int(1, 4);
    const int channel = rng.uniform_int(0, c - 1);
    auto x = rand_leaf(rng, Shape::hwc(h, wd, c), -2, 2);
    auto w = rand_weights(rng, static_cast<std::int64_t>(h) * wd * c);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, tanh_channel(t, x, channel), w); }, {x}, rng,
        probes);
  }});

  checks.push_back({"group_norm", [probes](Rng& rng) {
    const int groups = rng.bernoulli(0.5) ? 2 : 1;
    const int c = groups * rng.uniform_int(1, 3);
    const int h = rng.uniform_int(1, 3), wd = rng.uniform_int(1, 3);
    auto x = rand_leaf(rng, Shape::hwc(h, wd, c), -1, 1);
    auto scale = rand_leaf(rng, Shape::vec(c), 0.5, 1.5);
    auto shift = rand_leaf(rng, Shape::vec(c), -0.5, 0.5);
    auto w = rand_weights(rng, static_cast<std::int64_t>(h) * wd * c);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, group_norm(t, x, groups, scale, shift), w); },
        {x, scale, shift}, rng, probes);
  }});

  checks.push_back({"resample_bilinear", [probes](Rng& rng) {
    const int h = rng.uniform_int(1, 5), wd = rng.uniform_int(1, 5), c = rng.uniform_int(1, 3);
    const int oh = rng.uniform_int(1, 5), ow = rng.uniform_int(1, 5);
    auto x = rand_leaf(rng, Shape::hwc(h, wd, c), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(oh) * ow * c);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, resample_bilinear(t, x, oh, ow), w); }, {x}, rng,
        probes);
  }});

  checks.push_back({"reshape", [probes](Rng& rng) {
    auto x = rand_leaf(rng, Shape::hwc(2, 4, 3), -1, 1);
    const Shape targets[] = {Shape::vec(24), Shape::mat(6, 4), Shape::hwc(4, 2, 3),
                             Shape::mat(24, 1)};
    const Shape& s = targets[rng.uniform_int(0, 3)];
    auto w = rand_weights(rng, 24);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, reshape(t, x, s), w); }, {x}, rng,
                          probes);
  }});

  const auto binary_check = [probes](TensorRef (*op)(Tape&, const TensorRef&, const TensorRef&),
                                     bool guard_denominator) {
    return [probes, op, guard_denominator](Rng& rng) {
      const int m = rng.uniform_int(1, 3), n = rng.uniform_int(1, 4);
      auto a = rand_leaf(rng, Shape::mat(m, n), -1.5, 1.5);
      auto b = guard_denominator
                   ? rand_leaf_away(rng, Shape::mat(m, n), -1.5, 1.5, {0.0}, 0.3)
                   : rand_leaf(rng, Shape::mat(m, n), -1.5, 1.5);
      auto w = rand_weights(rng, static_cast<std::int64_t>(m) * n);
      return fd_max_rel_err([&](Tape& t) { return dot_const(t, op(t, a, b), w); }, {a, b}, rng,
                            probes);
    };
  };
  checks.push_back({"add", binary_check(&add, false)});
  checks.push_back({"sub", binary_check(&sub, false)});
  checks.push_back({"mul", binary_check(&mul, false)});
  checks.push_back({"div", binary_check(&div, true)});

  checks.push_back({"add_const", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    const double c = rng.uniform(-2, 2);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, add_const(t, x, c), w); }, {x},
                          rng, probes);
  }});

  checks.push_back({"mul_const", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    const double c = rng.uniform(-2, 2);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, mul_const(t, x, c), w); }, {x},
                          rng, probes);
  }});

  checks.push_back({"add_constvec", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto c = rand_weights(rng, n);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, add_constvec(t, x, c), w); }, {x},
                          rng, probes);
  }});

  checks.push_back({"mul_constvec", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto c = rand_weights(rng, n);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, mul_constvec(t, x, c), w); }, {x},
                          rng, probes);
  }});

  checks.push_back({"exp", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -2, 2);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, exp(t, x), w); }, {x}, rng,
                          probes);
  }});

  checks.push_back({"sqrt", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), 0.2, 3.0);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, sqrt(t, x), w); }, {x}, rng,
                          probes);
  }});

  checks.push_back({"clamp_min", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    const double floor = rng.uniform(-0.5, 0.5);
    auto x = rand_leaf_away(rng, Shape::vec(n), -1.5, 1.5, {floor}, 1e-3);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, clamp_min(t, x, floor), w); }, {x},
                          rng, probes);
  }});

  checks.push_back({"scale_by", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto alpha = rand_leaf(rng, Shape::vec(1), -1, 1);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, scale_by(t, alpha, x), w); },
                          {alpha, x}, rng, probes);
  }});

  checks.push_back({"add_scaled", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto a = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto alpha = rand_leaf(rng, Shape::vec(1), -1, 1);
    if (rng.bernoulli(0.25)) (*alpha)[0] = 0.0;  // the identity fast path must still differentiate
    auto b = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, add_scaled(t, a, alpha, b), w); },
                          {a, alpha, b}, rng, probes);
  }});

  checks.push_back({"row_l1_normalize", [probes](Rng& rng) {
    const int m = rng.uniform_int(1, 4), n = rng.uniform_int(1, 6);
    auto x = rand_leaf(rng, Shape::mat(m, n), 0.05, 1.0);
    auto w = rand_weights(rng, static_cast<std::int64_t>(m) * n);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, row_l1_normalize(t, x), w); }, {x}, rng, probes);
  }});

  checks.push_back({"gather_rows", [probes](Rng& rng) {
    const int m = rng.uniform_int(2, 5), n = rng.uniform_int(1, 4);
    const int picks = rng.uniform_int(1, 2 * m);
    std::vector<int> idx(static_cast<std::size_t>(picks));
    for (auto& i : idx) i = rng.uniform_int(0, m - 1);  // duplicates accumulate
    auto x = rand_leaf(rng, Shape::mat(m, n), -1, 1);
    auto w = rand_weights(rng, static_cast<std::int64_t>(picks) * n);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, gather_rows(t, x, idx), w); }, {x}, rng, probes);
  }});

  checks.push_back({"select_column", [probes](Rng& rng) {
    const int m = rng.uniform_int(1, 5), n = rng.uniform_int(1, 4);
    const int col = rng.uniform_int(0, n - 1);
    auto x = rand_leaf(rng, Shape::mat(m, n), -1, 1);
    auto w = rand_weights(rng, m);
    return fd_max_rel_err(
        [&](Tape& t) { return dot_const(t, select_column(t, x, col), w); }, {x}, rng, probes);
  }});

  checks.push_back({"dot_const", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 10);
    auto x = rand_leaf(rng, Shape::vec(n), -1, 1);
    auto w = rand_weights(rng, n);
    return fd_max_rel_err([&](Tape& t) { return dot_const(t, x, w); }, {x}, rng, probes);
  }});

  checks.push_back({"smooth_l1_to_const", [probes](Rng& rng) {
    const int n = rng.uniform_int(2, 8);
    auto x = rand_leaf(rng, Shape::vec(n), -2, 2);
    auto target = rand_weights(rng, n);
    const double delta = rng.uniform(0.5, 1.5);
    return fd_max_rel_err(
        [&](Tape& t) { return smooth_l1_to_const(t, x, target, delta); }, {x}, rng, probes);
  }});

  checks.push_back({"attention_stage", [probes](Rng& rng) {
    AttentionConfig cfg;
    cfg.channels = 4;
    cfg.expansion = 2;
    cfg.groups = 4;
    cfg.reduce = 2;
    const int h = 4, wd = 4;
    ParamRegistry params;
    Rng init_rng{rng.next_u64()};
    init_attention_params(params, cfg, init_rng, "attn");
    auto blend = params.get("attn.blend");
    (*blend)[0] = rng.uniform(0.25, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    auto x = rand_leaf(rng, Shape::hwc(h, wd, cfg.channels), -1, 1);
    std::vector<TensorRef> leaves = {x};
    for (const auto& [name, p] : params.items()) leaves.push_back(p);
    auto w = rand_weights(rng, static_cast<std::int64_t>(h) * wd * cfg.channels);
    return fd_max_rel_err(
        [&](Tape& t) {
          return dot_const(t, attention_forward(t, x, params, cfg, "attn").enhanced, w);
        },
        leaves, rng, probes);
  }});

  checks.push_back({"center_focal_loss", [probes](Rng& rng) {
    const int fh = 8, fw = 8, classes = rng.uniform_int(1, 2);
    const int count = rng.uniform_int(1, 3);
    std::vector<SplatPoint> pts;
    for (int i = 0; i < count; ++i)
      pts.push_back({rng.uniform_int(0, fw - 1), rng.uniform_int(0, fh - 1),
                     rng.uniform_int(0, classes - 1), rng.uniform(0.5, 2.0)});
    Tensor target = splat_heatmap(pts, fh, fw, classes);
    auto logits = rand_leaf(rng, Shape::hwc(fh, fw, classes), -3, 3);
    return fd_max_rel_err(
        [&](Tape& t) { return center_focal_loss(t, sigmoid(t, logits), target); }, {logits},
        rng, probes);
  }});

  checks.push_back({"corner_loss", [probes](Rng& rng) {
    const SceneConfig cfg = gradcheck_scene_config();
    const auto scene = generate_scene(rng.next_u64(), cfg);
    const int fh = cfg.targets.feat_h(), fw = cfg.targets.feat_w();
    auto reg = rand_leaf(rng, Shape::hwc(fh, fw, 8), -0.5, 0.5);
    std::vector<std::int64_t> hot;
    for (const auto& c : scene.targets.centers) {
      // keep the angle pair off the renormalization singularity
      double s = 0, co = 0;
      do {
        s = rng.uniform(-0.5, 0.5);
        co = rng.uniform(-0.5, 0.5);
      } while (s * s + co * co < 0.09);
      reg->at(c.cell_y, c.cell_x, 6) = s;
      reg->at(c.cell_y, c.cell_x, 7) = co;
      const std::int64_t base = (static_cast<std::int64_t>(c.cell_y) * fw + c.cell_x) * 8;
      for (int ch = 0; ch < 8; ++ch) hot.push_back(base + ch);
    }
    return fd_max_rel_err(
        [&](Tape& t) { return corner_loss(t, reg, scene.targets, scene.k, cfg.targets).loss; },
        {reg}, rng, probes, {hot});
  }});

  checks.push_back({"relation_mask_loss", [probes](Rng& rng) {
    const SceneConfig cfg = gradcheck_scene_config();
    const auto scene = generate_scene(rng.next_u64(), cfg);
    const int gw = cfg.targets.grid_w(), gh = cfg.targets.grid_h();
    const int d = gw * gh;
    auto scores = rand_leaf(rng, Shape::mat(d, d), -2, 2);
    const bool with_bg = rng.bernoulli(0.5);
    std::vector<std::int64_t> hot;
    for (const auto& c : scene.targets.centers)
      if (c.grid_cell >= 0 && !c.interior.empty())
        for (int j = 0; j < d; ++j) hot.push_back(static_cast<std::int64_t>(c.grid_cell) * d + j);
    if (hot.empty()) return 0.0;  // nothing eligible in this draw
    return fd_max_rel_err(
        [&](Tape& t) {
          RelationMap rel;
          rel.g = row_l1_normalize(t, sigmoid(t, scores));
          rel.grid_w = gw;
          rel.grid_h = gh;
          return relation_mask_loss(t, rel, scene.targets, 2.0, with_bg);
        },
        {scores}, rng, probes, {hot});
  }});

  checks.push_back({"weighted_total", [probes](Rng& rng) {
    auto lc = rand_leaf(rng, Shape::vec(1), 0.1, 2.0);
    auto lr = rand_leaf(rng, Shape::vec(1), 0.1, 2.0);
    auto lm = rand_leaf(rng, Shape::vec(1), 0.1, 2.0);
    LossWeights w;
    w.center = rng.uniform(0.1, 2.0);
    w.corners = rng.uniform(0.1, 2.0);
    const bool with_mask = !rng.bernoulli(0.3);
    w.relation = with_mask ? rng.uniform(0.1, 2.0) : 0.0;
    std::vector<TensorRef> leaves = {lc, lr};
    if (with_mask) leaves.push_back(lm);
    return fd_max_rel_err(
        [&](Tape& t) {
          return weighted_total(t, lc, lr, with_mask ? lm : nullptr, w);
        },
        leaves, rng, probes);
  }});

  return checks;
}

}  // namespace

GradCheckReport run_gradient_checks(const GradCheckOptions& opt) {
  if (opt.trials < 1) throw std::invalid_argument("gradcheck: trials must be positive");
  // tolerance 0 is allowed: the run executes and reports failure on every op
  if (!(opt.tolerance >= 0)) throw std::invalid_argument("gradcheck: tolerance must be non-negative");

  auto checks = build_checks(opt);
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  report.rows.reserve(checks.size());
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    Rng rng{derive_seed(opt.seed, ci)};
    double worst = 0.0;
    for (int t = 0; t < opt.trials; ++t) worst = std::max(worst, checks[ci].trial(rng));
    report.rows.push_back({checks[ci].name, opt.trials, worst});
  }
  return report;
}

}  // namespace mono3d
