#include "mono3d/detector.hpp"

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

}  // namespace

TensorRef conv3x3(Tape& tape, const TensorRef& x, const TensorRef& w, const TensorRef& b,
                  int stride) {
  require_rank(x, 3, "conv3x3");
  require_rank(b, 1, "conv3x3");
  require(w && w->shape().rank == 4 && w->shape()[0] == 3 && w->shape()[1] == 3,
          cat("conv3x3: weight must be [3,3,ci,co], got ", w ? w->shape().str() : std::string("null")));
  require(stride == 1 || stride == 2, cat("conv3x3: unsupported stride ", stride));
  const int h = x->shape()[0], wd = x->shape()[1], ci = x->shape()[2];
  const int co = w->shape()[3];
  require(w->shape()[2] == ci,
          cat("conv3x3: weight ", w->shape().str(), " does not match input channels ", ci));
  require(b->shape()[0] == co,
          cat("conv3x3: bias ", b->shape().str(), " does not match output channels ", co));
  const int oh = (h + stride - 1) / stride;
  const int ow = (wd + stride - 1) / stride;
  auto out = make_tensor(Shape::hwc(oh, ow, co));
  const double* xv = x->data();
  const double* wv = w->data();
  const double* bv = b->data();
  double* ov = out->data();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      double* orow = ov + (static_cast<std::size_t>(oy) * ow + ox) * co;
      for (int o = 0; o < co; ++o) orow[o] = bv[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= wd) continue;
          const double* xrow = xv + (static_cast<std::size_t>(iy) * wd + ix) * ci;
          const double* wtap = wv + ((static_cast<std::size_t>(ky) * 3 + kx) * ci) * co;
          for (int i = 0; i < ci; ++i) {
            const double xi = xrow[i];
            const double* wrow = wtap + static_cast<std::size_t>(i) * co;
            for (int o = 0; o < co; ++o) orow[o] += xi * wrow[o];
          }
        }
      }
    }
  tape.record([x, w, b, out, h, wd, ci, co, oh, ow, stride] {
    const auto& go = out->grad();
    auto& gx = x->grad();
    auto& gw = w->grad();
    auto& gb = b->grad();
    const double* xv = x->data();
    const double* wv = w->data();
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double* grow = go.data() + (static_cast<std::size_t>(oy) * ow + ox) * co;
        for (int o = 0; o < co; ++o) gb[static_cast<std::size_t>(o)] += grow[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= wd) continue;
            const double* xrow = xv + (static_cast<std::size_t>(iy) * wd + ix) * ci;
            double* gxrow = gx.data() + (static_cast<std::size_t>(iy) * wd + ix) * ci;
            const double* wtap = wv + ((static_cast<std::size_t>(ky) * 3 + kx) * ci) * co;
            double* gwtap = gw.data() + ((static_cast<std::size_t>(ky) * 3 + kx) * ci) * co;
            for (int i = 0; i < ci; ++i) {
              const double xi = xrow[i];
              const double* wrow = wtap + static_cast<std::size_t>(i) * co;
              double* gwrow = gwtap + static_cast<std::size_t>(i) * co;
              double s = 0.0;
              for (int o = 0; o < co; ++o) {
                s += wrow[o] * grow[o];
                gwrow[o] += xi * grow[o];
              }
              gxrow[i] += s;
            }
          }
        }
      }
  });
  return out;
}

namespace {
constexpr int kStageStride[4] = {1, 2, 1, 2};
}

void DetectorConfig::validate() const {
  targets.validate();
  if (targets.stride != 4)
    throw std::invalid_argument(
        cat("detector: backbone reduces by 4 but target stride is ", targets.stride));
  for (int c : stage_channels)
    if (c <= 0) throw std::invalid_argument("detector: non-positive stage width");
  if (head_channels <= 0) throw std::invalid_argument("detector: non-positive head width");
  if (attention.channels != stage_channels[3])
    throw std::invalid_argument(cat("detector: relation stage expects ", attention.channels,
                                    " channels but the backbone ends at ", stage_channels[3]));
  if (attention.reduce != targets.reduce)
    throw std::invalid_argument(cat("detector: relation reduce ", attention.reduce,
                                    " vs target grid reduce ", targets.reduce));
  if (use_attention) attention.validate();
  if (!(score_threshold > 0.0 && score_threshold < 1.0))
    throw std::invalid_argument(cat("detector: score threshold ", score_threshold,
                                    " outside (0,1)"));
  if (top_k <= 0) throw std::invalid_argument(cat("detector: non-positive top_k ", top_k));
}

void init_detector_params(ParamRegistry& params, const DetectorConfig& cfg, Rng& rng) {
  cfg.validate();
  int ci = 3;
  for (int s = 0; s < 4; ++s) {
    const int co = cfg.stage_channels[static_cast<std::size_t>(s)];
    const double bound = 1.0 / std::sqrt(9.0 * ci);
    params.create_uniform(cat("backbone.s", s, ".w"), Shape::of4(3, 3, ci, co), rng, -bound, bound);
    params.create(cat("backbone.s", s, ".b"), Shape::vec(co));
    ci = co;
  }
  if (cfg.use_attention) init_attention_params(params, cfg.attention, rng);
  {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ci));
    params.create_uniform("neck.w", Shape::mat(ci, cfg.head_channels), rng, -bound, bound);
    params.create("neck.b", Shape::vec(cfg.head_channels));
  }
  const double hb = 1.0 / std::sqrt(static_cast<double>(cfg.head_channels));
  params.create_uniform("head.cls.w", Shape::mat(cfg.head_channels, cfg.targets.classes), rng, -hb,
                        hb);
  // Biasing the heatmap low keeps the focal loss stable on the first steps.
  params.create("head.cls.b", Shape::vec(cfg.targets.classes), cfg.heatmap_bias);
  params.create_uniform("head.reg.w", Shape::mat(cfg.head_channels, 8), rng, -hb, hb);
  params.create("head.reg.b", Shape::vec(8));
}

HeadOutputs detector_forward(Tape& tape, const Tensor& image, const ParamRegistry& params,
                             const DetectorConfig& cfg) {
  cfg.validate();
  if (image.shape().rank != 3 || image.shape()[2] != 3 ||
      image.shape()[0] != cfg.targets.image_h || image.shape()[1] != cfg.targets.image_w)
    throw std::invalid_argument(cat("detector: image ", image.shape().str(), " does not match ",
                                    cfg.targets.image_h, "x", cfg.targets.image_w, "x3"));
  auto x = std::make_shared<Tensor>(image);
  TensorRef feat = x;
  for (int s = 0; s < 4; ++s) {
    feat = conv3x3(tape, feat, params.get(cat("backbone.s", s, ".w")),
                   params.get(cat("backbone.s", s, ".b")), kStageStride[s]);
    feat = relu(tape, feat);
  }

  HeadOutputs out;
  if (cfg.use_attention) {
    AttentionOut att = attention_forward(tape, feat, params, cfg.attention);
    feat = att.enhanced;
    out.relation = att.relation;
  }

  auto neck = relu(tape, conv1x1(tape, feat, params.get("neck.w"), params.get("neck.b")));
  out.heatmap =
      sigmoid(tape, conv1x1(tape, neck, params.get("head.cls.w"), params.get("head.cls.b")));
  out.reg = tanh_channel(
      tape, conv1x1(tape, neck, params.get("head.reg.w"), params.get("head.reg.b")), 2);
  return out;
}

std::vector<Detection> decode_detections(const Tensor& heatmap, const Tensor& reg,
                                         const CameraIntrinsics& k, const DetectorConfig& cfg) {
  cfg.validate();
  const int fh = cfg.targets.feat_h(), fw = cfg.targets.feat_w(), classes = cfg.targets.classes;
  if (heatmap.shape().rank != 3 || heatmap.shape()[0] != fh || heatmap.shape()[1] != fw ||
      heatmap.shape()[2] != classes)
    throw std::invalid_argument(cat("decode: heatmap ", heatmap.shape().str(), " does not match ",
                                    fh, "x", fw, "x", classes));
  if (reg.shape().rank != 3 || reg.shape()[0] != fh || reg.shape()[1] != fw || reg.shape()[2] != 8)
    throw std::invalid_argument(cat("decode: regression map ", reg.shape().str(),
                                    " does not match ", fh, "x", fw, "x8"));

  struct Peak {
    double score;
    int flat, cls;
  };
  std::vector<Peak> peaks;
  for (int c = 0; c < classes; ++c)
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < fw; ++x) {
        const double v = heatmap.at(y, x, c);
        if (v < cfg.score_threshold) continue;
        const int flat = y * fw + x;
        bool is_peak = true;
        for (int dy = -1; dy <= 1 && is_peak; ++dy)
          for (int dx = -1; dx <= 1 && is_peak; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= fh || nx < 0 || nx >= fw) continue;
            const double nv = heatmap.at(ny, nx, c);
            // Equal-valued plateaus keep only the lowest flat index.
            if (nv > v || (nv == v && ny * fw + nx < flat)) is_peak = false;
          }
        if (is_peak) peaks.push_back({v, flat, c});
      }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.flat != b.flat) return a.flat < b.flat;
    return a.cls < b.cls;
  });
  if (static_cast<int>(peaks.size()) > cfg.top_k) peaks.resize(static_cast<std::size_t>(cfg.top_k));

  std::vector<Detection> out;
  out.reserve(peaks.size());
  for (const Peak& p : peaks) {
    const int cy = p.flat / fw, cx = p.flat % fw;
    const double xo = reg.at(cy, cx, 0), yo = reg.at(cy, cx, 1);
    const double depth =
        std::max(cfg.targets.decode_min_depth, cfg.targets.depth.decode(reg.at(cy, cx, 2)));
    const Vec3 centroid = recover_centroid(cx, cy, xo, yo, depth, k, cfg.targets.stride);
    const auto& mean = cfg.targets.mean_dims[static_cast<std::size_t>(p.cls)];
    // Log ratios are clamped so an untrained head cannot emit infinities.
    const auto safe_exp = [](double v) { return std::exp(std::clamp(v, -10.0, 10.0)); };
    Detection d;
    d.class_id = p.cls;
    d.score = p.score;
    d.box.l = mean[0] * safe_exp(reg.at(cy, cx, 3));
    d.box.w = mean[1] * safe_exp(reg.at(cy, cx, 4));
    d.box.h = mean[2] * safe_exp(reg.at(cy, cx, 5));
    const AngleCode ac{reg.at(cy, cx, 6), reg.at(cy, cx, 7)};
    d.box.cx = centroid.x;
    d.box.cy = centroid.y + 0.5 * d.box.h;
    d.box.cz = centroid.z;
    d.box.ry = obs_to_yaw(ac.decode(), centroid.x, centroid.z);
    out.push_back(d);
  }
  return out;
}

std::vector<Detection> decode_detections(const HeadOutputs& heads, const CameraIntrinsics& k,
                                         const DetectorConfig& cfg) {
  if (!heads.heatmap || !heads.reg)
    throw std::invalid_argument("decode: empty head outputs");
  return decode_detections(*heads.heatmap, *heads.reg, k, cfg);
}

SceneLoss detector_loss(Tape& tape, const SyntheticScene& scene, const ParamRegistry& params,
                        const DetectorConfig& cfg, const LossWeights& weights,
                        bool mask_background) {
  weights.validate();
  HeadOutputs heads = detector_forward(tape, scene.image, params, cfg);
  SceneLoss out;
  out.center = center_focal_loss(tape, heads.heatmap, scene.targets.heatmap);
  CornerLossOut corner = corner_loss(tape, heads.reg, scene.targets, scene.k, cfg.targets);
  out.corners = corner.loss;
  out.depth_clamps = corner.depth_clamps;
  LossWeights w = weights;
  if (weights.relation != 0.0) {
    if (!heads.relation)
      throw std::invalid_argument(
          "detector_loss: relation supervision requested without the relation stage");
    out.relation = relation_mask_loss(tape, *heads.relation, scene.targets, 2.0, mask_background);
  }
  if (!out.relation) w.relation = 0.0;  // nothing eligible this scene
  out.total = weighted_total(tape, out.center, out.corners, out.relation, w);
  return out;
}

TrainResult train_detector(ParamRegistry& params, const DetectorConfig& cfg,
                           const std::vector<SyntheticScene>& scenes, const TrainConfig& tc) {
  cfg.validate();
  tc.weights.validate();
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  if (tc.steps <= 0) throw std::invalid_argument(cat("train: bad step count ", tc.steps));

  Adam opt(tc.adam);
  TrainResult res;
  const int d1 = static_cast<int>(tc.drop1 * tc.steps);
  const int d2 = static_cast<int>(tc.drop2 * tc.steps);
  for (int step = 0; step < tc.steps; ++step) {
    if (step == d1 || step == d2) opt.set_lr(opt.lr() * 0.1);
    const SyntheticScene& scene = scenes[static_cast<std::size_t>(step) % scenes.size()];
    Tape tape;
    SceneLoss loss = detector_loss(tape, scene, params, cfg, tc.weights, tc.mask_background);
    const double total = (*loss.total)[0];
    if (!std::isfinite(total))
      throw DivergenceError(step, cat("train: non-finite loss at step ", step));
    res.depth_clamps += loss.depth_clamps;
    if (tc.weights.relation != 0.0 && !loss.relation) ++res.steps_without_mask;
    if (step == 0) res.first_total = total;
    res.last_total = total;
    if (tc.log_every > 0 && (step % tc.log_every == 0 || step + 1 == tc.steps)) {
      TrainLogRow row;
      row.step = step;
      row.center = (*loss.center)[0];
      row.corners = (*loss.corners)[0];
      row.relation = loss.relation ? (*loss.relation)[0] : 0.0;
      row.total = total;
      res.curve.push_back(row);
    }
    tape.backward(loss.total);
    opt.step(params);
  }
  return res;
}

double mean_matched_iou3d(const ParamRegistry& params, const DetectorConfig& cfg,
                          const std::vector<SyntheticScene>& scenes) {
  if (scenes.empty()) throw std::invalid_argument("mean_matched_iou3d: no scenes");
  double sum = 0.0;
  int count = 0;
  for (const SyntheticScene& scene : scenes) {
    Tape tape;  // throwaway: forward only
    HeadOutputs heads = detector_forward(tape, scene.image, params, cfg);
    const auto dets = decode_detections(heads, scene.k, cfg);
    for (const SceneObject& gt : scene.objects) {
      double best = 0.0;
      for (const Detection& d : dets)
        if (d.class_id == gt.class_id) best = std::max(best, iou_3d(d.box, gt.box));
      sum += best;
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace mono3d
