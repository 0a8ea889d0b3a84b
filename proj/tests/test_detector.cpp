#include <doctest.h>

#include <cmath>

#include "mono3d/check.hpp"
#include "mono3d/detector.hpp"
#include "mono3d/rng.hpp"

using namespace mono3d;

namespace {

DetectorConfig small_cfg(bool attention = true) {
  DetectorConfig cfg;
  cfg.targets.image_w = cfg.targets.image_h = 32;
  cfg.stage_channels = {8, 12, 16, 16};
  cfg.head_channels = 32;
  cfg.attention.channels = 16;
  cfg.attention.expansion = 2;
  cfg.attention.groups = 4;
  cfg.attention.reduce = cfg.targets.reduce;
  cfg.use_attention = attention;
  return cfg;
}

SceneConfig small_scenes() {
  SceneConfig cfg;
  cfg.targets.image_w = cfg.targets.image_h = 32;
  cfg.min_objects = 1;
  cfg.max_objects = 2;
  cfg.min_depth = 6.0;
  cfg.max_depth = 19.0;
  return cfg;
}

}  // namespace

TEST_CASE("conv3x3 fixtures") {
  Tape tape;
  SUBCASE("center-tap kernel is the identity") {
    Rng rng{3};
    auto x = make_tensor(Shape::hwc(4, 5, 2));
    for (std::int64_t i = 0; i < x->size(); ++i) (*x)[i] = rng.uniform(-1, 1);
    auto w = make_tensor(Shape::of4(3, 3, 2, 2));
    w->values()[(1 * 3 + 1) * 4 + 0] = 1.0;  // (ky=1, kx=1, ci=0, co=0)
    w->values()[(1 * 3 + 1) * 4 + 3] = 1.0;  // (ky=1, kx=1, ci=1, co=1)
    auto b = make_tensor(Shape::vec(2));
    CHECK(conv3x3(tape, x, w, b, 1)->values() == x->values());
  }
  SUBCASE("all-ones kernel counts the zero-padded neighborhood") {
    auto x = make_tensor(Shape::hwc(3, 3, 1), 1.0);
    auto w = make_tensor(Shape::of4(3, 3, 1, 1), 1.0);
    auto b = make_tensor(Shape::vec(1));
    auto y = conv3x3(tape, x, w, b, 1);
    CHECK(y->at(0, 0, 0) == 4.0);  // corner sees a 2x2 live patch
    CHECK(y->at(0, 1, 0) == 6.0);
    CHECK(y->at(1, 1, 0) == 9.0);
  }
  SUBCASE("stride two halves the grid, rounding up") {
    auto x = make_tensor(Shape::hwc(5, 7, 1), 1.0);
    auto w = make_tensor(Shape::of4(3, 3, 1, 2), 0.1);
    auto b = make_tensor(Shape::vec(2));
    auto y = conv3x3(tape, x, w, b, 2);
    CHECK(y->shape() == Shape::hwc(3, 4, 2));
  }
  auto x = make_tensor(Shape::hwc(3, 3, 2), 1.0);
  auto w = make_tensor(Shape::of4(3, 3, 1, 1), 1.0);  // channel mismatch
  auto b = make_tensor(Shape::vec(1));
  CHECK_THROWS_AS((void)conv3x3(tape, x, w, b, 1), std::invalid_argument);
}

TEST_CASE("head shapes follow the stride law") {
  const DetectorConfig cfg = small_cfg();
  ParamRegistry params;
  Rng rng{5};
  init_detector_params(params, cfg, rng);
  const SyntheticScene scene = generate_scene(1, small_scenes());
  Tape tape;
  const auto heads = detector_forward(tape, scene.image, params, cfg);
  CHECK(heads.heatmap->shape() == Shape::hwc(8, 8, 1));
  CHECK(heads.reg->shape() == Shape::hwc(8, 8, 8));
  REQUIRE(heads.relation.has_value());
  CHECK(heads.relation->grid_w == 4);
  CHECK(heads.relation->grid_h == 4);
  CHECK(heads.relation->g->shape() == Shape::mat(16, 16));
  for (std::int64_t i = 0; i < heads.heatmap->size(); ++i) {
    CHECK((*heads.heatmap)[i] > 0.0);
    CHECK((*heads.heatmap)[i] < 1.0);
  }
  for (int i = 0; i < 64; ++i) {
    const double d = heads.reg->at(i / 8, i % 8, 2);
    CHECK(d >= -1.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("zero blend reproduces the attention-free baseline bit-exactly") {
  const DetectorConfig with = small_cfg(true);
  const DetectorConfig without = small_cfg(false);
  ParamRegistry params;
  Rng rng{7};
  init_detector_params(params, with, rng);  // blend initializes to zero
  const SyntheticScene scene = generate_scene(2, small_scenes());
  Tape ta, tb;
  const auto a = detector_forward(ta, scene.image, params, with);
  const auto b = detector_forward(tb, scene.image, params, without);
  CHECK(a.heatmap->values() == b.heatmap->values());
  CHECK(a.reg->values() == b.reg->values());
  CHECK(a.relation.has_value());
  CHECK_FALSE(b.relation.has_value());
}

TEST_CASE("decode fixtures") {
  DetectorConfig cfg = small_cfg();
  const CameraIntrinsics k{32.0, 32.0, 16.0, 16.0};
  Tensor heat(Shape::hwc(8, 8, 1));
  Tensor reg(Shape::hwc(8, 8, 8));

  SUBCASE("all-background heatmap decodes to nothing") {
    CHECK(decode_detections(heat, reg, k, cfg).empty());
  }
  SUBCASE("single peak decodes through the box codec") {
    heat.at(3, 4, 0) = 0.9;
    reg.at(3, 4, 0) = 0.5;   // x offset
    reg.at(3, 4, 1) = 0.25;  // y offset
    reg.at(3, 4, 2) = -0.2;  // depth code -> 10m
    reg.at(3, 4, 6) = std::sin(0.3);
    reg.at(3, 4, 7) = std::cos(0.3);
    const auto dets = decode_detections(heat, reg, k, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == 0.9);
    CHECK(dets[0].class_id == 0);
    const Box3D& b = dets[0].box;
    // pixel (18, 13) at depth 10 through the pinhole
    const Vec3 c = b.centroid();
    CHECK(c.x == doctest::Approx((18.0 - 16.0) * 10.0 / 32.0).epsilon(1e-9));
    CHECK(c.y == doctest::Approx((13.0 - 16.0) * 10.0 / 32.0).epsilon(1e-9));
    CHECK(c.z == doctest::Approx(10.0).epsilon(1e-9));
    // zero dim codes give the class mean sizes
    CHECK(b.l == doctest::Approx(3.9).epsilon(1e-12));
    CHECK(b.w == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(b.h == doctest::Approx(1.56).epsilon(1e-12));
    // yaw = observation angle + ray azimuth
    const double want_ry = 0.3 + std::atan2(c.x, c.z);
    CHECK(b.ry == doctest::Approx(want_ry).epsilon(1e-9));
  }
  SUBCASE("strict suppression keeps the stronger neighbor only") {
    heat.at(3, 4, 0) = 0.9;
    heat.at(3, 5, 0) = 0.8;
    const auto dets = decode_detections(heat, reg, k, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == 0.9);
  }
  SUBCASE("exact ties go to the lowest flat index") {
    heat.at(3, 4, 0) = 0.9;
    heat.at(3, 5, 0) = 0.9;
    const auto dets = decode_detections(heat, reg, k, cfg);
    REQUIRE(dets.size() == 1);
    // cell (3,4) with zero offsets sits on the optical axis; the losing
    // neighbor (3,5) would land at x = 1.5625
    CHECK(std::abs(dets[0].box.centroid().x) < 1e-12);
  }
  SUBCASE("threshold and top_k cap the list") {
    heat.at(0, 0, 0) = 0.2;  // below the default 0.25
    heat.at(0, 3, 0) = 0.5;
    heat.at(3, 0, 0) = 0.6;
    heat.at(5, 5, 0) = 0.7;
    cfg.top_k = 2;
    const auto dets = decode_detections(heat, reg, k, cfg);
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].score == 0.7);
    CHECK(dets[1].score == 0.6);
  }
  SUBCASE("extreme size codes stay finite") {
    heat.at(3, 4, 0) = 0.9;
    reg.at(3, 4, 3) = 50.0;
    reg.at(3, 4, 4) = -50.0;
    const auto dets = decode_detections(heat, reg, k, cfg);
    REQUIRE(dets.size() == 1);
    CHECK(std::isfinite(dets[0].box.l));
    CHECK(dets[0].box.l == doctest::Approx(3.9 * std::exp(10.0)).epsilon(1e-9));
    CHECK(dets[0].box.w == doctest::Approx(1.6 * std::exp(-10.0)).epsilon(1e-9));
  }
}

TEST_CASE("scene loss terms") {
  const SceneConfig scfg = small_scenes();
  const SyntheticScene scene = generate_scene(3, scfg);
  ParamRegistry params;
  Rng rng{9};
  const DetectorConfig cfg = small_cfg();
  init_detector_params(params, cfg, rng);

  Tape tape;
  const SceneLoss loss = detector_loss(tape, scene, params, cfg, {1, 1, 1});
  REQUIRE(loss.total);
  REQUIRE(loss.center);
  REQUIRE(loss.corners);
  REQUIRE(loss.relation);
  CHECK((*loss.total)[0] == doctest::Approx((*loss.center)[0] + (*loss.corners)[0] +
                                            (*loss.relation)[0]).epsilon(1e-12));
  tape.backward(loss.total);  // reaches every parameter
  for (const auto& [name, p] : params.items()) {
    (void)name;
    CHECK(p->grad_allocated());
  }

  // relation supervision without the relation stage is a configuration error
  Tape t2;
  const DetectorConfig off = small_cfg(false);
  ParamRegistry p2;
  Rng rng2{9};
  init_detector_params(p2, off, rng2);
  CHECK_THROWS_AS((void)detector_loss(t2, scene, p2, off, {1, 1, 1}), std::invalid_argument);
  const SceneLoss unsup = detector_loss(t2, scene, p2, off, {1, 1, 0});
  CHECK(unsup.relation == nullptr);
}

TEST_CASE("training determinism and edge cases") {
  const SceneConfig scfg = small_scenes();
  const auto scenes = generate_dataset(5, 2, scfg);
  const DetectorConfig cfg = small_cfg();

  SUBCASE("zero learning rate leaves parameters unchanged") {
    ParamRegistry params;
    Rng rng{11};
    init_detector_params(params, cfg, rng);
    std::vector<std::vector<double>> before;
    for (const auto& [name, p] : params.items()) before.push_back(p->values());
    TrainConfig tc;
    tc.steps = 3;
    tc.adam.lr = 0.0;
    const auto res = train_detector(params, cfg, scenes, tc);
    std::size_t i = 0;
    for (const auto& [name, p] : params.items()) CHECK(p->values() == before[i++]);
    CHECK(res.curve.size() == 3);
  }

  SUBCASE("identical seeds give identical curves") {
    const auto run = [&] {
      ParamRegistry params;
      Rng rng{13};
      init_detector_params(params, cfg, rng);
      TrainConfig tc;
      tc.steps = 5;
      return train_detector(params, cfg, scenes, tc);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].total == b.curve[i].total);
      CHECK(a.curve[i].center == b.curve[i].center);
    }
  }

  SUBCASE("learning-rate schedule drops at the configured fractions") {
    ParamRegistry params;
    Rng rng{15};
    init_detector_params(params, cfg, rng);
    TrainConfig tc;
    tc.steps = 8;
    tc.adam.lr = 1e-3;
    const auto res = train_detector(params, cfg, scenes, tc);
    CHECK(res.curve.front().step == 0);
    CHECK(res.curve.back().step == 7);
    CHECK(res.first_total == res.curve.front().total);
    CHECK(res.last_total == res.curve.back().total);
  }

  SUBCASE("poisoned parameters raise a divergence error") {
    ParamRegistry params;
    Rng rng{17};
    init_detector_params(params, cfg, rng);
    // poison past the relu stages: a NaN head bias reaches the loss directly
    (*params.get("head.cls.b"))[0] = std::nan("");
    TrainConfig tc;
    tc.steps = 2;
    CHECK_THROWS_AS((void)train_detector(params, cfg, scenes, tc), DivergenceError);
  }

  SUBCASE("empty inputs are rejected") {
    ParamRegistry params;
    Rng rng{19};
    init_detector_params(params, cfg, rng);
    TrainConfig tc;
    CHECK_THROWS_AS((void)train_detector(params, cfg, {}, tc), std::invalid_argument);
    tc.steps = 0;
    CHECK_THROWS_AS((void)train_detector(params, cfg, scenes, tc), std::invalid_argument);
  }
}

TEST_CASE("matched iou starts low but is well-defined") {
  const auto scenes = generate_dataset(23, 2, small_scenes());
  ParamRegistry params;
  Rng rng{21};
  const DetectorConfig cfg = small_cfg();
  init_detector_params(params, cfg, rng);
  const double iou = mean_matched_iou3d(params, cfg, scenes);
  CHECK(iou >= 0.0);
  CHECK(iou <= 1.0);
}
