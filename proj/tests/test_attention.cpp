#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mono3d/attention.hpp"
#include "mono3d/gradcheck.hpp"
#include "mono3d/rng.hpp"

using namespace mono3d;

namespace {

AttentionConfig small_cfg() {
  AttentionConfig cfg;
  cfg.channels = 4;
  cfg.expansion = 2;
  cfg.reduce = 2;
  cfg.groups = 4;
  return cfg;
}

TensorRef random_map(Rng& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
  auto x = make_tensor(Shape::hwc(h, w, c));
  for (std::int64_t i = 0; i < x->size(); ++i) (*x)[i] = rng.uniform(lo, hi);
  return x;
}

}  // namespace

TEST_CASE("config validation") {
  AttentionConfig cfg = small_cfg();
  CHECK_NOTHROW(cfg.validate());
  cfg.groups = 3;  // expanded width 8 not divisible by 3
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cfg();
  cfg.reduce = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("initialization values") {
  const AttentionConfig cfg = small_cfg();
  ParamRegistry params;
  Rng rng{101};
  init_attention_params(params, cfg, rng);
  CHECK((*params.get("attn.blend"))[0] == 0.0);
  for (const char* br : {"a", "b"}) {
    const auto scale = params.get(std::string("attn.") + br + ".norm.scale");
    const auto shift = params.get(std::string("attn.") + br + ".norm.shift");
    for (std::int64_t i = 0; i < scale->size(); ++i) {
      CHECK((*scale)[i] == 1.0);
      CHECK((*shift)[i] == 0.0);
    }
    const auto w1 = params.get(std::string("attn.") + br + ".proj1.w");
    CHECK(w1->shape() == Shape::mat(cfg.channels, cfg.expanded()));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
    for (std::int64_t i = 0; i < w1->size(); ++i) CHECK(std::abs((*w1)[i]) <= bound);
  }
}

TEST_CASE("freshly initialized stage is a bit-exact identity") {
  const AttentionConfig cfg = small_cfg();
  ParamRegistry params;
  Rng rng{7};
  init_attention_params(params, cfg, rng);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_map(rng, 4, 6, cfg.channels, -3.0, 3.0);
    Tape tape;
    const auto out = attention_forward(tape, x, params, cfg);
    CHECK(out.enhanced->values() == x->values());
  }
}

TEST_CASE("branch maps zero input with zero biases to zero") {
  const AttentionConfig cfg = small_cfg();
  ParamRegistry params;
  Rng rng{11};
  init_attention_params(params, cfg, rng);
  for (const char* name : {"attn.a.proj1.b", "attn.a.proj2.b"}) {
    auto b = params.get(name);
    std::fill(b->values().begin(), b->values().end(), 0.0);
  }
  auto x = make_tensor(Shape::hwc(2, 2, cfg.channels), 0.0);
  Tape tape;
  const auto f = attention_branch(tape, x, params, cfg, "attn", "a");
  for (std::int64_t i = 0; i < f->size(); ++i) CHECK((*f)[i] == 0.0);
}

TEST_CASE("relation fixtures") {
  Tape tape;
  SUBCASE("single cell gives the 1x1 identity") {
    auto f = make_tensor(Shape::mat(1, 3), 0.4);
    const auto rel = relation_from_branches(tape, f, f, 1, 1, 1e-12);
    CHECK(rel.d() == 1);
    CHECK((*rel.g)[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero branches give uniform rows") {
    auto f = make_tensor(Shape::mat(6, 4), 0.0);
    const auto rel = relation_from_branches(tape, f, f, 2, 3, 1e-12);
    for (std::int64_t i = 0; i < rel.g->size(); ++i)
      CHECK((*rel.g)[i] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  }
  SUBCASE("rows are stochastic for random branches") {
    Rng rng{13};
    for (int trial = 0; trial < 50; ++trial) {
      auto f1 = make_tensor(Shape::mat(8, 5));
      auto f2 = make_tensor(Shape::mat(8, 5));
      for (std::int64_t i = 0; i < f1->size(); ++i) {
        (*f1)[i] = rng.uniform(-2, 2);
        (*f2)[i] = rng.uniform(-2, 2);
      }
      const auto rel = relation_from_branches(tape, f1, f2, 2, 4, 1e-12);
      for (int r = 0; r < 8; ++r) {
        double sum = 0;
        for (int c = 0; c < 8; ++c) {
          const double g = rel.g->at(r, c);
          CHECK(g >= 0.0);
          CHECK(g <= 1.0);
          sum += g;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("aggregate fixtures") {
  Tape tape;
  SUBCASE("one-hot rows reproduce the input") {
    RelationMap rel;
    rel.grid_h = 2;
    rel.grid_w = 2;
    rel.g = make_tensor(Shape::mat(4, 4));
    for (int i = 0; i < 4; ++i) rel.g->at(i, i) = 1.0;
    auto flat = make_tensor(Shape::mat(4, 3));
    Rng rng{17};
    for (std::int64_t i = 0; i < flat->size(); ++i) (*flat)[i] = rng.uniform(-1, 1);
    CHECK(relation_aggregate(tape, rel, flat)->values() == flat->values());
  }
  SUBCASE("constant features are invariant under any stochastic weighting") {
    Rng rng{19};
    auto f1 = make_tensor(Shape::mat(6, 4));
    auto f2 = make_tensor(Shape::mat(6, 4));
    for (std::int64_t i = 0; i < f1->size(); ++i) {
      (*f1)[i] = rng.uniform(-2, 2);
      (*f2)[i] = rng.uniform(-2, 2);
    }
    const auto rel = relation_from_branches(tape, f1, f2, 2, 3, 1e-12);
    auto flat = make_tensor(Shape::mat(6, 2));
    for (int r = 0; r < 6; ++r) {
      flat->at(r, 0) = 0.25;
      flat->at(r, 1) = -1.5;
    }
    const auto out = relation_aggregate(tape, rel, flat);
    for (int r = 0; r < 6; ++r) {
      CHECK(out->at(r, 0) == doctest::Approx(0.25).epsilon(1e-12));
      CHECK(out->at(r, 1) == doctest::Approx(-1.5).epsilon(1e-12));
    }
  }
  SUBCASE("uniform weights give each row the spatial mean") {
    RelationMap rel;
    rel.grid_h = 2;
    rel.grid_w = 2;
    rel.g = make_tensor(Shape::mat(4, 4), 0.25);
    auto flat = make_tensor(Shape::mat(4, 1));
    for (int r = 0; r < 4; ++r) flat->at(r, 0) = static_cast<double>(r);
    const auto out = relation_aggregate(tape, rel, flat);
    for (int r = 0; r < 4; ++r) CHECK(out->at(r, 0) == doctest::Approx(1.5).epsilon(1e-12));
  }
}

TEST_CASE("identity relation at unit blend doubles the map") {
  // with no spatial reduction, one-hot relation rows hand back the backbone
  // features; blending them in at weight 1 is exactly 2x
  Rng rng{23};
  auto x = random_map(rng, 2, 3, 2);
  Tape tape;
  auto flat = reshape(tape, x, Shape::mat(6, 2));
  RelationMap rel;
  rel.grid_h = 2;
  rel.grid_w = 3;
  rel.g = make_tensor(Shape::mat(6, 6));
  for (int i = 0; i < 6; ++i) rel.g->at(i, i) = 1.0;
  auto agg = reshape(tape, relation_aggregate(tape, rel, flat), x->shape());
  auto blend = make_tensor(Shape::vec(1), 1.0);
  const auto out = add_scaled(tape, x, blend, agg);
  for (std::int64_t i = 0; i < x->size(); ++i)
    CHECK((*out)[i] == doctest::Approx(2.0 * (*x)[i]).epsilon(1e-12));
}

TEST_CASE("aggregated features stay inside per-channel bounds") {
  const AttentionConfig cfg = small_cfg();
  Rng rng{29};
  for (int trial = 0; trial < 50; ++trial) {
    ParamRegistry params;
    init_attention_params(params, cfg, rng);
    (*params.get("attn.blend"))[0] = rng.uniform(-1, 1);
    auto x = random_map(rng, 4, 4, cfg.channels, -2.0, 2.0);
    Tape tape;
    const auto out = attention_forward(tape, x, params, cfg);
    // reduced working grid: per-channel extremes of the resampled map bound
    // every aggregated value because rows are convex weights
    const int gh = 4 / cfg.reduce, gw = 4 / cfg.reduce;
    auto reduced = resample_bilinear(tape, x, gh, gw);
    auto flat = reshape(tape, reduced, Shape::mat(gh * gw, cfg.channels));
    const auto agg = relation_aggregate(tape, out.relation, flat);
    for (int c = 0; c < cfg.channels; ++c) {
      double lo = 1e300, hi = -1e300;
      for (int r = 0; r < gh * gw; ++r) {
        lo = std::min(lo, flat->at(r, c));
        hi = std::max(hi, flat->at(r, c));
      }
      for (int r = 0; r < gh * gw; ++r) {
        CHECK(agg->at(r, c) >= lo - 1e-12);
        CHECK(agg->at(r, c) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("relation_row and row_mass_in_mask") {
  RelationMap rel;
  rel.grid_h = 2;
  rel.grid_w = 2;
  rel.g = make_tensor(Shape::mat(4, 4));
  // row 1 puts 0.7 on cell 0 and 0.3 on cell 3
  rel.g->at(1, 0) = 0.7;
  rel.g->at(1, 3) = 0.3;
  const auto row = relation_row(rel, 1);
  REQUIRE(row.size() == 4);
  CHECK(row[0] == 0.7);
  CHECK(row[3] == 0.3);
  CHECK(row_mass_in_mask(rel, 1, {1, 0, 0, 0}) == doctest::Approx(0.7));
  CHECK(row_mass_in_mask(rel, 1, {0, 1, 1, 1}) == doctest::Approx(0.3));
  CHECK_THROWS_AS((void)row_mass_in_mask(rel, 1, {1, 0}), std::invalid_argument);
}

TEST_CASE("stage gradient matches finite differences") {
  const AttentionConfig cfg = small_cfg();
  ParamRegistry params;
  Rng rng{31};
  init_attention_params(params, cfg, rng);
  (*params.get("attn.blend"))[0] = 0.5;
  auto x = random_map(rng, 4, 4, cfg.channels);
  std::vector<TensorRef> leaves{x};
  for (const auto& [name, p] : params.items()) leaves.push_back(p);
  std::vector<double> w(4 * 4 * cfg.channels);
  for (auto& v : w) v = rng.uniform(-1, 1);
  const auto build = [&](Tape& t) {
    return dot_const(t, attention_forward(t, x, params, cfg).enhanced, w);
  };
  Rng probe_rng{33};
  CHECK(fd_max_rel_err(build, leaves, probe_rng, 4) < 1e-5);
}
