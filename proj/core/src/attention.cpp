#include "mono3d/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "mono3d/check.hpp"

namespace mono3d {

void AttentionConfig::validate() const {
  if (channels <= 0 || expansion <= 0)
    throw std::invalid_argument(cat("attention: bad widths C=", channels, " expansion=", expansion));
  if (reduce <= 0) throw std::invalid_argument(cat("attention: bad reduce factor ", reduce));
  if (groups <= 0 || expanded() % groups != 0)
    throw std::invalid_argument(
        cat("attention: branch width ", expanded(), " not divisible by ", groups, " groups"));
  if (!(score_temp > 0.0))
    throw std::invalid_argument(cat("attention: bad score temperature ", score_temp));
}

namespace {

TensorRef uniform_fan_in(ParamRegistry& params, const std::string& name, const Shape& shape,
                         int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return params.create_uniform(name, shape, rng, -bound, bound);
}

}  // namespace

void init_attention_params(ParamRegistry& params, const AttentionConfig& cfg, Rng& rng,
                           const std::string& prefix) {
  cfg.validate();
  const int c = cfg.channels, e = cfg.expanded();
  for (const char* branch : {"a", "b"}) {
    const std::string base = prefix + "." + branch;
    uniform_fan_in(params, base + ".proj1.w", Shape::mat(c, e), c, rng);
    params.create(base + ".proj1.b", Shape::vec(e));
    params.create(base + ".norm.scale", Shape::vec(e), 1.0);
    params.create(base + ".norm.shift", Shape::vec(e));
    uniform_fan_in(params, base + ".proj2.w", Shape::mat(e, e), e, rng);
    params.create(base + ".proj2.b", Shape::vec(e));
  }
  // The blend scalar starts at zero: the stage contributes nothing until
  // training moves it, so enabling the stage cannot perturb a fresh model.
  params.create(prefix + ".blend", Shape::vec(1));
}

TensorRef attention_branch(Tape& tape, const TensorRef& x, const ParamRegistry& params,
                           const AttentionConfig& cfg, const std::string& prefix,
                           const std::string& branch) {
  const std::string base = prefix + "." + branch;
  auto h1 = conv1x1(tape, x, params.get(base + ".proj1.w"), params.get(base + ".proj1.b"));
  auto h2 = relu(tape, h1);
  auto h3 = group_norm(tape, h2, cfg.groups, params.get(base + ".norm.scale"),
                       params.get(base + ".norm.shift"), cfg.norm_eps);
  return conv1x1(tape, h3, params.get(base + ".proj2.w"), params.get(base + ".proj2.b"));
}

namespace {

// Rows rescaled to unit L2 norm; zero rows stay zero via the norm floor,
// which also keeps their (zero-valued) gradients from blowing up.
TensorRef l2_normalize_rows(Tape& tape, const TensorRef& f) {
  const int e = f->shape()[1];
  auto ones_col = make_tensor(Shape::mat(e, 1), 1.0);
  auto ones_row = make_tensor(Shape::mat(1, e), 1.0);
  auto sq = mul(tape, f, f);
  auto norms = clamp_min(tape, mono3d::sqrt(tape, matmul(tape, sq, ones_col)), 1e-3);
  return div(tape, f, matmul(tape, norms, ones_row));
}

}  // namespace

RelationMap relation_from_branches(Tape& tape, const TensorRef& f1, const TensorRef& f2,
                                   int grid_h, int grid_w, double row_eps, double score_temp) {
  if (!f1 || !f2 || f1->shape().rank != 2 || f1->shape() != f2->shape())
    throw std::invalid_argument(cat("relation: branch shapes ",
                                    f1 ? f1->shape().str() : std::string("null"), " vs ",
                                    f2 ? f2->shape().str() : std::string("null")));
  if (f1->shape()[0] != grid_h * grid_w)
    throw std::invalid_argument(cat("relation: ", f1->shape().str(), " rows vs grid ", grid_h, "x",
                                    grid_w));
  if (!(score_temp > 0.0))
    throw std::invalid_argument(cat("relation: bad score temperature ", score_temp));
  auto scores = matmul(tape, l2_normalize_rows(tape, f1),
                       transpose(tape, l2_normalize_rows(tape, f2)));
  auto squashed = sigmoid(tape, mul_const(tape, scores, 1.0 / score_temp));
  RelationMap rel;
  rel.g = row_l1_normalize(tape, squashed, row_eps);
  rel.grid_w = grid_w;
  rel.grid_h = grid_h;
  return rel;
}

TensorRef relation_aggregate(Tape& tape, const RelationMap& rel, const TensorRef& flat) {
  if (!flat || flat->shape().rank != 2 || flat->shape()[0] != rel.d())
    throw std::invalid_argument(cat("relation_aggregate: features ",
                                    flat ? flat->shape().str() : std::string("null"),
                                    " vs relation over ", rel.d(), " cells"));
  return matmul(tape, rel.g, flat);
}

AttentionOut attention_forward(Tape& tape, const TensorRef& backbone, const ParamRegistry& params,
                               const AttentionConfig& cfg, const std::string& prefix) {
  cfg.validate();
  if (!backbone || backbone->shape().rank != 3 || backbone->shape()[2] != cfg.channels)
    throw std::invalid_argument(cat("attention: backbone ",
                                    backbone ? backbone->shape().str() : std::string("null"),
                                    " does not carry ", cfg.channels, " channels"));
  const int h = backbone->shape()[0], w = backbone->shape()[1];
  if (h % cfg.reduce != 0 || w % cfg.reduce != 0)
    throw std::invalid_argument(
        cat("attention: grid ", h, "x", w, " not divisible by reduce factor ", cfg.reduce));
  const int hi = h / cfg.reduce, wi = w / cfg.reduce;
  const int d = hi * wi;

  auto reduced = resample_bilinear(tape, backbone, hi, wi);
  auto f1 = reshape(tape, attention_branch(tape, reduced, params, cfg, prefix, "a"),
                    Shape::mat(d, cfg.expanded()));
  auto f2 = reshape(tape, attention_branch(tape, reduced, params, cfg, prefix, "b"),
                    Shape::mat(d, cfg.expanded()));
  RelationMap rel = relation_from_branches(tape, f1, f2, hi, wi, cfg.row_eps, cfg.score_temp);

  auto flat = reshape(tape, reduced, Shape::mat(d, cfg.channels));
  auto mixed = relation_aggregate(tape, rel, flat);
  auto mixed_grid = reshape(tape, mixed, Shape::hwc(hi, wi, cfg.channels));
  auto lifted = resample_bilinear(tape, mixed_grid, h, w);

  AttentionOut out;
  out.enhanced = add_scaled(tape, backbone, params.get(prefix + ".blend"), lifted);
  out.relation = rel;
  return out;
}

std::vector<double> relation_row(const RelationMap& rel, int cell_flat) {
  if (!rel.g || cell_flat < 0 || cell_flat >= rel.d())
    throw std::invalid_argument(cat("relation_row: cell ", cell_flat, " outside grid of ",
                                    rel.d(), " cells"));
  std::vector<double> row(static_cast<std::size_t>(rel.d()));
  for (int j = 0; j < rel.d(); ++j) row[static_cast<std::size_t>(j)] = rel.g->at(cell_flat, j);
  return row;
}

double row_mass_in_mask(const RelationMap& rel, int cell_flat,
                        const std::vector<std::uint8_t>& mask) {
  if (static_cast<int>(mask.size()) != rel.d())
    throw std::invalid_argument(cat("row_mass_in_mask: mask holds ", mask.size(), " cells, grid has ",
                                    rel.d()));
  double s = 0.0;
  for (int j = 0; j < rel.d(); ++j)
    if (mask[static_cast<std::size_t>(j)]) s += rel.g->at(cell_flat, j);
  return s;
}

}  // namespace mono3d
