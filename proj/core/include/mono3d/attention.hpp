#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mono3d/ops.hpp"
#include "mono3d/params.hpp"

namespace mono3d {

// Pairwise-relation feature enhancement. Two projection branches lift the
// backbone map to an expanded width; the inner product of the flattened
// branch outputs, squashed and row-normalized, weights a convex recombination
// of the (spatially reduced) features, which is blended back into the
// backbone map through a learned scalar that starts at zero — so a freshly
// initialized stage is an exact identity.
struct AttentionConfig {
  int channels = 64;         // backbone width C
  int expansion = 4;         // branch width = expansion * C
  int reduce = 2;            // spatial downscale of the working grid
  int groups = 8;            // group count for the branch normalization
  double norm_eps = 1e-5;
  double row_eps = 1e-12;    // row-normalization guard
  double score_temp = 0.5;   // cosine-similarity temperature for the squash

  int expanded() const { return channels * expansion; }
  void validate() const;
};

// Row-stochastic pairwise weight matrix over the d = hi*wi cells of the
// reduced grid; row i says how much each cell contributes to cell i.
struct RelationMap {
  TensorRef g;  // [d, d]
  int grid_w = 0, grid_h = 0;
  int d() const { return grid_w * grid_h; }
};

struct AttentionOut {
  TensorRef enhanced;  // same shape as the backbone input
  RelationMap relation;
};

// Registers conv/norm parameters for both branches plus the blend scalar.
// Weights are uniform in +-1/sqrt(fan_in); norm scale 1, shift 0; blend 0.
void init_attention_params(ParamRegistry& params, const AttentionConfig& cfg, Rng& rng,
                           const std::string& prefix = "attn");

// One projection branch: conv1x1 -> relu -> group_norm -> conv1x1, applied to
// the reduced grid. `branch` selects the parameter set ("a" or "b").
TensorRef attention_branch(Tape& tape, const TensorRef& x, const ParamRegistry& params,
                           const AttentionConfig& cfg, const std::string& prefix,
                           const std::string& branch);

// G = row_l1_normalize(sigmoid(cos(f1, f2) / temp)) for flattened branch
// maps [d, e]. Cosine similarity keeps the squash input bounded, so the
// rows stay trainable no matter how large the branch activations grow.
RelationMap relation_from_branches(Tape& tape, const TensorRef& f1, const TensorRef& f2,
                                   int grid_h, int grid_w, double row_eps,
                                   double score_temp = 0.5);

// Recombines flattened features [d, c] with the relation weights: row i of
// the result is a convex combination of all feature rows.
TensorRef relation_aggregate(Tape& tape, const RelationMap& rel, const TensorRef& flat);

// Full stage on a backbone map [h, w, C]; h and w must be divisible by
// cfg.reduce.
AttentionOut attention_forward(Tape& tape, const TensorRef& backbone, const ParamRegistry& params,
                               const AttentionConfig& cfg, const std::string& prefix = "attn");

// Row of the relation matrix for one reduced-grid cell, as a plain image.
std::vector<double> relation_row(const RelationMap& rel, int cell_flat);

// Total relation mass a row places inside a 0/1 mask over the reduced grid.
double row_mass_in_mask(const RelationMap& rel, int cell_flat, const std::vector<std::uint8_t>& mask);

}  // namespace mono3d
