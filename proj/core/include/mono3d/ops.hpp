#pragma once

#include <vector>

#include "mono3d/tape.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Differentiable kernels. Every function validates shapes up front and throws
// std::invalid_argument naming the offending extents; forward results are
// deterministic functions of the inputs. Gradient conventions: relu'(0) = 0,
// clamp passes gradient only where the input was strictly above the floor.

// [m,k] x [k,n] -> [m,n]
TensorRef matmul(Tape& tape, const TensorRef& a, const TensorRef& b);
// [m,n] -> [n,m]
TensorRef transpose(Tape& tape, const TensorRef& x);
// x:[h,w,ci], w:[ci,co], b:[co] -> [h,w,co]; pointwise channel mix.
TensorRef conv1x1(Tape& tape, const TensorRef& x, const TensorRef& w, const TensorRef& b);

TensorRef relu(Tape& tape, const TensorRef& x);
TensorRef sigmoid(Tape& tape, const TensorRef& x);
// tanh applied to a single channel of [h,w,c]; other channels pass through.
TensorRef tanh_channel(Tape& tape, const TensorRef& x, int channel);

// x:[h,w,c] with c divisible by `groups`; per-group standardization followed
// by per-channel affine scale/shift. scale,shift: [c].
TensorRef group_norm(Tape& tape, const TensorRef& x, int groups, const TensorRef& scale,
                     const TensorRef& shift, double eps = 1e-5);

// Bilinear resize of [h,w,c] to [out_h,out_w,c]; half-pixel centers, edge
// clamp. Identity sizes reproduce the input bit for bit.
TensorRef resample_bilinear(Tape& tape, const TensorRef& x, int out_h, int out_w);

TensorRef reshape(Tape& tape, const TensorRef& x, const Shape& s);

TensorRef add(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef sub(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef mul(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef div(Tape& tape, const TensorRef& a, const TensorRef& b);
TensorRef add_const(Tape& tape, const TensorRef& x, double c);
TensorRef mul_const(Tape& tape, const TensorRef& x, double k);
// out_i = x_i + c_i / out_i = x_i * c_i for a constant vector (not
// differentiated through c).
TensorRef add_constvec(Tape& tape, const TensorRef& x, const std::vector<double>& c);
TensorRef mul_constvec(Tape& tape, const TensorRef& x, const std::vector<double>& c);
TensorRef exp(Tape& tape, const TensorRef& x);
TensorRef sqrt(Tape& tape, const TensorRef& x);
TensorRef clamp_min(Tape& tape, const TensorRef& x, double floor);

// alpha is a single-element tensor. scale_by: alpha * x. add_scaled:
// a + alpha * b, exact pass-through of `a` when alpha == 0.
TensorRef scale_by(Tape& tape, const TensorRef& alpha, const TensorRef& x);
TensorRef add_scaled(Tape& tape, const TensorRef& a, const TensorRef& alpha, const TensorRef& b);

// Rows of [m,n] scaled to unit L1 mass: y_ij = x_ij / (sum_j x_ij + eps).
// Intended for non-negative inputs (post-sigmoid scores).
TensorRef row_l1_normalize(Tape& tape, const TensorRef& x, double eps = 1e-12);

// y[r,:] = x[idx[r],:]; duplicate indices accumulate gradient.
TensorRef gather_rows(Tape& tape, const TensorRef& x, const std::vector<int>& idx);
// y[i] = x[i, col]
TensorRef select_column(Tape& tape, const TensorRef& x, int col);

// Scalar readouts.
// sum_i w_i * x_i -> [1]
TensorRef dot_const(Tape& tape, const TensorRef& x, const std::vector<double>& w);
// sum_i huber(x_i - t_i) -> [1], transition width delta:
// |d| <= delta: d^2/(2*delta), else |d| - delta/2.
TensorRef smooth_l1_to_const(Tape& tape, const TensorRef& x, const std::vector<double>& target,
                             double delta);

}  // namespace mono3d
