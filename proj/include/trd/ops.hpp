#pragma once

#include <vector>

#include "trd/autodiff.hpp"

namespace trd {
namespace ops {

// ---- elementwise / structural -------------------------------------------

Var add(const Var& a, const Var& b);
// k * a + c, elementwise
Var affine(const Var& a, double k, double c);
inline Var scale(const Var& a, double k) { return affine(a, k, 0.0); }
Var relu(const Var& a);
Var concat_channels(const std::vector<Var>& xs);
// mean over every element -> shape {1}
Var mean_all(const Var& a);
Var add_scalars(const std::vector<Var>& xs);

// ---- convolution stack ----------------------------------------------------

// x: N x Ci x H x W, w: Co x Ci x k x k, b: {Co} (may be null for no bias)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: N x Ci x H x W, w: Ci x Co x k x k (transposed-conv layout), Ho = (H-1)*s - 2p + k
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// gamma/beta: {C}; statistics per (sample, group)
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

// ---- similarity / fusion ---------------------------------------------------

// Per-location cosine of the channel vectors of a and b: N x 1 x H x W in
// [-1,1]. Locations where either vector norm < 1e-8 yield 0 with zero
// gradient.
Var cosine_map(const Var& a, const Var& b);

// (exp(w1)*a + exp(w2)*b) / (exp(w1) + exp(w2)); w1, w2 are {1} scalars.
Var softmax_blend(const Var& a, const Var& b, const Var& w1, const Var& w2);

// ---- value-level helpers (no autograd) -------------------------------------

// shared by the cosine_map op and the scoring path
Tensor cosine_map_values(const Tensor& a, const Tensor& b);
// HxW bilinear resize, half-pixel centers (align_corners = false)
Tensor bilinear_resize_hw(const Tensor& m, int out_h, int out_w);
// Gaussian blur, kernel truncated at 4*sigma, reflect-101 borders
Tensor gaussian_blur_hw(const Tensor& m, double sigma);

}  // namespace ops
}  // namespace trd
