#pragma once

#include <string>
#include <vector>

#include "cct/rng.hpp"
#include "cct/tensor.hpp"

namespace cct {

/// Named view of one trainable array and its gradient buffer.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

/// Same-padding 2-d convolution, stride 1. Weights (out, in, k, k).
/// backward() returns the input gradient; parameter gradients are
/// accumulated into gw/gb unless accum is false.
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 1, pad = 0;
    Tensor w, b, gw, gb;
    Tensor x_;  // cached input from the last forward

    void init(int in, int out, int kernel, Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct ReLU {
    Tensor x_;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy) const;
};

struct LeakyReLU {
    double slope = 0.2;
    Tensor x_;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy) const;
};

/// 2x2 average pooling, stride 2. Requires even spatial dims.
struct AvgPool2 {
    int in_h = 0, in_w = 0;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy) const;
};

/// Adaptive average pooling to a (grid x grid) output.
struct AdaptiveAvgPool {
    int grid = 1;
    int in_h = 0, in_w = 0;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy) const;
};

/// Affine map on (B, in) tensors. Weights (out, in).
struct Linear {
    int in_dim = 0, out_dim = 0;
    Tensor w, b, gw, gb;
    Tensor x_;
    void init(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

// ---- parameter-free ops with explicit adjoints ----

/// out[b, c, i*r+p, j*r+q] = in[b, c*r*r + p*r + q, i, j]
Tensor pixel_shuffle(const Tensor& x, int r);
/// Inverse rearrangement of pixel_shuffle (also the adjoint).
Tensor pixel_unshuffle(const Tensor& x, int r);

/// Bilinear interpolation to (oh, ow), half-pixel-center convention.
Tensor bilinear_resize(const Tensor& x, int oh, int ow);
/// Adjoint of bilinear_resize back to (ih, iw).
Tensor bilinear_resize_backward(const Tensor& gy, int ih, int iw);

/// Nearest-neighbor downsample of a (B,C,H,W) tensor.
Tensor nearest_resize(const Tensor& x, int oh, int ow);

Tensor concat_channels(const std::vector<const Tensor*>& xs);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& widths);

/// Global average pooling (B,C,h,w) -> (B,C); adjoint spreads /(h*w).
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& gy, int h, int w);

/// Channel-wise softmax of (B,C,H,W) logits.
Tensor softmax_channel(const Tensor& logits);
/// Given probs = softmax(logits) and dL/dprobs, return dL/dlogits.
Tensor softmax_channel_backward(const Tensor& probs, const Tensor& gprobs);

Tensor flip_horizontal(const Tensor& x);

}  // namespace cct
