#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cct/rng.hpp"
#include "cct/tensor.hpp"

namespace testutil {

inline cct::Tensor random_tensor(std::vector<int> shape, cct::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    cct::Tensor t(std::move(shape));
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

/// Random (B,C,H,W) probability map: positive entries normalized per pixel.
inline cct::Tensor random_probmap(std::vector<int> shape, cct::Rng& rng) {
    cct::Tensor t(std::move(shape));
    const int B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    for (int b = 0; b < B; ++b)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = 0.0;
                for (int c = 0; c < C; ++c) {
                    double v = 0.05 + rng.uniform();
                    t.at(b, c, y, x) = v;
                    s += v;
                }
                for (int c = 0; c < C; ++c) t.at(b, c, y, x) /= s;
            }
    return t;
}

/// Central finite-difference check of an analytic gradient.
/// f: evaluates the scalar objective from the current contents of *x.
/// Returns the worst relative error max |num - ana| / max(1e-8, |num| + |ana|).
inline double fd_check(cct::Tensor& x, const cct::Tensor& analytic_grad,
                       const std::function<double()>& f, double h = 1e-5) {
    double worst = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + h;
        double fp = f();
        x[i] = keep - h;
        double fm = f();
        x[i] = keep;
        double num = (fp - fm) / (2.0 * h);
        double ana = analytic_grad[i];
        double denom = std::max(1e-8, std::abs(num) + std::abs(ana));
        worst = std::max(worst, std::abs(num - ana) / denom);
    }
    return worst;
}

/// Sum of elementwise product (used to reduce a tensor output to a scalar
/// objective with fixed weights so every output element is exercised).
inline double weighted_sum(const cct::Tensor& y, const cct::Tensor& w) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

}  // namespace testutil
