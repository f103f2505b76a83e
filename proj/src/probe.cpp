#include "cct/probe.hpp"

#include <algorithm>
#include <cmath>

#include "cct/nn.hpp"

namespace cct {

Tensor input_smoothness(const Tensor& img, int patch) {
    const int H = img.dim(1), W = img.dim(2);
    const int half = patch / 2;
    // clamp-to-edge padding: windows that spill over the border replicate the
    // edge pixel, so a constant image measures zero everywhere
    auto sample = [&](int c, int y, int x) -> double {
        y = std::min(std::max(y, 0), H - 1);
        x = std::min(std::max(x, 0), W - 1);
        return img.v[(static_cast<size_t>(c) * H + y) * W + x];
    };
    const int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    Tensor out({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int d = 0; d < 8; ++d) {
                int ny = y + dy[d] * patch, nx = x + dx[d] * patch;
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;  // neighbor center out of bounds
                double sq = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int py = -half; py < patch - half; ++py)
                        for (int px = -half; px < patch - half; ++px) {
                            double diff = sample(c, y + py, x + px) - sample(c, ny + py, nx + px);
                            sq += diff * diff;
                        }
                acc += std::sqrt(sq);
                ++n;
            }
            out.v[static_cast<size_t>(y) * W + x] = n ? acc / n : 0.0;
        }
    return out;
}

Tensor feature_smoothness(const Tensor& img, Encoder& enc) {
    const int H = img.dim(1), W = img.dim(2);
    Tensor batched({1, 3, H, W}, img.v);
    Tensor z = enc.forward(batched);
    Tensor up = bilinear_resize(z, H, W);
    const int D = up.dim(1);
    const int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    Tensor out({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int d = 0; d < 8; ++d) {
                int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                double sq = 0.0;
                for (int c = 0; c < D; ++c) {
                    double diff = up.at(0, c, y, x) - up.at(0, c, ny, nx);
                    sq += diff * diff;
                }
                acc += std::sqrt(sq);
                ++n;
            }
            out.v[static_cast<size_t>(y) * W + x] = n ? acc / n : 0.0;
        }
    return out;
}

ProbeStats boundary_stats(const Tensor& smoothness, const LabelBatch& truth) {
    const int H = smoothness.dim(0), W = smoothness.dim(1);
    const int dy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    double sb = 0.0, si = 0.0;
    int64_t nb = 0, ni = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            uint8_t t = truth.at(0, y, x);
            if (t == kIgnore) continue;
            bool boundary = false;
            for (int d = 0; d < 8 && !boundary; ++d) {
                int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                uint8_t u = truth.at(0, ny, nx);
                boundary = u != kIgnore && u != t;
            }
            double v = smoothness.v[static_cast<size_t>(y) * W + x];
            if (boundary) {
                sb += v;
                ++nb;
            } else {
                si += v;
                ++ni;
            }
        }
    ProbeStats st;
    st.mean_boundary = nb ? sb / nb : 0.0;
    st.mean_interior = ni ? si / ni : 0.0;
    st.ratio = st.mean_interior > 0.0 ? st.mean_boundary / st.mean_interior : 0.0;
    return st;
}

Tensor normalize_map(const Tensor& hw) {
    Tensor out = hw;
    double lo = out.v[0], hi = out.v[0];
    for (double v : out.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo)
        for (auto& v : out.v) v = (v - lo) / (hi - lo);
    else
        out.zero();
    return out;
}

}  // namespace cct
