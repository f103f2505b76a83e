#include "cct/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cct {

namespace {
void check_4d(const Tensor& x) {
    if (x.rank() != 4) throw std::runtime_error("expected 4-d tensor, got " + shape_str(x.shape));
}
}  // namespace

// ---------------- Conv2d ----------------

void Conv2d::init(int in, int out, int kernel, Rng& rng) {
    in_ch = in;
    out_ch = out;
    k = kernel;
    pad = kernel / 2;
    w = Tensor({out, in, k, k});
    b = Tensor({out});
    gw = Tensor(w.shape);
    gb = Tensor(b.shape);
    // He-normal weights; small positive biases keep narrow ReLU stages from
    // dying wholesale early in training
    double std = std::sqrt(2.0 / (in * k * k));
    for (auto& x : w.v) x = rng.normal() * std;
    b.fill(0.05);
}

Tensor Conv2d::forward(const Tensor& x) {
    check_4d(x);
    if (x.dim(1) != in_ch)
        throw std::runtime_error("conv: channel mismatch " + shape_str(x.shape));
    x_ = x;
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor y({B, out_ch, H, W});
    for (int bi = 0; bi < B; ++bi) {
        for (int co = 0; co < out_ch; ++co) {
            double* yp = &y.at(bi, co, 0, 0);
            const double bias = b[co];
            for (int i = 0; i < H * W; ++i) yp[i] = bias;
            for (int ci = 0; ci < in_ch; ++ci) {
                const double* xp = &x.at(bi, ci, 0, 0);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = w.at(co, ci, ky, kx);
                        if (wv == 0.0) continue;
                        const int dy = ky - pad, dx = kx - pad;
                        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        for (int yy = y0; yy < y1; ++yy) {
                            double* yrow = yp + yy * W;
                            const double* xrow = xp + (yy + dy) * W + dx;
                            for (int xx = x0; xx < x1; ++xx) yrow[xx] += wv * xrow[xx];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy, bool accum) {
    const Tensor& x = x_;
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor gx(x.shape);
    for (int bi = 0; bi < B; ++bi) {
        for (int co = 0; co < out_ch; ++co) {
            const double* gp = &gy.at(bi, co, 0, 0);
            if (accum) {
                double s = 0.0;
                for (int i = 0; i < H * W; ++i) s += gp[i];
                gb[co] += s;
            }
            for (int ci = 0; ci < in_ch; ++ci) {
                const double* xp = &x.at(bi, ci, 0, 0);
                double* gxp = &gx.at(bi, ci, 0, 0);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const int dy = ky - pad, dx = kx - pad;
                        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        const double wv = w.at(co, ci, ky, kx);
                        double gwv = 0.0;
                        for (int yy = y0; yy < y1; ++yy) {
                            const double* grow = gp + yy * W;
                            const double* xrow = xp + (yy + dy) * W + dx;
                            double* gxrow = gxp + (yy + dy) * W + dx;
                            for (int xx = x0; xx < x1; ++xx) {
                                gwv += grow[xx] * xrow[xx];
                                gxrow[xx] += wv * grow[xx];
                            }
                        }
                        if (accum) gw.at(co, ci, ky, kx) += gwv;
                    }
                }
            }
        }
    }
    return gx;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
}

// ---------------- activations ----------------

Tensor ReLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor ReLU::backward(const Tensor& gy) const {
    Tensor gx(gy.shape);
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] = x_[i] > 0.0 ? gy[i] : 0.0;
    return gx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
    return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) const {
    Tensor gx(gy.shape);
    for (int64_t i = 0; i < gy.size(); ++i) gx[i] = x_[i] > 0.0 ? gy[i] : slope * gy[i];
    return gx;
}

// ---------------- pooling ----------------

Tensor AvgPool2::forward(const Tensor& x) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw std::runtime_error("avgpool2: odd spatial dims");
    in_h = H;
    in_w = W;
    Tensor y({B, C, H / 2, W / 2});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int yy = 0; yy < H / 2; ++yy)
                for (int xx = 0; xx < W / 2; ++xx)
                    y.at(bi, c, yy, xx) =
                        0.25 * (x.at(bi, c, 2 * yy, 2 * xx) + x.at(bi, c, 2 * yy, 2 * xx + 1) +
                                x.at(bi, c, 2 * yy + 1, 2 * xx) + x.at(bi, c, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Tensor AvgPool2::backward(const Tensor& gy) const {
    const int B = gy.dim(0), C = gy.dim(1), H = in_h, W = in_w;
    Tensor gx({B, C, H, W});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int yy = 0; yy < H / 2; ++yy)
                for (int xx = 0; xx < W / 2; ++xx) {
                    double g = 0.25 * gy.at(bi, c, yy, xx);
                    gx.at(bi, c, 2 * yy, 2 * xx) = g;
                    gx.at(bi, c, 2 * yy, 2 * xx + 1) = g;
                    gx.at(bi, c, 2 * yy + 1, 2 * xx) = g;
                    gx.at(bi, c, 2 * yy + 1, 2 * xx + 1) = g;
                }
    return gx;
}

Tensor AdaptiveAvgPool::forward(const Tensor& x) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    in_h = H;
    in_w = W;
    Tensor y({B, C, grid, grid});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int gy_ = 0; gy_ < grid; ++gy_) {
                int y0 = gy_ * H / grid, y1 = ((gy_ + 1) * H + grid - 1) / grid;
                for (int gx_ = 0; gx_ < grid; ++gx_) {
                    int x0 = gx_ * W / grid, x1 = ((gx_ + 1) * W + grid - 1) / grid;
                    double s = 0.0;
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) s += x.at(bi, c, yy, xx);
                    y.at(bi, c, gy_, gx_) = s / ((y1 - y0) * (x1 - x0));
                }
            }
    return y;
}

Tensor AdaptiveAvgPool::backward(const Tensor& gy) const {
    const int B = gy.dim(0), C = gy.dim(1), H = in_h, W = in_w;
    Tensor gx({B, C, H, W});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int gy_ = 0; gy_ < grid; ++gy_) {
                int y0 = gy_ * H / grid, y1 = ((gy_ + 1) * H + grid - 1) / grid;
                for (int gx_ = 0; gx_ < grid; ++gx_) {
                    int x0 = gx_ * W / grid, x1 = ((gx_ + 1) * W + grid - 1) / grid;
                    double g = gy.at(bi, c, gy_, gx_) / ((y1 - y0) * (x1 - x0));
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) gx.at(bi, c, yy, xx) += g;
                }
            }
    return gx;
}

// ---------------- Linear ----------------

void Linear::init(int in, int out, Rng& rng) {
    in_dim = in;
    out_dim = out;
    w = Tensor({out, in});
    b = Tensor({out});
    gw = Tensor(w.shape);
    gb = Tensor(b.shape);
    double std = std::sqrt(2.0 / in);
    for (auto& x : w.v) x = rng.normal() * std;
}

Tensor Linear::forward(const Tensor& x) {
    x_ = x;
    const int B = x.dim(0);
    Tensor y({B, out_dim});
    for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < out_dim; ++o) {
            double s = b[o];
            for (int i = 0; i < in_dim; ++i) s += w[o * in_dim + i] * x[bi * in_dim + i];
            y[bi * out_dim + o] = s;
        }
    return y;
}

Tensor Linear::backward(const Tensor& gy, bool accum) {
    const int B = x_.dim(0);
    Tensor gx(x_.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < out_dim; ++o) {
            double g = gy[bi * out_dim + o];
            if (accum) gb[o] += g;
            for (int i = 0; i < in_dim; ++i) {
                if (accum) gw[o * in_dim + i] += g * x_[bi * in_dim + i];
                gx[bi * in_dim + i] += g * w[o * in_dim + i];
            }
        }
    return gx;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
}

// ---------------- parameter-free ops ----------------

Tensor pixel_shuffle(const Tensor& x, int r) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % (r * r) != 0)
        throw std::runtime_error("pixel_shuffle: channels not divisible by r^2");
    const int Co = C / (r * r);
    Tensor y({B, Co, H * r, W * r});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < Co; ++c)
            for (int p = 0; p < r; ++p)
                for (int q = 0; q < r; ++q)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < W; ++j)
                            y.at(bi, c, i * r + p, j * r + q) = x.at(bi, c * r * r + p * r + q, i, j);
    return y;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % r || W % r) throw std::runtime_error("pixel_unshuffle: dims not divisible by r");
    Tensor y({B, C * r * r, H / r, W / r});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < r; ++p)
                for (int q = 0; q < r; ++q)
                    for (int i = 0; i < H / r; ++i)
                        for (int j = 0; j < W / r; ++j)
                            y.at(bi, c * r * r + p * r + q, i, j) = x.at(bi, c, i * r + p, j * r + q);
    return y;
}

namespace {
struct Lerp {
    int i0, i1;
    double w0, w1;
};

Lerp lerp_coord(int o, int osz, int isz) {
    double src = (o + 0.5) * static_cast<double>(isz) / osz - 0.5;
    if (src < 0) src = 0;
    if (src > isz - 1) src = isz - 1;
    Lerp l;
    l.i0 = static_cast<int>(std::floor(src));
    l.i1 = std::min(l.i0 + 1, isz - 1);
    l.w1 = src - l.i0;
    l.w0 = 1.0 - l.w1;
    return l;
}
}  // namespace

Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (oh == H && ow == W) return x;
    std::vector<Lerp> ly(oh), lx(ow);
    for (int i = 0; i < oh; ++i) ly[i] = lerp_coord(i, oh, H);
    for (int j = 0; j < ow; ++j) lx[j] = lerp_coord(j, ow, W);
    Tensor y({B, C, oh, ow});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const Lerp &a = ly[i], &bq = lx[j];
                    y.at(bi, c, i, j) = a.w0 * (bq.w0 * x.at(bi, c, a.i0, bq.i0) + bq.w1 * x.at(bi, c, a.i0, bq.i1)) +
                                        a.w1 * (bq.w0 * x.at(bi, c, a.i1, bq.i0) + bq.w1 * x.at(bi, c, a.i1, bq.i1));
                }
    return y;
}

Tensor bilinear_resize_backward(const Tensor& gy, int ih, int iw) {
    check_4d(gy);
    const int B = gy.dim(0), C = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
    if (OH == ih && OW == iw) return gy;
    std::vector<Lerp> ly(OH), lx(OW);
    for (int i = 0; i < OH; ++i) ly[i] = lerp_coord(i, OH, ih);
    for (int j = 0; j < OW; ++j) lx[j] = lerp_coord(j, OW, iw);
    Tensor gx({B, C, ih, iw});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < OH; ++i)
                for (int j = 0; j < OW; ++j) {
                    const Lerp &a = ly[i], &bq = lx[j];
                    double g = gy.at(bi, c, i, j);
                    gx.at(bi, c, a.i0, bq.i0) += a.w0 * bq.w0 * g;
                    gx.at(bi, c, a.i0, bq.i1) += a.w0 * bq.w1 * g;
                    gx.at(bi, c, a.i1, bq.i0) += a.w1 * bq.w0 * g;
                    gx.at(bi, c, a.i1, bq.i1) += a.w1 * bq.w1 * g;
                }
    return gx;
}

Tensor nearest_resize(const Tensor& x, int oh, int ow) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, C, oh, ow});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < oh; ++i) {
                int si = std::min(H - 1, static_cast<int>(i * static_cast<double>(H) / oh));
                for (int j = 0; j < ow; ++j) {
                    int sj = std::min(W - 1, static_cast<int>(j * static_cast<double>(W) / ow));
                    y.at(bi, c, i, j) = x.at(bi, c, si, sj);
                }
            }
    return y;
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
    const int B = xs[0]->dim(0), H = xs[0]->dim(2), W = xs[0]->dim(3);
    int C = 0;
    for (auto* x : xs) C += x->dim(1);
    Tensor y({B, C, H, W});
    int off = 0;
    for (auto* x : xs) {
        for (int bi = 0; bi < B; ++bi)
            for (int c = 0; c < x->dim(1); ++c)
                std::copy_n(&x->at(bi, c, 0, 0), H * W, &y.at(bi, off + c, 0, 0));
        off += x->dim(1);
    }
    return y;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& widths) {
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    std::vector<Tensor> out;
    int off = 0;
    for (int wc : widths) {
        Tensor t({B, wc, H, W});
        for (int bi = 0; bi < B; ++bi)
            for (int c = 0; c < wc; ++c)
                std::copy_n(&x.at(bi, off + c, 0, 0), H * W, &t.at(bi, c, 0, 0));
        off += wc;
        out.push_back(std::move(t));
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({B, C});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            const double* p = &x.at(bi, c, 0, 0);
            for (int i = 0; i < H * W; ++i) s += p[i];
            y[bi * C + c] = s / (H * W);
        }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, int h, int w) {
    const int B = gy.dim(0), C = gy.dim(1);
    Tensor gx({B, C, h, w});
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            double g = gy[bi * C + c] / (h * w);
            double* p = &gx.at(bi, c, 0, 0);
            for (int i = 0; i < h * w; ++i) p[i] = g;
        }
    return gx;
}

Tensor softmax_channel(const Tensor& logits) {
    check_4d(logits);
    const int B = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Tensor p(logits.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                double mx = logits.at(bi, 0, i, j);
                for (int c = 1; c < C; ++c) mx = std::max(mx, logits.at(bi, c, i, j));
                double s = 0.0;
                for (int c = 0; c < C; ++c) {
                    double e = std::exp(logits.at(bi, c, i, j) - mx);
                    p.at(bi, c, i, j) = e;
                    s += e;
                }
                for (int c = 0; c < C; ++c) p.at(bi, c, i, j) /= s;
            }
    return p;
}

Tensor softmax_channel_backward(const Tensor& probs, const Tensor& gprobs) {
    const int B = probs.dim(0), C = probs.dim(1), H = probs.dim(2), W = probs.dim(3);
    Tensor gl(probs.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += probs.at(bi, c, i, j) * gprobs.at(bi, c, i, j);
                for (int c = 0; c < C; ++c)
                    gl.at(bi, c, i, j) = probs.at(bi, c, i, j) * (gprobs.at(bi, c, i, j) - dot);
            }
    return gl;
}

Tensor flip_horizontal(const Tensor& x) {
    check_4d(x);
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y(x.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) y.at(bi, c, i, j) = x.at(bi, c, i, W - 1 - j);
    return y;
}

}  // namespace cct
