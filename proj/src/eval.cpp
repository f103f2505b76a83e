#include "cct/eval.hpp"

#include <cmath>
#include <stdexcept>

#include "cct/nn.hpp"

namespace cct {

void ConfusionMatrix::accumulate(const LabelBatch& pred, const LabelBatch& truth) {
    if (pred.b != truth.b || pred.h != truth.h || pred.w != truth.w)
        throw std::runtime_error("confusion: shape mismatch");
    for (size_t i = 0; i < truth.v.size(); ++i) {
        uint8_t t = truth.v[i], p = pred.v[i];
        if (t == kIgnore) continue;
        if (t >= C || p >= C) throw std::runtime_error("confusion: class out of range");
        at(t, p)++;
    }
}

double ConfusionMatrix::miou(std::vector<double>* per_class) const {
    if (per_class) per_class->assign(static_cast<size_t>(C), std::nan(""));
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < C; ++c) {
        uint64_t row = 0, col = 0;
        for (int k = 0; k < C; ++k) {
            row += at(c, k);
            col += at(k, c);
        }
        uint64_t denom = row + col - at(c, c);
        if (denom == 0) continue;
        double iou = static_cast<double>(at(c, c)) / static_cast<double>(denom);
        if (per_class) (*per_class)[static_cast<size_t>(c)] = iou;
        sum += iou;
        ++n;
    }
    return n == 0 ? std::nan("") : sum / n;
}

LabelBatch argmax_channel(const Tensor& t) {
    const int B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    LabelBatch out(B, H, W);
    for (int b = 0; b < B; ++b)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int best = 0;
                double bv = t.at(b, 0, y, x);
                for (int c = 1; c < C; ++c)
                    if (t.at(b, c, y, x) > bv) {
                        bv = t.at(b, c, y, x);
                        best = c;
                    }
                out.at(b, y, x) = static_cast<uint8_t>(best);
            }
    return out;
}

namespace {
Tensor forward_probs(Model& m, const Tensor& batched, int dom) {
    return softmax_channel(m.dom(dom).main.forward(m.enc.forward(batched)));
}

int round_to_8(double x) { return std::max(8, static_cast<int>(std::lround(x / 8.0)) * 8); }
}  // namespace

LabelBatch predict(Model& m, const Tensor& img, int dom) {
    Tensor b({1, 3, img.dim(1), img.dim(2)}, img.v);
    return argmax_channel(forward_probs(m, b, dom));
}

LabelBatch multiscale_infer(Model& m, const Tensor& img, const std::vector<double>& scales,
                            bool flip, int dom) {
    const int H = img.dim(1), W = img.dim(2);
    Tensor base({1, 3, H, W}, img.v);
    Tensor acc({1, m.num_classes(dom), H, W});
    int n = 0;
    for (double s : scales) {
        int sh = round_to_8(H * s), sw = round_to_8(W * s);
        Tensor scaled = bilinear_resize(base, sh, sw);
        for (int f = 0; f < (flip ? 2 : 1); ++f) {
            Tensor in = f ? flip_horizontal(scaled) : scaled;
            Tensor probs = forward_probs(m, in, dom);
            if (f) probs = flip_horizontal(probs);
            probs = bilinear_resize(probs, H, W);
            for (int64_t i = 0; i < acc.size(); ++i) acc[i] += probs[i];
            ++n;
        }
    }
    for (auto& x : acc.v) x /= n;
    return argmax_channel(acc);
}

EvalReport evaluate(Model& m, const Manifest& mf, int dom, bool multiscale) {
    const auto& d = mf.domain(dom);
    if (d.num_classes != m.num_classes(dom))
        throw std::runtime_error("evaluate: class-count mismatch between checkpoint and data");
    ConfusionMatrix cm(d.num_classes);
    int n = 0;
    for (int idx : d.split_indices("labeled")) {
        Example ex = load_example(mf, dom, idx);
        LabelBatch pred = multiscale ? multiscale_infer(m, ex.image, kDefaultScales, true, dom)
                                     : predict(m, ex.image, dom);
        cm.accumulate(pred, ex.label);
        ++n;
    }
    EvalReport r;
    r.miou = cm.miou(&r.per_class);
    r.num_images = n;
    return r;
}

}  // namespace cct
