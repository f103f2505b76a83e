#include "cct/weaklabels.hpp"

#include <cmath>
#include <stdexcept>

#include "cct/nn.hpp"

namespace fs = std::filesystem;

namespace cct {

void PseudoLabelConfig::validate() const {
    if (!(theta_bg >= 0.0 && theta_bg < theta_fg && theta_fg <= 1.0))
        throw std::runtime_error("pseudo-label config: need 0 <= theta_bg < theta_fg <= 1");
}

namespace {
double bce_with_logits(const Tensor& logits, const std::vector<std::vector<uint8_t>>& targets,
                       Tensor* glogits) {
    const int B = logits.dim(0), K = logits.dim(1);
    if (glogits) *glogits = Tensor(logits.shape);
    double sum = 0.0;
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
            double l = logits[b * K + k];
            double y = targets[static_cast<size_t>(b)][static_cast<size_t>(k)];
            double s = 1.0 / (1.0 + std::exp(-l));
            sum += -(y * std::log(std::max(s, 1e-300)) + (1.0 - y) * std::log(std::max(1.0 - s, 1e-300)));
            if (glogits) (*glogits)[b * K + k] = (s - y) / (B * K);
        }
    return sum / (B * K);
}
}  // namespace

double pretrain_classifier(Model& m, const Manifest& mf, int dom, int epochs, int batch, double lr,
                           double momentum, Rng& rng) {
    auto weak_idx = mf.domain(dom).split_indices("weak");
    if (weak_idx.empty()) throw std::runtime_error("pretrain_classifier: weak split is empty");

    // only encoder + classifier parameters participate
    std::vector<ParamRef> params;
    m.enc.collect("enc", params);
    m.dom(dom).cls.collect("cls", params);
    std::vector<Tensor> mom;
    for (auto& p : params) mom.emplace_back(p.value->shape);

    Cycler cyc(weak_idx, rng.fork(11));
    const int steps_per_epoch = std::max<int>(1, static_cast<int>(weak_idx.size()) / batch);
    double last = 0.0;
    for (int e = 0; e < epochs; ++e) {
        double acc = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<Tensor> imgs;
            std::vector<std::vector<uint8_t>> targets;
            for (int i = 0; i < batch; ++i) {
                Example ex = load_example(mf, dom, cyc.next());
                if (!ex.has_weak) throw std::runtime_error("pretrain_classifier: entry lacks image-level label");
                bool any = false;
                for (auto v : ex.present) any |= v != 0;
                if (!any) throw std::runtime_error("pretrain_classifier: all-absent image-level label");
                imgs.push_back(std::move(ex.image));
                targets.push_back(std::move(ex.present));
            }
            for (auto& p : params) p.grad->zero();
            Tensor z = m.enc.forward(stack_images(imgs));
            Tensor logits = m.dom(dom).cls.forward(z);
            Tensor g;
            acc += bce_with_logits(logits, targets, &g);
            m.enc.backward(m.dom(dom).cls.backward(g));
            for (size_t i = 0; i < params.size(); ++i) {
                Tensor& v = mom[i];
                for (int64_t j = 0; j < v.size(); ++j) {
                    v[j] = momentum * v[j] + (*params[i].grad)[j];
                    (*params[i].value)[j] -= lr * v[j];
                }
            }
        }
        last = acc / steps_per_epoch;
    }
    return last;
}

Tensor compute_cam(Model& m, const Tensor& img, const std::vector<uint8_t>* present, int dom) {
    const int H = img.dim(1), W = img.dim(2);
    Tensor batched({1, 3, H, W}, img.v);
    Tensor z = m.enc.forward(batched);
    const int D = z.dim(1), h = z.dim(2), w = z.dim(3);
    const Linear& fc = m.dom(dom).cls.fc;
    const int K = fc.out_dim;  // C-1

    Tensor maps({1, K, h, w});
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double s = 0.0;
                for (int d = 0; d < D; ++d) s += fc.w[k * D + d] * z.at(0, d, i, j);
                maps.at(0, k, i, j) = std::max(0.0, s);
            }
    Tensor up = bilinear_resize(maps, H, W);

    Tensor out({K, H, W});
    for (int k = 0; k < K; ++k) {
        if (present && !(*present)[static_cast<size_t>(k)]) continue;  // absent class stays zero
        double mx = 0.0;
        for (int i = 0; i < H * W; ++i) mx = std::max(mx, up.v[(static_cast<size_t>(k) * H * W) + i]);
        if (mx == 0.0) continue;
        for (int i = 0; i < H * W; ++i)
            out.v[static_cast<size_t>(k) * H * W + i] = up.v[static_cast<size_t>(k) * H * W + i] / mx;
    }
    return out;
}

LabelBatch pseudo_labels(const Tensor& cams, const PseudoLabelConfig& cfg) {
    cfg.validate();
    const int K = cams.dim(0), H = cams.dim(1), W = cams.dim(2);
    LabelBatch out(1, H, W, kIgnore);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            int best = 0;
            for (int k = 0; k < K; ++k) {
                double v = cams.v[(static_cast<size_t>(k) * H + y) * W + x];
                if (v > s) {  // ties keep the lowest class index
                    s = v;
                    best = k;
                }
            }
            if (s < cfg.theta_bg)
                out.at(0, y, x) = 0;
            else if (s > cfg.theta_fg)
                out.at(0, y, x) = static_cast<uint8_t>(best + 1);
            // otherwise (including exact threshold hits): IGNORE
        }
    return out;
}

PseudoStats write_pseudo_labels(Model& m, Manifest& mf, int dom, const PseudoLabelConfig& cfg) {
    cfg.validate();
    fs::create_directories(mf.root / "pseudo");
    PseudoStats stats;
    auto& entries = mf.domains[static_cast<size_t>(dom)].entries;
    for (size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        if (e.split != "weak") continue;
        Example ex = load_example(mf, dom, static_cast<int>(i));
        Tensor cams = compute_cam(m, ex.image, ex.has_weak ? &ex.present : nullptr, dom);
        LabelBatch pl = pseudo_labels(cams, cfg);
        for (auto v : pl.v) (v == kIgnore ? stats.ignored_px : stats.labeled_px)++;
        fs::path rel = fs::path(e.image).filename();
        e.pseudo_label = (fs::path("pseudo") / rel).string();
        write_index_png(mf.root / e.pseudo_label, pl);
    }
    mf.save();
    return stats;
}

}  // namespace cct
