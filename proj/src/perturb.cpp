#include "cct/perturb.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>

#include "cct/model.hpp"
#include "cct/nn.hpp"

namespace cct {

std::string kind_name(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::F_NOISE: return "F_NOISE";
        case PerturbationKind::F_DROP: return "F_DROP";
        case PerturbationKind::DROPOUT: return "DROPOUT";
        case PerturbationKind::OBJ_MSK: return "OBJ_MSK";
        case PerturbationKind::CON_MSK: return "CON_MSK";
        case PerturbationKind::G_CUTOUT: return "G_CUTOUT";
        case PerturbationKind::I_VAT: return "I_VAT";
    }
    throw std::runtime_error("bad perturbation kind");
}

PerturbationKind kind_from_name(const std::string& s) {
    if (s == "F_NOISE") return PerturbationKind::F_NOISE;
    if (s == "F_DROP") return PerturbationKind::F_DROP;
    if (s == "DROPOUT") return PerturbationKind::DROPOUT;
    if (s == "OBJ_MSK") return PerturbationKind::OBJ_MSK;
    if (s == "CON_MSK") return PerturbationKind::CON_MSK;
    if (s == "G_CUTOUT") return PerturbationKind::G_CUTOUT;
    if (s == "I_VAT") return PerturbationKind::I_VAT;
    throw std::runtime_error("unknown perturbation kind: " + s);
}

AuxRoster default_roster() {
    return {{PerturbationKind::F_NOISE, 6}, {PerturbationKind::F_DROP, 6},
            {PerturbationKind::DROPOUT, 6}, {PerturbationKind::G_CUTOUT, 6},
            {PerturbationKind::OBJ_MSK, 2}, {PerturbationKind::CON_MSK, 2},
            {PerturbationKind::I_VAT, 2}};
}

int roster_total(const AuxRoster& r) {
    int n = 0;
    for (const auto& e : r) n += e.count;
    return n;
}

std::vector<PerturbationKind> roster_expand(const AuxRoster& r) {
    std::vector<PerturbationKind> out;
    for (const auto& e : r)
        for (int i = 0; i < e.count; ++i) out.push_back(e.kind);
    return out;
}

Tensor Perturbed::apply_backward(const Tensor& gz_tilde) const {
    if (mult.empty()) return gz_tilde;
    Tensor g(gz_tilde.shape);
    for (int64_t i = 0; i < g.size(); ++i) g[i] = gz_tilde[i] * mult[i];
    return g;
}

Perturbed f_noise(const Tensor& z, const PerturbParams& p, Rng& rng) {
    const int B = z.dim(0), D = z.dim(1), h = z.dim(2), w = z.dim(3);
    const int64_t per = static_cast<int64_t>(D) * h * w;
    // one noise slab shared across the batch
    std::vector<double> noise(static_cast<size_t>(per));
    for (auto& n : noise) n = rng.uniform(p.noise_lo, p.noise_hi);
    Perturbed out;
    out.mult = Tensor(z.shape);
    out.z = Tensor(z.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int64_t i = 0; i < per; ++i) {
            double m = 1.0 + noise[static_cast<size_t>(i)];
            out.mult[bi * per + i] = m;
            out.z[bi * per + i] = z[bi * per + i] * m;
        }
    return out;
}

Perturbed f_drop(const Tensor& z, const PerturbParams& p, Rng& rng) {
    const int B = z.dim(0), D = z.dim(1), h = z.dim(2), w = z.dim(3);
    Perturbed out;
    out.mult = Tensor(z.shape);
    out.z = Tensor(z.shape);
    for (int bi = 0; bi < B; ++bi) {
        double gamma = rng.uniform(p.drop_gamma_lo, p.drop_gamma_hi);
        // channel-summed saliency, min-max normalized per sample
        std::vector<double> sal(static_cast<size_t>(h) * w, 0.0);
        for (int c = 0; c < D; ++c)
            for (int i = 0; i < h * w; ++i) sal[static_cast<size_t>(i)] += z.at(bi, c, i / w, i % w);
        double lo = sal[0], hi = sal[0];
        for (double s : sal) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        for (int i = 0; i < h * w; ++i) {
            double norm = (hi > lo) ? (sal[static_cast<size_t>(i)] - lo) / (hi - lo) : 0.0;
            double m = norm < gamma ? 1.0 : 0.0;
            for (int c = 0; c < D; ++c) {
                out.mult.at(bi, c, i / w, i % w) = m;
                out.z.at(bi, c, i / w, i % w) = z.at(bi, c, i / w, i % w) * m;
            }
        }
    }
    return out;
}

Perturbed dropout_spatial(const Tensor& z, double prob, Rng& rng) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::runtime_error("dropout: p must be in (0,1)");
    const int B = z.dim(0), D = z.dim(1), h = z.dim(2), w = z.dim(3);
    const double keep_scale = 1.0 / (1.0 - prob);
    Perturbed out;
    out.mult = Tensor(z.shape);
    out.z = Tensor(z.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < D; ++c) {
            double m = rng.bernoulli(prob) ? 0.0 : keep_scale;
            for (int i = 0; i < h * w; ++i) {
                out.mult.at(bi, c, i / w, i % w) = m;
                out.z.at(bi, c, i / w, i % w) = z.at(bi, c, i / w, i % w) * m;
            }
        }
    return out;
}

namespace {
/// Per-sample foreground map from full-resolution logits, nearest-downsampled
/// to (h, w). Entries are the predicted class index.
std::vector<uint8_t> predicted_classes_at(const Tensor& seg_logits, int bi, int h, int w) {
    const int C = seg_logits.dim(1), H = seg_logits.dim(2), W = seg_logits.dim(3);
    std::vector<uint8_t> cls(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
        int si = std::min(H - 1, static_cast<int>(i * static_cast<double>(H) / h));
        for (int j = 0; j < w; ++j) {
            int sj = std::min(W - 1, static_cast<int>(j * static_cast<double>(W) / w));
            int best = 0;
            double bv = seg_logits.at(bi, 0, si, sj);
            for (int c = 1; c < C; ++c) {
                double v = seg_logits.at(bi, c, si, sj);
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            cls[static_cast<size_t>(i) * w + j] = static_cast<uint8_t>(best);
        }
    }
    return cls;
}
}  // namespace

void object_context_masks(const Tensor& seg_logits, int h, int w, int background_class,
                          Tensor* m_obj, Tensor* m_con) {
    const int B = seg_logits.dim(0);
    *m_obj = Tensor({B, 1, h, w});
    *m_con = Tensor({B, 1, h, w});
    for (int bi = 0; bi < B; ++bi) {
        auto cls = predicted_classes_at(seg_logits, bi, h, w);
        for (int i = 0; i < h * w; ++i) {
            double fg = cls[static_cast<size_t>(i)] != background_class ? 1.0 : 0.0;
            m_con->at(bi, 0, i / w, i % w) = fg;
            m_obj->at(bi, 0, i / w, i % w) = 1.0 - fg;
        }
    }
}

namespace {
Perturbed apply_spatial_mask(const Tensor& z, const Tensor& mask) {
    const int B = z.dim(0), D = z.dim(1), h = z.dim(2), w = z.dim(3);
    Perturbed out;
    out.mult = Tensor(z.shape);
    out.z = Tensor(z.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < D; ++c)
            for (int i = 0; i < h * w; ++i) {
                double m = mask.at(bi, 0, i / w, i % w);
                out.mult.at(bi, c, i / w, i % w) = m;
                out.z.at(bi, c, i / w, i % w) = z.at(bi, c, i / w, i % w) * m;
            }
    return out;
}
}  // namespace

Perturbed obj_msk(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p) {
    Tensor mo, mc;
    object_context_masks(seg_logits, z.dim(2), z.dim(3), p.background_class, &mo, &mc);
    return apply_spatial_mask(z, mo);
}

Perturbed con_msk(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p) {
    Tensor mo, mc;
    object_context_masks(seg_logits, z.dim(2), z.dim(3), p.background_class, &mo, &mc);
    return apply_spatial_mask(z, mc);
}

Perturbed guided_cutout(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p,
                        Rng& rng) {
    const int B = z.dim(0), h = z.dim(2), w = z.dim(3);
    const int C = seg_logits.dim(1);
    Tensor mask({B, 1, h, w});
    mask.fill(1.0);
    for (int bi = 0; bi < B; ++bi) {
        auto cls = predicted_classes_at(seg_logits, bi, h, w);
        std::vector<int> comp(static_cast<size_t>(h) * w, -1);
        int ncomp = 0;
        for (int c = 1; c < C; ++c) {
            if (c == p.background_class) continue;
            // 4-connected components of the predicted class-c region
            for (int start = 0; start < h * w; ++start) {
                if (cls[static_cast<size_t>(start)] != c || comp[static_cast<size_t>(start)] >= 0)
                    continue;
                int id = ncomp++;
                int y0 = h, y1 = -1, x0 = w, x1 = -1, area = 0;
                std::queue<int> q;
                q.push(start);
                comp[static_cast<size_t>(start)] = id;
                while (!q.empty()) {
                    int cur = q.front();
                    q.pop();
                    int cy = cur / w, cx = cur % w;
                    ++area;
                    y0 = std::min(y0, cy);
                    y1 = std::max(y1, cy);
                    x0 = std::min(x0, cx);
                    x1 = std::max(x1, cx);
                    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                    for (int d = 0; d < 4; ++d) {
                        int ny = cy + dy[d], nx = cx + dx[d];
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        int ni = ny * w + nx;
                        if (cls[static_cast<size_t>(ni)] == c && comp[static_cast<size_t>(ni)] < 0) {
                            comp[static_cast<size_t>(ni)] = id;
                            q.push(ni);
                        }
                    }
                }
                if (area < 4) continue;
                int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
                double target = p.cutout_area * bh * bw;
                double aspect = rng.uniform(0.5, 2.0);
                int rh = std::clamp(static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, bh);
                int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(target / aspect))), 1, bw);
                int ry = y0 + rng.uniform_int(bh - rh + 1);
                int rx = x0 + rng.uniform_int(bw - rw + 1);
                for (int yy = ry; yy < ry + rh; ++yy)
                    for (int xx = rx; xx < rx + rw; ++xx) mask.at(bi, 0, yy, xx) = 0.0;
            }
        }
    }
    return apply_spatial_mask(z, mask);
}

Perturbed i_vat(const Tensor& z, Decoder& aux_decoder, const PerturbParams& p, Rng& rng) {
    const int B = z.dim(0), D = z.dim(1), h = z.dim(2), w = z.dim(3);
    const int64_t per = static_cast<int64_t>(D) * h * w;
    Perturbed out;
    out.z = z;
    if (p.vat_eps == 0.0) return out;

    Tensor r(z.shape);
    double sigma = p.vat_xi / std::sqrt(static_cast<double>(per));
    for (auto& x : r.v) x = rng.normal() * sigma;

    Tensor p_ref = softmax_channel(aux_decoder.forward(z));
    Tensor zr(z.shape);
    for (int64_t i = 0; i < z.size(); ++i) zr[i] = z[i] + r[i];
    Tensor q = softmax_channel(aux_decoder.forward(zr));

    // d/dlogits of mean-over-pixels KL(p_ref || q) is (q - p_ref)/Npix
    const int C = q.dim(1), H = q.dim(2), W = q.dim(3);
    const double npix = static_cast<double>(B) * H * W;
    Tensor glogits(q.shape);
    for (int64_t i = 0; i < q.size(); ++i) glogits[i] = (q[i] - p_ref[i]) / npix;
    Tensor grad_r = aux_decoder.backward(glogits, /*accum=*/false);

    for (int bi = 0; bi < B; ++bi) {
        double nrm = 0.0;
        for (int64_t i = 0; i < per; ++i) nrm += grad_r[bi * per + i] * grad_r[bi * per + i];
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) continue;  // flat region, leave this sample unperturbed
        double s = p.vat_eps / nrm;
        for (int64_t i = 0; i < per; ++i) out.z[bi * per + i] += s * grad_r[bi * per + i];
    }
    (void)C;
    return out;
}

Perturbed apply_perturbation(PerturbationKind kind, const Tensor& z, const Tensor& seg_logits,
                             Decoder* aux, const PerturbParams& p, Rng& rng) {
    switch (kind) {
        case PerturbationKind::F_NOISE: return f_noise(z, p, rng);
        case PerturbationKind::F_DROP: return f_drop(z, p, rng);
        case PerturbationKind::DROPOUT: return dropout_spatial(z, p.dropout_p, rng);
        case PerturbationKind::OBJ_MSK: return obj_msk(z, seg_logits, p);
        case PerturbationKind::CON_MSK: return con_msk(z, seg_logits, p);
        case PerturbationKind::G_CUTOUT: return guided_cutout(z, seg_logits, p, rng);
        case PerturbationKind::I_VAT:
            if (!aux) throw std::runtime_error("i_vat needs its auxiliary decoder");
            return i_vat(z, *aux, p, rng);
    }
    throw std::runtime_error("bad perturbation kind");
}

}  // namespace cct
