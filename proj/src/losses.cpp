#include "cct/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "cct/nn.hpp"

namespace cct {

namespace {
constexpr double kKlClamp = 1e-8;
}

Distance distance_from_name(const std::string& s) {
    if (s == "MSE") return Distance::MSE;
    if (s == "KL") return Distance::KL;
    if (s == "JS") return Distance::JS;
    throw std::runtime_error("unknown distance: " + s);
}

std::string distance_name(Distance d) {
    switch (d) {
        case Distance::MSE: return "MSE";
        case Distance::KL: return "KL";
        case Distance::JS: return "JS";
    }
    throw std::runtime_error("bad distance");
}

// ---------------- cross entropy ----------------

namespace {
double ce_impl(const Tensor& logits, const LabelBatch& target, double eta, bool annealed,
               Tensor* glogits) {
    const int B = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    if (target.b != B || target.h != H || target.w != W)
        throw std::runtime_error("cross_entropy: shape mismatch");
    Tensor probs = softmax_channel(logits);
    if (glogits) *glogits = Tensor(logits.shape);

    // first pass: which pixels contribute. The annealed variant keeps the
    // plain-CE normalization (all valid pixels), so the loss can only grow as
    // the threshold admits more pixels.
    int64_t n = 0, n_contrib = 0;
    double sum = 0.0;
    std::vector<uint8_t> contrib(static_cast<size_t>(B) * H * W, 0);
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                uint8_t t = target.at(bi, i, j);
                if (t == kIgnore) continue;
                if (t >= C) throw std::runtime_error("cross_entropy: target class out of range");
                ++n;
                double pt = probs.at(bi, t, i, j);
                if (annealed && !(pt < eta)) continue;
                contrib[(static_cast<size_t>(bi) * H + i) * W + j] = 1;
                sum += -std::log(std::max(pt, 1e-300));
                ++n_contrib;
            }
    if (n == 0 || n_contrib == 0) return 0.0;
    if (glogits) {
        for (int bi = 0; bi < B; ++bi)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    if (!contrib[(static_cast<size_t>(bi) * H + i) * W + j]) continue;
                    uint8_t t = target.at(bi, i, j);
                    for (int c = 0; c < C; ++c)
                        glogits->at(bi, c, i, j) =
                            (probs.at(bi, c, i, j) - (c == t ? 1.0 : 0.0)) / static_cast<double>(n);
                }
    }
    return sum / static_cast<double>(n);
}
}  // namespace

double cross_entropy(const Tensor& logits, const LabelBatch& target, Tensor* glogits) {
    return ce_impl(logits, target, 0.0, false, glogits);
}

double ab_ce(const Tensor& logits, const LabelBatch& target, double eta, Tensor* glogits) {
    if (eta < 0.0 || eta > 1.0) throw std::runtime_error("ab_ce: eta outside [0,1]");
    return ce_impl(logits, target, eta, true, glogits);
}

// ---------------- distance measures ----------------

namespace {
/// Per-pixel distance averaged over an optional pixel mask; fills gq with
/// the gradient w.r.t. q when requested.
double dist_impl(Distance kind, const Tensor& p, const Tensor& q,
                 const std::vector<uint8_t>* pixmask, Tensor* gq) {
    const int B = p.dim(0), C = p.dim(1), H = p.dim(2), W = p.dim(3);
    if (!p.same_shape(q)) throw std::runtime_error("distance: shape mismatch");
    if (gq) *gq = Tensor(q.shape);
    int64_t n = 0;
    double sum = 0.0;
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                if (pixmask && !(*pixmask)[(static_cast<size_t>(bi) * H + i) * W + j]) continue;
                ++n;
                for (int c = 0; c < C; ++c) {
                    double pv = p.at(bi, c, i, j), qv = q.at(bi, c, i, j);
                    switch (kind) {
                        case Distance::MSE:
                            sum += (pv - qv) * (pv - qv) / C;
                            break;
                        case Distance::KL: {
                            double qc = std::max(qv, kKlClamp);
                            if (pv > 0.0) sum += pv * std::log(std::max(pv, 1e-300) / qc);
                            break;
                        }
                        case Distance::JS: {
                            double m = 0.5 * (pv + qv);
                            if (pv > 0.0) sum += 0.5 * pv * std::log(std::max(pv, 1e-300) / std::max(m, 1e-300));
                            if (qv > 0.0) sum += 0.5 * qv * std::log(std::max(qv, 1e-300) / std::max(m, 1e-300));
                            break;
                        }
                    }
                }
            }
    if (n == 0) return 0.0;
    double val = sum / static_cast<double>(n);
    if (gq) {
        for (int bi = 0; bi < B; ++bi)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    if (pixmask && !(*pixmask)[(static_cast<size_t>(bi) * H + i) * W + j]) continue;
                    for (int c = 0; c < C; ++c) {
                        double pv = p.at(bi, c, i, j), qv = q.at(bi, c, i, j);
                        double g = 0.0;
                        switch (kind) {
                            case Distance::MSE:
                                g = 2.0 * (qv - pv) / C;
                                break;
                            case Distance::KL:
                                g = (qv > kKlClamp && pv > 0.0) ? -pv / qv : 0.0;
                                break;
                            case Distance::JS: {
                                double m = std::max(0.5 * (pv + qv), 1e-300);
                                g = (qv > 0.0) ? 0.5 * std::log(qv / m) : 0.0;
                                break;
                            }
                        }
                        gq->at(bi, c, i, j) = g / static_cast<double>(n);
                    }
                }
    }
    return val;
}
}  // namespace

double dist_mse(const Tensor& p, const Tensor& q) { return dist_impl(Distance::MSE, p, q, nullptr, nullptr); }
double dist_kl(const Tensor& p, const Tensor& q) { return dist_impl(Distance::KL, p, q, nullptr, nullptr); }
double dist_js(const Tensor& p, const Tensor& q) { return dist_impl(Distance::JS, p, q, nullptr, nullptr); }

// ---------------- consistency ----------------

double consistency_loss(const Tensor& main_probs, const std::vector<Tensor>& aux_probs,
                        const LossWeights& weights, std::vector<Tensor>* gaux) {
    if (aux_probs.empty()) throw std::runtime_error("consistency_loss: empty aux list");
    const int B = main_probs.dim(0), C = main_probs.dim(1), H = main_probs.dim(2),
              W = main_probs.dim(3);
    std::vector<uint8_t> mask;
    const std::vector<uint8_t>* maskp = nullptr;
    if (weights.conf_threshold) {
        mask.assign(static_cast<size_t>(B) * H * W, 0);
        double beta = *weights.conf_threshold;
        for (int bi = 0; bi < B; ++bi)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double mx = 0.0;
                    for (int c = 0; c < C; ++c) mx = std::max(mx, main_probs.at(bi, c, i, j));
                    if (mx > beta) mask[(static_cast<size_t>(bi) * H + i) * W + j] = 1;
                }
        maskp = &mask;
    }
    const double k = static_cast<double>(aux_probs.size());
    if (gaux) gaux->resize(aux_probs.size());
    double total = 0.0;
    for (size_t a = 0; a < aux_probs.size(); ++a) {
        Tensor* g = gaux ? &(*gaux)[a] : nullptr;
        total += dist_impl(weights.distance, main_probs, aux_probs[a], maskp, g);
        if (g)
            for (auto& x : g->v) x /= k;
    }
    return total / k;
}

// ---------------- weak / pairwise / adversarial ----------------

double weak_loss(const LabelBatch& pseudo, const std::vector<Tensor>& aux_logits,
                 std::vector<Tensor>* gaux) {
    if (aux_logits.empty()) return 0.0;
    const double k = static_cast<double>(aux_logits.size());
    if (gaux) gaux->resize(aux_logits.size());
    double total = 0.0;
    for (size_t a = 0; a < aux_logits.size(); ++a) {
        Tensor* g = gaux ? &(*gaux)[a] : nullptr;
        total += cross_entropy(aux_logits[a], pseudo, g);
        if (g)
            for (auto& x : g->v) x /= k;
    }
    return total / k;
}

double pairwise_loss(const std::vector<const Tensor*>& probs_subset, std::vector<Tensor>* gprobs) {
    if (probs_subset.size() < 2) throw std::runtime_error("pairwise_loss: subset size < 2");
    const double k = static_cast<double>(probs_subset.size());
    const int64_t n = probs_subset[0]->size();
    Tensor mean(probs_subset[0]->shape);
    for (auto* t : probs_subset)
        for (int64_t i = 0; i < n; ++i) mean[i] += (*t)[i] / k;
    double sum = 0.0;
    for (auto* t : probs_subset)
        for (int64_t i = 0; i < n; ++i) {
            double d = (*t)[i] - mean[i];
            sum += d * d;
        }
    double val = sum / (k * static_cast<double>(n));
    if (gprobs) {
        gprobs->resize(probs_subset.size());
        for (size_t a = 0; a < probs_subset.size(); ++a) {
            (*gprobs)[a] = Tensor(probs_subset[a]->shape);
            for (int64_t i = 0; i < n; ++i)
                (*gprobs)[a][i] = 2.0 * ((*probs_subset[a])[i] - mean[i]) / (k * static_cast<double>(n));
        }
    }
    return val;
}

double domain_ce(const Tensor& logits, int target, Tensor* g) {
    // 2-class softmax CE over all cells, single fixed target
    const int B = logits.dim(0), H = logits.dim(2), W = logits.dim(3);
    Tensor probs = softmax_channel(logits);
    const double n = static_cast<double>(B) * H * W;
    double sum = 0.0;
    if (g) *g = Tensor(logits.shape);
    for (int bi = 0; bi < B; ++bi)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                sum += -std::log(std::max(probs.at(bi, target, i, j), 1e-300));
                if (g)
                    for (int c = 0; c < 2; ++c)
                        g->at(bi, c, i, j) = (probs.at(bi, c, i, j) - (c == target ? 1.0 : 0.0)) / n;
            }
    return sum / n;
}

double adversarial_loss(const Tensor& d_logits_dom1, const Tensor& d_logits_dom2, Tensor* g1,
                        Tensor* g2) {
    return domain_ce(d_logits_dom1, 0, g1) + domain_ce(d_logits_dom2, 1, g2);
}

double total_loss(double l_s, double l_u, double l_w, double l_pw, double l_adv, double omega_u,
                  double omega_w, double lambda_adv) {
    return l_s + omega_u * l_u + omega_w * l_w + l_pw + lambda_adv * l_adv;
}

}  // namespace cct
