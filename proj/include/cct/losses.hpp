#pragma once

#include <optional>
#include <vector>

#include "cct/tensor.hpp"

namespace cct {

enum class Distance { MSE, KL, JS };

Distance distance_from_name(const std::string& s);
std::string distance_name(Distance d);

struct LossWeights {
    double lambda_u = 30.0;
    double lambda_w = 0.4;
    double lambda_adv = 0.02;
    Distance distance = Distance::MSE;
    std::optional<double> conf_threshold;  // beta, off by default
    std::optional<int> pairwise_subset;    // subset size, off by default
};

/// Mean over non-IGNORE pixels of -log softmax(logits)[target]; 0 if every
/// pixel is IGNORE. glogits, when given, receives the gradient.
double cross_entropy(const Tensor& logits, const LabelBatch& target, Tensor* glogits = nullptr);

/// Annealed bootstrapped CE: a pixel contributes only while the probability
/// of its ground-truth class is below eta.
double ab_ce(const Tensor& logits, const LabelBatch& target, double eta,
             Tensor* glogits = nullptr);

double dist_mse(const Tensor& p, const Tensor& q);
double dist_kl(const Tensor& p, const Tensor& q);
double dist_js(const Tensor& p, const Tensor& q);

/// (1/K) sum_k d(main_probs, aux_probs[k]); main_probs is treated as a
/// constant (no gradient). With conf_threshold set, per-pixel distances are
/// averaged only over pixels where max_C main_probs exceeds it. gaux, when
/// given, receives one gradient tensor (w.r.t. aux probs) per decoder.
double consistency_loss(const Tensor& main_probs, const std::vector<Tensor>& aux_probs,
                        const LossWeights& weights, std::vector<Tensor>* gaux = nullptr);

/// (1/K) sum_k cross_entropy(aux_logits[k], pseudo).
double weak_loss(const LabelBatch& pseudo, const std::vector<Tensor>& aux_logits,
                 std::vector<Tensor>* gaux = nullptr);

/// Mean over elements of the per-element variance of the subset
/// predictions. Gradients are w.r.t. the subset probability maps.
double pairwise_loss(const std::vector<const Tensor*>& probs_subset,
                     std::vector<Tensor>* gprobs = nullptr);

/// Two-class softmax CE of discriminator logits against one fixed domain id,
/// averaged over all cells.
double domain_ce(const Tensor& logits, int target, Tensor* g = nullptr);

/// Two-class CE over discriminator logits: domain-1 cells labeled 0,
/// domain-2 cells labeled 1; sum of the two per-domain means.
double adversarial_loss(const Tensor& d_logits_dom1, const Tensor& d_logits_dom2,
                        Tensor* g1 = nullptr, Tensor* g2 = nullptr);

double total_loss(double l_s, double l_u, double l_w, double l_pw, double l_adv, double omega_u,
                  double omega_w, double lambda_adv);

}  // namespace cct
