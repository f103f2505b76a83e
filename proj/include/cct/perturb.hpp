#pragma once

#include <string>
#include <vector>

#include "cct/rng.hpp"
#include "cct/tensor.hpp"

namespace cct {

struct Decoder;  // model.hpp

/// The seven feature-space perturbation functions applied to the encoder
/// output before auxiliary decoding.
enum class PerturbationKind { F_NOISE, F_DROP, DROPOUT, OBJ_MSK, CON_MSK, G_CUTOUT, I_VAT };

std::string kind_name(PerturbationKind k);
PerturbationKind kind_from_name(const std::string& s);

struct PerturbParams {
    double noise_lo = -0.3, noise_hi = 0.3;
    double drop_gamma_lo = 0.6, drop_gamma_hi = 0.9;
    double dropout_p = 0.5;
    double cutout_area = 0.4;
    double vat_eps = 2.0;
    double vat_xi = 1e-6;
    int background_class = 0;
};

struct RosterEntry {
    PerturbationKind kind;
    int count;
};
using AuxRoster = std::vector<RosterEntry>;

/// F-Noise x6, F-Drop x6, Dropout x6, G-Cutout x6, Obj-Msk x2, Con-Msk x2,
/// I-VAT x2 (K = 30).
AuxRoster default_roster();
int roster_total(const AuxRoster& r);
std::vector<PerturbationKind> roster_expand(const AuxRoster& r);

/// Result of one perturbation: the perturbed features plus whatever is
/// needed to push gradients back from z~ to z.
struct Perturbed {
    Tensor z;
    // grad z~ -> grad z. Mask-style perturbations store a per-element
    // multiplier; additive ones (i_vat) pass gradients through unchanged.
    Tensor mult;      // empty means identity
    Tensor apply_backward(const Tensor& gz_tilde) const;
};

Perturbed f_noise(const Tensor& z, const PerturbParams& p, Rng& rng);
Perturbed f_drop(const Tensor& z, const PerturbParams& p, Rng& rng);
Perturbed dropout_spatial(const Tensor& z, double prob, Rng& rng);

/// Binary object/context masks at feature resolution (h, w), derived from
/// the full-resolution main prediction. M_obj zeroes predicted objects when
/// applied; M_con = 1 - M_obj.
void object_context_masks(const Tensor& seg_logits, int h, int w, int background_class,
                          Tensor* m_obj, Tensor* m_con);

Perturbed obj_msk(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p);
Perturbed con_msk(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p);
Perturbed guided_cutout(const Tensor& z, const Tensor& seg_logits, const PerturbParams& p, Rng& rng);

/// One-power-iteration virtual adversarial perturbation of z against the
/// given auxiliary decoder (KL distance, decoder params read-only).
Perturbed i_vat(const Tensor& z, Decoder& aux_decoder, const PerturbParams& p, Rng& rng);

/// Dispatch on kind. seg_logits is the detached main prediction (used by the
/// guided perturbations), aux may be null except for I_VAT.
Perturbed apply_perturbation(PerturbationKind kind, const Tensor& z, const Tensor& seg_logits,
                             Decoder* aux, const PerturbParams& p, Rng& rng);

}  // namespace cct
