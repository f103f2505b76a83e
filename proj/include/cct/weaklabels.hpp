#pragma once

#include "cct/datasynth.hpp"
#include "cct/model.hpp"
#include "cct/tensor.hpp"

namespace cct {

struct PseudoLabelConfig {
    double theta_bg = 0.05;
    double theta_fg = 0.30;
    void validate() const;
};

/// Multi-label binary CE between sigmoid(classify(encode(x))) and the
/// image-level presence vector. Returns the mean loss of the final epoch.
double pretrain_classifier(Model& m, const Manifest& mf, int dom, int epochs, int batch, double lr,
                           double momentum, Rng& rng);

/// Class activation maps (C-1, H, W), each map ReLU'd, bilinearly upsampled
/// and normalized by its own max. Maps for classes absent from `present`
/// (when given) are zeroed.
Tensor compute_cam(Model& m, const Tensor& img, const std::vector<uint8_t>* present, int dom = 0);

/// Threshold rule: s = max_c M_c; background below theta_bg, foreground
/// class argmax+1 above theta_fg, IGNORE otherwise (boundaries -> IGNORE).
LabelBatch pseudo_labels(const Tensor& cams, const PseudoLabelConfig& cfg);

struct PseudoStats {
    int64_t labeled_px = 0;
    int64_t ignored_px = 0;
};

/// Writes pseudo/ index PNGs for every weak entry and records their paths
/// in the manifest (saved back to disk).
PseudoStats write_pseudo_labels(Model& m, Manifest& mf, int dom, const PseudoLabelConfig& cfg);

}  // namespace cct
