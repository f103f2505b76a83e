#pragma once

#include <vector>

#include "cct/datasynth.hpp"
#include "cct/model.hpp"
#include "cct/tensor.hpp"

namespace cct {

/// Rows = ground truth, cols = prediction; IGNORE pixels excluded.
struct ConfusionMatrix {
    int C = 0;
    std::vector<uint64_t> counts;

    explicit ConfusionMatrix(int num_classes)
        : C(num_classes), counts(static_cast<size_t>(num_classes) * num_classes, 0) {}

    uint64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * C + pred]; }
    uint64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * C + pred]; }

    void accumulate(const LabelBatch& pred, const LabelBatch& truth);

    /// Classes with zero denominator are excluded from the mean; NaN if all
    /// denominators are zero. per_class gets IoU per class (NaN when absent).
    double miou(std::vector<double>* per_class = nullptr) const;
};

LabelBatch argmax_channel(const Tensor& probs_or_logits);

/// Single forward + argmax on one image (3,H,W).
LabelBatch predict(Model& m, const Tensor& img, int dom = 0);

/// Resize / flip ensemble: probability maps averaged over all versions,
/// argmax at the end. Scaled sizes are rounded to multiples of 8.
LabelBatch multiscale_infer(Model& m, const Tensor& img, const std::vector<double>& scales,
                            bool flip, int dom = 0);

struct EvalReport {
    double miou = 0.0;
    std::vector<double> per_class;
    int num_images = 0;
};

/// mIoU over all labeled entries of the manifest domain.
EvalReport evaluate(Model& m, const Manifest& mf, int dom = 0, bool multiscale = false);

inline const std::vector<double> kDefaultScales = {0.5, 0.75, 1.0, 1.25, 1.5};

}  // namespace cct
