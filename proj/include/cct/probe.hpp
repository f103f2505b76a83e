#pragma once

#include "cct/model.hpp"
#include "cct/tensor.hpp"

namespace cct {

/// Average Euclidean distance between the patch centered at each location
/// and its in-bounds 8 compass neighbors (shifted by one patch stride).
/// Patch windows clamp to the image edge, so a constant image yields an
/// all-zero map. Output (H, W).
Tensor input_smoothness(const Tensor& img, int patch = 20);

/// Encoder features bilinearly upsampled to input size; per pixel, the mean
/// Euclidean distance to its in-bounds 8 neighbor feature vectors.
Tensor feature_smoothness(const Tensor& img, Encoder& enc);

struct ProbeStats {
    double mean_boundary = 0.0;
    double mean_interior = 0.0;
    double ratio = 0.0;
};

/// Boundary pixels: any 8-neighbor carries a different non-IGNORE class.
ProbeStats boundary_stats(const Tensor& smoothness, const LabelBatch& truth);

/// Min-max normalized copy for heatmap output (bright = high distance).
Tensor normalize_map(const Tensor& hw);

}  // namespace cct
