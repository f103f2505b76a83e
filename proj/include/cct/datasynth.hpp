#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cct/rng.hpp"
#include "cct/tensor.hpp"

namespace cct {

struct DatasetSpec {
    int n_labeled = 0, n_unlabeled = 0, n_weak = 0;
    int H = 64, W = 64, C = 4;
    std::vector<std::string> shape_kinds = {"disk", "rectangle", "triangle"};
    double noise_level = 0.15;
    // half-width of the per-image color perturbation around each class's
    // anchor color; larger values make color less class-informative
    double color_jitter = 0.15;
    uint64_t seed = 0;

    void validate() const;
    static DatasetSpec from_json_file(const std::filesystem::path& file);
};

struct ManifestEntry {
    std::string image;         // relative path
    std::string label;         // empty if none
    std::string pseudo_label;  // empty if none
    std::vector<int> image_level;  // empty if none; 0/1 per foreground class
    std::string split;         // "labeled" | "unlabeled" | "weak"
};

struct ManifestDomain {
    std::string name;
    int num_classes = 0;
    std::vector<ManifestEntry> entries;
    std::vector<int> split_indices(const std::string& split) const;
};

struct Manifest {
    std::filesystem::path root;  // directory holding manifest.json
    std::vector<ManifestDomain> domains;

    static Manifest load(const std::filesystem::path& dir);
    void save() const;
    const ManifestDomain& domain(int i = 0) const { return domains[static_cast<size_t>(i)]; }
};

/// One dataset example as loaded from disk.
struct Example {
    Tensor image;  // (3, H, W), values in [0,1]
    bool has_label = false;
    LabelBatch label;  // b = 1
    bool has_weak = false;
    std::vector<uint8_t> present;  // length C-1
};

/// Writes images (RGB PNG), labels (8-bit index PNG) and manifest.json.
/// Byte-deterministic in (spec, seed).
Manifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

Example load_example(const Manifest& m, int dom, int index);

/// Random rescale in [0.5, 2.0] (bilinear image / nearest label), crop or
/// pad back to the original size (zero image pad, IGNORE label pad),
/// horizontal flip with p=0.5. Image and label get identical transforms.
void augment(Tensor& img, LabelBatch* lbl, Rng& rng);

/// Index cycler that reshuffles on each wrap.
struct Cycler {
    std::vector<int> idx;
    size_t pos = 0;
    Rng rng{0};

    Cycler() = default;
    Cycler(std::vector<int> indices, Rng r);
    int next(bool* wrapped = nullptr);
};

struct MixedBatch {
    std::vector<int> labeled;
    std::vector<int> unlabeled;
    bool epoch_wrapped = false;  // unlabeled cycle completed during this draw
};

/// batch labeled + batch unlabeled indices; the unlabeled cycle defines the
/// epoch, the labeled cycle just wraps (reshuffled).
MixedBatch sample_iteration(Cycler& labeled, Cycler& unlabeled, int batch);

// ---- PNG helpers (shared with probe / weaklabels) ----
void write_rgb_png(const std::filesystem::path& file, const Tensor& img3hw);
Tensor read_rgb_png(const std::filesystem::path& file);
void write_index_png(const std::filesystem::path& file, const LabelBatch& lbl);
LabelBatch read_index_png(const std::filesystem::path& file);
void write_gray_png(const std::filesystem::path& file, const Tensor& hw);

/// Stack single-image tensors (3,H,W) into a batch (B,3,H,W).
Tensor stack_images(const std::vector<Tensor>& imgs);

}  // namespace cct
