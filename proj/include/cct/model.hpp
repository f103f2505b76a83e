#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cct/nn.hpp"
#include "cct/perturb.hpp"
#include "cct/rng.hpp"
#include "cct/tensor.hpp"

namespace cct {

/// Shared encoder: three conv blocks with stride-2 downsampling (total
/// stride 8), then a pooling-pyramid head at grids {1,2,4} fused back to
/// depth D. Channel widths default to 16/32/64; smaller widths are used by
/// the gradient-check tests.
struct Encoder {
    int w1 = 16, w2 = 32, w3 = 64;
    int depth() const { return w3; }

    Conv2d c1, c2, c3;
    ReLU r1, r2, r3;
    AvgPool2 p1, p2, p3;
    AdaptiveAvgPool pool_g1, pool_g2, pool_g4;
    Conv2d br1, br2, br4;
    ReLU rb1, rb2, rb4;
    Conv2d fuse;
    int feat_h = 0, feat_w = 0;

    void init(Rng& rng, int width1 = 16, int width2 = 32, int width3 = 64);
    Tensor forward(const Tensor& img);
    Tensor backward(const Tensor& gz, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// 1x1 conv D->C (linear), then three [1x1 conv C->4C, ReLU, pixel-shuffle
/// r=2] stages; the last stage skips the ReLU so the output is raw logits at
/// the full input resolution.
struct Decoder {
    int num_classes = 0, depth = 0;
    Conv2d head, s1, s2, s3;
    ReLU rs1, rs2;

    void init(int C, int D, Rng& rng);
    Tensor forward(const Tensor& z);
    Tensor backward(const Tensor& gy, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Global average pooling over z followed by an affine map to C-1 class
/// logits (per-class sigmoid use).
struct Classifier {
    Linear fc;
    int in_h = 0, in_w = 0;

    void init(int C, int D, Rng& rng);
    Tensor forward(const Tensor& z);
    Tensor backward(const Tensor& gy, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Fully-convolutional domain discriminator; gradient reversal sits between
/// the encoder and this branch (identity forward, backward scaled by
/// -lambda_rev).
struct Discriminator {
    Conv2d c1, c2, c3;
    LeakyReLU l1, l2;

    void init(int D, Rng& rng);
    Tensor forward(const Tensor& z);
    /// Returns the gradient w.r.t. z after reversal, i.e. -lambda_rev * gx.
    Tensor backward_reversed(const Tensor& gy, double lambda_rev, bool accum = true);
    void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Decoders and heads belonging to one domain.
struct DomainHeads {
    int num_classes = 0;
    Decoder main;
    std::vector<Decoder> aux;
    std::vector<PerturbationKind> aux_kinds;
    Classifier cls;
};

struct Model {
    int depth = 64;
    Encoder enc;
    std::vector<DomainHeads> domains;
    Discriminator disc;
    bool has_disc = false;
    AuxRoster roster;

    /// Single-domain model.
    void init(int C, const AuxRoster& r, Rng& rng, int w1 = 16, int w2 = 32, int w3 = 64);
    /// Multi-domain model: one head set per class count.
    void init_multi(const std::vector<int>& Cs, const AuxRoster& r, Rng& rng, int w1 = 16,
                    int w2 = 32, int w3 = 64);

    DomainHeads& dom(int i = 0) { return domains[static_cast<size_t>(i)]; }
    int num_classes(int i = 0) const { return domains[static_cast<size_t>(i)].num_classes; }

    std::vector<ParamRef> params();
    void zero_grads();

    void save(const std::filesystem::path& dir, int64_t step) const;
    /// Reconstructs architecture from meta.json and loads all arrays.
    static Model load(const std::filesystem::path& dir, int64_t* step = nullptr);
};

// Checkpoint array file: 8-byte magic "CCTARRAY", u32 rank, u32 dims[rank],
// little-endian float64 payload, row-major.
void write_array(const std::filesystem::path& file, const Tensor& t);
Tensor read_array(const std::filesystem::path& file);

}  // namespace cct
