#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cct/datasynth.hpp"
#include "cct/losses.hpp"
#include "cct/model.hpp"
#include "cct/perturb.hpp"
#include "cct/schedules.hpp"

namespace cct {

/// Configuration / usage problems that map to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrainMode { supervised_baseline, cct, cct_weak, cct_multidomain };
TrainMode mode_from_name(const std::string& s);
std::string mode_name(TrainMode m);

struct OptimConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

struct TrainConfig {
    TrainMode mode = TrainMode::cct;
    int epochs = 50;
    int batch = 4;
    uint64_t seed = 1;
    OptimConfig optim;
    double rampup_frac_u = 0.1;
    double rampup_frac_w = 0.1;
    double rampup_frac_abce = 0.5;
    double abce_final = 0.9;
    double power = 0.9;
    bool use_abce = true;
    LossWeights loss;
    AuxRoster roster = default_roster();
    PerturbParams perturb;
    bool augment_data = true;
    int log_every = 10;
    int pretrain_epochs = 15;        // classifier pretraining in cct_weak mode
    bool use_discriminator = false;  // adversarial alignment in cct_multidomain
    int stopgrad_check_every = 0;    // structural audit period; 0 = off
    int enc_w1 = 16, enc_w2 = 32, enc_w3 = 64;

    void validate() const;
    /// Strict parse: unknown keys anywhere are rejected.
    static TrainConfig from_json_file(const std::filesystem::path& file);
};

struct StepMetrics {
    double loss_total = 0.0, loss_s = 0.0, loss_u = 0.0, loss_w = 0.0, loss_pw = 0.0,
           loss_adv = 0.0;
    double lr = 0.0, eta = 1.0, omega_u = 0.0, omega_w = 0.0;
};

/// One iteration's data, already augmented and stacked.
struct StepBatch {
    Tensor x_l;
    LabelBatch y_l;
    Tensor x_u;  // empty in supervised_baseline
    bool has_pseudo = false;
    LabelBatch y_pseudo;  // aligned with x_u rows when has_pseudo
};

/// v <- momentum*v + (grad + wd*param); param <- param - lr*v.
/// Throws naming the parameter on a non-finite gradient.
void sgd_update(const std::vector<ParamRef>& params, std::vector<Tensor>& momentum_buf, double lr,
                double momentum, double weight_decay);

class Trainer {
public:
    Trainer(TrainConfig cfg, Manifest data, std::optional<Manifest> data2,
            std::optional<Manifest> val, std::filesystem::path out_dir);
    ~Trainer();

    /// Full run per config.mode: trains, evaluates each epoch, writes
    /// metrics.csv plus best/ and final/ checkpoints. Returns best val mIoU
    /// (final-epoch train metrics stand in when no validation set is given).
    double run();

    /// One optimization step on one domain. x_adv_other, when given together
    /// with a discriminator, is the other domain's unlabeled batch for the
    /// adversarial alignment term. Exposed for tests.
    StepMetrics train_step(const StepBatch& sb, int dom = 0, const Tensor* x_adv_other = nullptr);

    /// Accumulates the adversarial-alignment gradients (encoder through the
    /// reversal layer, discriminator directly) for unlabeled batches from the
    /// two domains; returns the loss value. lambda_rev = -1 disables reversal.
    double adversarial_phase(const Tensor& xu_dom0, const Tensor& xu_dom1, double lambda_rev = 1.0);

    StepBatch make_batch(const MixedBatch& mb, int dom = 0);

    /// Recomputes the unsupervised term omega_u * L_u of the last train_step
    /// through the live code path (replayed rng draws, cached detached main
    /// prediction). Used by the stop-gradient audit.
    double recompute_unsup_loss(int dom = 0);

    Model& model() { return model_; }
    long long step() const { return step_; }
    long long total_iters() const { return total_iters_; }
    void set_total_iters(long long t) { total_iters_ = t; }
    double best_miou() const { return best_miou_; }
    double final_miou() const { return last_miou_; }

private:
    double unsup_branches(const Tensor& z_u, const Tensor& main_logits, const Tensor& main_probs,
                          int dom, bool with_grad, const StepBatch* sb, StepMetrics* m,
                          std::vector<Rng>& rngs);
    void run_single();
    void run_multidomain();
    void log_row(const StepMetrics& m, int epoch);
    void eval_epoch();

    TrainConfig cfg_;
    Manifest data_;
    std::optional<Manifest> data2_;
    std::optional<Manifest> val_;
    std::filesystem::path out_;

    Model model_;
    long long step_ = 0;
    long long total_iters_ = 0;
    double best_miou_ = -1.0;
    double last_miou_;

    Rng rng_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cct
