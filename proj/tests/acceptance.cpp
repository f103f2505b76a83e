// Acceptance suite: one self-contained check per release criterion.
//
//   acceptance --criterion N   runs criterion N (1..10) and prints a single
//                              "criterion N: PASS|FAIL - <summary>" line
//   acceptance                 runs all ten in order
//
// Exit code 0 iff every requested criterion passes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cct/datasynth.hpp"
#include "cct/eval.hpp"
#include "cct/losses.hpp"
#include "cct/model.hpp"
#include "cct/nn.hpp"
#include "cct/perturb.hpp"
#include "cct/probe.hpp"
#include "cct/schedules.hpp"
#include "cct/trainer.hpp"
#include "cct/weaklabels.hpp"
#include "helpers.hpp"

using namespace cct;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

// ---------- tiny check harness ----------

struct Ctx {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << (detail.str().empty() ? "" : "; ") << what;
        }
    }
    void note(const std::string& s) {
        detail << (detail.str().empty() ? "" : "; ") << s;
    }
};

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Manifest make_shapes(const fs::path& dir, int n_lab, int n_unl, int C, uint64_t seed) {
    DatasetSpec spec;
    spec.n_labeled = n_lab;
    spec.n_unlabeled = n_unl;
    spec.C = C;
    if (C == 3) spec.shape_kinds = {"disk", "rectangle"};
    spec.seed = seed;
    fs::remove_all(dir);
    return generate_dataset(spec, dir);
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------- criterion 1: gradient integrity ----------

/// Central FD over at most `cap` randomly chosen coordinates (all of them
/// when the tensor is small). Returns the worst relative error.
double fd_check_sampled(Tensor& x, const Tensor& analytic_grad, const std::function<double()>& f,
                        Rng& rng, int64_t cap = 512, double h = 1e-5) {
    std::vector<int64_t> idx;
    if (x.size() <= cap) {
        idx.resize(static_cast<size_t>(x.size()));
        for (int64_t i = 0; i < x.size(); ++i) idx[static_cast<size_t>(i)] = i;
    } else {
        for (int64_t i = 0; i < cap; ++i)
            idx.push_back(rng.uniform_int(static_cast<int>(x.size())));
    }
    double worst = 0.0;
    for (int64_t i : idx) {
        double keep = x[i];
        x[i] = keep + h;
        double fp = f();
        x[i] = keep - h;
        double fm = f();
        x[i] = keep;
        double num = (fp - fm) / (2.0 * h);
        double ana = analytic_grad[i];
        double denom = std::max(1e-8, std::abs(num) + std::abs(ana));
        worst = std::max(worst, std::abs(num - ana) / denom);
    }
    return worst;
}

template <typename Forward, typename Backward>
void check_module(Ctx& c, const std::string& label, Tensor& x, std::vector<ParamRef> params,
                  Forward fwd, Backward bwd, Rng& rng, double tol = 1e-4) {
    auto tb = std::chrono::steady_clock::now();
    Tensor y0 = fwd();
    Tensor w = random_tensor(y0.shape, rng);
    auto objective = [&]() { return weighted_sum(fwd(), w); };
    for (auto& p : params) p.grad->zero();
    fwd();
    Tensor gx = bwd(w);
    c.require(fd_check_sampled(x, gx, objective, rng) < tol, label + " input grad");
    for (auto& p : params)
        c.require(fd_check_sampled(*p.value, *p.grad, objective, rng) < tol,
                  label + " param " + p.name);
    if (std::getenv("CCT_ACCEPTANCE_TIMING"))
        std::cerr << label << " " << elapsed_s(tb) << "s\n";
}

bool criterion1(Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(71);
    const double tol = 1e-4;

    {
        Conv2d conv;
        conv.init(2, 3, 3, rng);
        Tensor x = random_tensor({2, 2, 5, 4}, rng);
        std::vector<ParamRef> ps;
        conv.collect("conv3", ps);
        check_module(c, "conv3x3", x, ps, [&] { return conv.forward(x); },
                     [&](const Tensor& w) { return conv.backward(w); }, rng);
    }
    {
        Conv2d conv;
        conv.init(3, 2, 1, rng);
        Tensor x = random_tensor({1, 3, 4, 4}, rng);
        std::vector<ParamRef> ps;
        conv.collect("conv1", ps);
        check_module(c, "conv1x1", x, ps, [&] { return conv.forward(x); },
                     [&](const Tensor& w) { return conv.backward(w); }, rng);
    }
    {
        Linear fc;
        fc.init(5, 3, rng);
        Tensor x = random_tensor({2, 5}, rng);
        std::vector<ParamRef> ps;
        fc.collect("fc", ps);
        check_module(c, "linear", x, ps, [&] { return fc.forward(x); },
                     [&](const Tensor& w) { return fc.backward(w); }, rng);
    }
    {
        Tensor x = random_tensor({1, 2, 4, 4}, rng);
        for (auto& v : x.v)
            if (std::abs(v) < 0.01) v = 0.1;  // keep clear of the kink
        ReLU r;
        check_module(c, "relu", x, {}, [&] { return r.forward(x); },
                     [&](const Tensor& w) { return r.backward(w); }, rng);
        LeakyReLU lr;
        check_module(c, "leaky_relu", x, {}, [&] { return lr.forward(x); },
                     [&](const Tensor& w) { return lr.backward(w); }, rng);
    }
    {
        Tensor x = random_tensor({2, 3, 4, 4}, rng);
        AvgPool2 p;
        check_module(c, "avgpool2", x, {}, [&] { return p.forward(x); },
                     [&](const Tensor& w) { return p.backward(w); }, rng);
        AdaptiveAvgPool a{2};
        check_module(c, "adaptive_pool", x, {}, [&] { return a.forward(x); },
                     [&](const Tensor& w) { return a.backward(w); }, rng);
        check_module(c, "global_pool", x, {}, [&] { return global_avg_pool(x); },
                     [&](const Tensor& w) { return global_avg_pool_backward(w, 4, 4); }, rng);
    }
    {
        Tensor x = random_tensor({1, 2, 4, 4}, rng);
        check_module(c, "bilinear", x, {}, [&] { return bilinear_resize(x, 7, 6); },
                     [&](const Tensor& w) { return bilinear_resize_backward(w, 4, 4); }, rng);
    }
    {
        Tensor x = random_tensor({1, 8, 3, 3}, rng);
        check_module(c, "pixel_shuffle", x, {}, [&] { return pixel_shuffle(x, 2); },
                     [&](const Tensor& w) { return pixel_unshuffle(w, 2); }, rng);
    }
    {
        Tensor x = random_tensor({1, 4, 3, 3}, rng, -2.0, 2.0);
        Tensor p;
        check_module(c, "softmax", x, {},
                     [&] {
                         p = softmax_channel(x);
                         return p;
                     },
                     [&](const Tensor& w) { return softmax_channel_backward(p, w); }, rng);
    }
    {
        Encoder enc;
        enc.init(rng, 4, 4, 4);
        Tensor x = random_tensor({1, 3, 8, 8}, rng, 0.1, 0.9);
        std::vector<ParamRef> ps;
        enc.collect("enc", ps);
        check_module(c, "encoder", x, ps, [&] { return enc.forward(x); },
                     [&](const Tensor& w) { return enc.backward(w); }, rng);
    }
    {
        Decoder dec;
        dec.init(2, 4, rng);
        Tensor z = random_tensor({1, 4, 2, 2}, rng);
        std::vector<ParamRef> ps;
        dec.collect("dec", ps);
        // move biases off the ReLU kink: dead pixels would otherwise pin
        // downstream pre-activations at exactly 0 and defeat the FD probe
        for (auto& p : ps)
            if (p.name.back() == 'b')
                for (int64_t i = 0; i < p.value->size(); ++i)
                    (*p.value)[i] = rng.uniform(0.05, 0.15);
        check_module(c, "decoder", z, ps, [&] { return dec.forward(z); },
                     [&](const Tensor& w) { return dec.backward(w); }, rng);
    }
    {
        Classifier cls;
        cls.init(3, 4, rng);
        Tensor z = random_tensor({2, 4, 2, 2}, rng);
        std::vector<ParamRef> ps;
        cls.collect("cls", ps);
        check_module(c, "classifier", z, ps, [&] { return cls.forward(z); },
                     [&](const Tensor& w) { return cls.backward(w); }, rng);
    }
    {
        Discriminator d;
        d.init(4, rng);
        Tensor z = random_tensor({1, 4, 3, 3}, rng);
        std::vector<ParamRef> ps;
        d.collect("disc", ps);
        check_module(c, "discriminator", z, ps, [&] { return d.forward(z); },
                     [&](const Tensor& w) { return d.backward_reversed(w, -1.0); }, rng);
    }

    // losses
    {
        Tensor logits = random_tensor({2, 3, 3, 3}, rng, -1.5, 1.5);
        LabelBatch y(2, 3, 3);
        for (size_t i = 0; i < y.v.size(); ++i)
            y.v[i] = i % 5 == 0 ? kIgnore : static_cast<uint8_t>(rng.uniform_int(3));
        Tensor g;
        cross_entropy(logits, y, &g);
        c.require(fd_check(logits, g, [&] { return cross_entropy(logits, y); }) < tol,
                  "cross_entropy grad");
    }
    {
        Tensor logits = random_tensor({1, 4, 4, 4}, rng, -1.5, 1.5);
        LabelBatch y(1, 4, 4);
        for (auto& v : y.v) v = static_cast<uint8_t>(rng.uniform_int(4));
        const double eta = 0.31;  // keeps the active set FD-stable
        Tensor g;
        ab_ce(logits, y, eta, &g);
        c.require(fd_check(logits, g, [&] { return ab_ce(logits, y, eta); }) < tol,
                  "annealed CE grad");
    }
    {
        Tensor main = random_probmap({1, 3, 3, 3}, rng);
        std::vector<Tensor> aux = {random_probmap({1, 3, 3, 3}, rng),
                                   random_probmap({1, 3, 3, 3}, rng)};
        for (Distance d : {Distance::MSE, Distance::KL, Distance::JS}) {
            LossWeights w;
            w.distance = d;
            std::vector<Tensor> g;
            consistency_loss(main, aux, w, &g);
            for (size_t k = 0; k < aux.size(); ++k)
                c.require(
                    fd_check(aux[k], g[k], [&] { return consistency_loss(main, aux, w); }) < tol,
                    "consistency grad " + distance_name(d));
        }
    }
    {
        std::vector<Tensor> logits = {random_tensor({1, 3, 3, 3}, rng),
                                      random_tensor({1, 3, 3, 3}, rng)};
        LabelBatch y(1, 3, 3);
        for (size_t i = 0; i < y.v.size(); ++i)
            y.v[i] = i % 4 == 0 ? kIgnore : static_cast<uint8_t>(rng.uniform_int(3));
        std::vector<Tensor> g;
        weak_loss(y, logits, &g);
        for (size_t k = 0; k < logits.size(); ++k)
            c.require(fd_check(logits[k], g[k], [&] { return weak_loss(y, logits); }) < tol,
                      "weak loss grad");
    }
    {
        std::vector<Tensor> probs = {random_probmap({1, 2, 2, 2}, rng),
                                     random_probmap({1, 2, 2, 2}, rng),
                                     random_probmap({1, 2, 2, 2}, rng)};
        std::vector<const Tensor*> ptrs;
        for (auto& p : probs) ptrs.push_back(&p);
        std::vector<Tensor> g;
        pairwise_loss(ptrs, &g);
        for (size_t k = 0; k < probs.size(); ++k)
            c.require(fd_check(probs[k], g[k], [&] { return pairwise_loss(ptrs); }) < tol,
                      "pairwise loss grad");
    }
    {
        Tensor d1 = random_tensor({1, 2, 3, 3}, rng);
        Tensor d2 = random_tensor({1, 2, 3, 3}, rng);
        Tensor g1, g2;
        adversarial_loss(d1, d2, &g1, &g2);
        c.require(fd_check(d1, g1, [&] { return adversarial_loss(d1, d2); }) < tol,
                  "adversarial grad dom1");
        c.require(fd_check(d2, g2, [&] { return adversarial_loss(d1, d2); }) < tol,
                  "adversarial grad dom2");
    }

    double dt = elapsed_s(t0);
    c.require(dt < 120.0, "runtime " + std::to_string(dt) + "s exceeds 2 min");
    c.note("all ops and losses < 1e-4 rel err, " + std::to_string(dt) + "s");
    return c.ok;
}

// ---------- criterion 2: stop-gradient contract ----------

bool criterion2(Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    fs::path data_dir = scratch("cct_acc2_data");
    fs::path out = scratch("cct_acc2_out");
    Manifest data = make_shapes(data_dir, 2, 4, 3, 19);

    TrainConfig cfg;
    cfg.mode = TrainMode::cct;
    cfg.batch = 2;
    cfg.seed = 7;
    cfg.enc_w1 = 4;
    cfg.enc_w2 = 4;
    cfg.enc_w3 = 8;
    cfg.roster = {{PerturbationKind::F_NOISE, 1}, {PerturbationKind::F_DROP, 1},
                  {PerturbationKind::DROPOUT, 1}, {PerturbationKind::OBJ_MSK, 1},
                  {PerturbationKind::CON_MSK, 1}, {PerturbationKind::G_CUTOUT, 1},
                  {PerturbationKind::I_VAT, 1}};
    cfg.augment_data = false;
    cfg.optim.lr = 0.0;  // freeze parameters so the replayed term is exact
    Trainer tr(cfg, data, std::nullopt, std::nullopt, out);
    tr.set_total_iters(10);

    auto lab = data.domain(0).split_indices("labeled");
    auto unl = data.domain(0).split_indices("unlabeled");
    MixedBatch mb;
    mb.labeled = {lab[0], lab[1]};
    mb.unlabeled = {unl[0], unl[1]};
    StepMetrics m = tr.train_step(tr.make_batch(mb), 0);
    c.require(m.loss_u > 0.0, "consistency term inactive");

    const double h = 1e-3;
    int checked = 0;
    bool all_zero = true;
    for (auto& p : tr.model().params()) {
        if (p.name.rfind("d0.main.", 0) != 0) continue;
        for (int64_t j = 0; j < p.value->size(); ++j) {
            double keep = (*p.value)[j];
            (*p.value)[j] = keep + h;
            double fp = tr.recompute_unsup_loss(0);
            (*p.value)[j] = keep - h;
            double fm = tr.recompute_unsup_loss(0);
            (*p.value)[j] = keep;
            if (fp - fm != 0.0) {
                all_zero = false;
                c.require(false, "nonzero FD grad at " + p.name);
            }
            ++checked;
        }
    }
    c.require(checked > 0, "no main-decoder parameters found");

    // the probe is not vacuous: an auxiliary-decoder weight must register
    bool aux_sensitive = false;
    for (auto& p : tr.model().params()) {
        if (p.name.rfind("d0.aux0.", 0) != 0 || p.name.back() != 'w') continue;
        double keep = (*p.value)[0];
        (*p.value)[0] = keep + h;
        double fp = tr.recompute_unsup_loss(0);
        (*p.value)[0] = keep - h;
        double fm = tr.recompute_unsup_loss(0);
        (*p.value)[0] = keep;
        aux_sensitive = fp != fm;
        break;
    }
    c.require(aux_sensitive, "probe is insensitive even to aux-decoder weights");

    double dt = elapsed_s(t0);
    c.require(dt < 60.0, "runtime " + std::to_string(dt) + "s exceeds 1 min");
    if (all_zero)
        c.note("FD grad of the consistency term is exactly 0 for all " +
               std::to_string(checked) + " main-decoder params, " + std::to_string(dt) + "s");
    fs::remove_all(data_dir);
    fs::remove_all(out);
    return c.ok;
}

// ---------- criterion 3: perturbation invariants ----------

bool criterion3(Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(73);
    PerturbParams pp;

    // proportional noise bound
    {
        Tensor z = random_tensor({2, 4, 5, 5}, rng, -2.0, 2.0);
        for (auto& v : z.v)
            if (std::abs(v) < 1e-3) v = 0.5;
        bool bounded = true;
        for (int trial = 0; trial < 200 && bounded; ++trial) {
            Perturbed p = f_noise(z, pp, rng);
            for (int64_t i = 0; i < z.size(); ++i)
                bounded &= std::abs(p.z[i] - z[i]) <= 0.3 * std::abs(z[i]) + 1e-12;
        }
        c.require(bounded, "f_noise exceeds the 0.3 proportional bound");
    }
    // masked fraction on uniform-saliency inputs
    {
        int64_t masked = 0, total = 0;
        for (int trial = 0; trial < 2000; ++trial) {
            Tensor z = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
            Perturbed p = f_drop(z, pp, rng);
            for (int64_t i = 0; i < z.size(); ++i) {
                masked += p.z[i] == 0.0 && z[i] != 0.0;
                ++total;
            }
        }
        double frac = static_cast<double>(masked) / static_cast<double>(total);
        c.require(frac > 0.08 && frac < 0.42,
                  "f_drop masked fraction " + std::to_string(frac) + " outside [0.08, 0.42]");
    }
    // adversarial perturbation norm
    {
        Decoder dec;
        dec.init(3, 8, rng);
        Tensor z = random_tensor({2, 8, 2, 2}, rng);
        Perturbed p = i_vat(z, dec, pp, rng);
        for (int b = 0; b < 2; ++b) {
            double sq = 0.0;
            for (int ch = 0; ch < 8; ++ch)
                for (int y = 0; y < 2; ++y)
                    for (int x = 0; x < 2; ++x) {
                        double d = p.z.at(b, ch, y, x) - z.at(b, ch, y, x);
                        sq += d * d;
                    }
            c.require(std::abs(std::sqrt(sq) - pp.vat_eps) < 1e-9 * pp.vat_eps,
                      "i_vat norm != eps for sample " + std::to_string(b));
        }
    }
    // object/context masks partition the feature map
    {
        Tensor logits = random_tensor({1, 3, 8, 8}, rng);
        Tensor mo, mc;
        object_context_masks(logits, 4, 4, 0, &mo, &mc);
        bool partition = true;
        for (int64_t i = 0; i < mo.size(); ++i) partition &= mo[i] + mc[i] == 1.0;
        Tensor z = random_tensor({1, 5, 4, 4}, rng);
        Perturbed a = obj_msk(z, logits, pp);
        Perturbed b = con_msk(z, logits, pp);
        for (int64_t i = 0; i < z.size(); ++i)
            partition &= std::abs(a.z[i] + b.z[i] - z[i]) < 1e-12;
        c.require(partition, "obj/con masks do not partition z");
    }

    double dt = elapsed_s(t0);
    c.require(dt < 120.0, "runtime " + std::to_string(dt) + "s exceeds 2 min");
    c.note("noise bound, drop fraction, vat norm, mask partition all hold, " +
           std::to_string(dt) + "s");
    return c.ok;
}

// ---------- criterion 4: schedule exactness ----------

bool criterion4(Ctx& c) {
    const double tol = 1e-12;
    const double T = 137.0;
    c.require(std::abs(ramp_exp(0.0, T, 30.0) - 30.0 * static_cast<double>(expl(-5.0L))) <= tol,
              "ramp_exp(0) != 30 e^-5");
    c.require(std::abs(ramp_exp(T, T, 30.0) - 30.0) <= tol, "ramp_exp(T) != 30");
    for (int C : {2, 4, 21})
        c.require(std::abs(ramp_log_threshold(0.0, T, 0.9, C) - 1.0 / C) <= tol,
                  "ramp_log_threshold(0) != 1/C for C=" + std::to_string(C));
    c.require(std::abs(ramp_log_threshold(1000.0 * T, T, 0.9, 4) - 0.9) <= tol,
              "ramp_log_threshold asymptote != 0.9");
    c.require(std::abs(poly_lr(0, 137, 0.01, 0.9) - 0.01) <= tol, "poly_lr(0) != base");
    c.require(std::abs(poly_lr(137, 137, 0.01, 0.9)) <= tol, "poly_lr(max) != 0");
    c.note("all endpoints exact to 1e-12");
    return c.ok;
}

// ---------- criterion 5: desk-scale SSL trend ----------

bool criterion5(Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    fs::path train_dir = fs::temp_directory_path() / "cct_acc5_train";
    fs::path val_dir = fs::temp_directory_path() / "cct_acc5_val";

    DatasetSpec ts;
    ts.n_labeled = 20;
    ts.n_unlabeled = 480;
    ts.C = 4;
    ts.seed = 100;
    fs::remove_all(train_dir);
    Manifest train = generate_dataset(ts, train_dir);
    DatasetSpec vs;
    vs.n_labeled = 40;
    vs.C = 4;
    vs.seed = 900;
    fs::remove_all(val_dir);
    Manifest val = generate_dataset(vs, val_dir);

    const AuxRoster roster = {{PerturbationKind::F_NOISE, 1}, {PerturbationKind::F_DROP, 1},
                              {PerturbationKind::DROPOUT, 1}, {PerturbationKind::OBJ_MSK, 1},
                              {PerturbationKind::CON_MSK, 1}, {PerturbationKind::G_CUTOUT, 1},
                              {PerturbationKind::I_VAT, 1}};
    auto run_one = [&](TrainMode mode, bool abce, uint64_t seed, const std::string& tag) {
        TrainConfig cfg;
        cfg.mode = mode;
        cfg.batch = 4;
        cfg.seed = seed;
        cfg.optim.lr = 0.1;
        cfg.use_abce = abce;
        cfg.rampup_frac_abce = 0.1;  // match the consistency-weight ramp
        cfg.roster = roster;
        cfg.loss.lambda_u = 3.0;
        cfg.log_every = 1000;
        // the unlabeled cycle defines a cct epoch (120 steps) while a
        // supervised epoch is only 5 steps; 600 vs 18 epochs gives both
        // methods a comparable optimization-step budget (3000 vs 2160)
        cfg.epochs = mode == TrainMode::supervised_baseline ? 600 : 18;
        fs::path out = scratch("cct_acc5_" + tag);
        double best = Trainer(cfg, train, std::nullopt, val, out).run();
        fs::remove_all(out);
        return best;
    };

    double base_sum = 0.0, cct_sum = 0.0, abce_sum = 0.0;
    std::ostringstream rows;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        double b = run_one(TrainMode::supervised_baseline, false, seed,
                           "base_s" + std::to_string(seed));
        double ct = run_one(TrainMode::cct, false, seed, "cct_s" + std::to_string(seed));
        double ab = run_one(TrainMode::cct, true, seed, "abce_s" + std::to_string(seed));
        base_sum += b;
        cct_sum += ct;
        abce_sum += ab;
        rows << " seed" << seed << " base=" << b << " cct=" << ct << " abce=" << ab;
    }
    double base_mean = base_sum / 3.0, cct_mean = cct_sum / 3.0, abce_mean = abce_sum / 3.0;

    c.require(cct_mean >= base_mean + 0.03,
              "consistency training gains < 3 mIoU points over the baseline");
    c.require(abce_mean >= cct_mean - 0.01, "annealed CE costs > 1 mIoU point");
    double dt = elapsed_s(t0);
    c.require(dt < 2700.0, "runtime " + std::to_string(dt) + "s exceeds 45 min");
    std::ostringstream s;
    s << "mean val mIoU base=" << base_mean << " cct=" << cct_mean << " abce=" << abce_mean
      << " (" << rows.str() << "), " << static_cast<int>(dt) << "s";
    c.note(s.str());

    fs::remove_all(train_dir);
    fs::remove_all(val_dir);
    return c.ok;
}

// ---------- criterion 6: distance-measure suite ----------

bool criterion6(Ctx& c) {
    Rng rng(76);
    Tensor p = random_probmap({2, 3, 4, 4}, rng);
    c.require(std::abs(dist_mse(p, p)) <= 1e-12, "MSE(p,p) != 0");
    c.require(std::abs(dist_kl(p, p)) <= 1e-12, "KL(p,p) != 0");
    c.require(std::abs(dist_js(p, p)) <= 1e-12, "JS(p,p) != 0");

    Tensor q = random_probmap({2, 3, 4, 4}, rng);
    c.require(std::abs(dist_js(p, q) - dist_js(q, p)) <= 1e-12, "JS asymmetric");
    c.require(std::abs(dist_kl(p, q) - dist_kl(q, p)) > 1e-6, "no KL asymmetry witness");

    Tensor a({1, 2, 1, 1}), b({1, 2, 1, 1});
    a.at(0, 0, 0, 0) = 1.0;
    b.at(0, 1, 0, 0) = 1.0;
    c.require(std::abs(dist_mse(a, b) - 1.0) <= 1e-12, "MSE one-hot swap != 1.0");
    c.note("identity, JS symmetry, KL asymmetry, MSE hand value all hold");
    return c.ok;
}

// ---------- criterion 7: pseudo-label unit suite ----------

bool criterion7(Ctx& c) {
    PseudoLabelConfig cfg;  // thresholds 0.05 / 0.30
    // three foreground classes, six scripted pixels in a 2x3 map
    Tensor cams({3, 2, 3});
    auto set = [&](int y, int x, double m0, double m1, double m2) {
        cams.v[static_cast<size_t>(0) * 6 + y * 3 + x] = m0;
        cams.v[static_cast<size_t>(1) * 6 + y * 3 + x] = m1;
        cams.v[static_cast<size_t>(2) * 6 + y * 3 + x] = m2;
    };
    set(0, 0, 0.01, 0.02, 0.04);  // below theta_bg everywhere -> background
    set(0, 1, 0.10, 0.60, 0.20);  // map 1 confident -> class 2
    set(0, 2, 0.10, 0.20, 0.15);  // in the dead band -> IGNORE
    set(1, 0, 0.05, 0.05, 0.05);  // exactly theta_bg -> IGNORE (strict)
    set(1, 1, 0.30, 0.10, 0.10);  // exactly theta_fg -> IGNORE (strict)
    set(1, 2, 0.00, 0.00, 0.95);  // map 2 confident -> class 3

    LabelBatch lbl = pseudo_labels(cams, cfg);
    c.require(lbl.at(0, 0, 0) == 0, "confident background not labeled 0");
    c.require(lbl.at(0, 0, 1) == 2, "foreground argmax+1 mapping wrong");
    c.require(lbl.at(0, 0, 2) == kIgnore, "dead band not IGNORE");
    c.require(lbl.at(0, 1, 0) == kIgnore, "score == theta_bg must be IGNORE");
    c.require(lbl.at(0, 1, 1) == kIgnore, "score == theta_fg must be IGNORE");
    c.require(lbl.at(0, 1, 2) == 3, "strong activation not labeled");

    // monotone in theta_fg: raising it only removes foreground pixels
    Rng rng(77);
    Tensor rnd({3, 8, 8});
    for (auto& v : rnd.v) v = rng.uniform();
    PseudoLabelConfig lo = cfg, hi = cfg;
    lo.theta_fg = 0.3;
    hi.theta_fg = 0.7;
    LabelBatch llo = pseudo_labels(rnd, lo), lhi = pseudo_labels(rnd, hi);
    bool mono = true;
    for (size_t i = 0; i < llo.v.size(); ++i) {
        bool fg_lo = llo.v[i] != 0 && llo.v[i] != kIgnore;
        bool fg_hi = lhi.v[i] != 0 && lhi.v[i] != kIgnore;
        if (fg_hi && !fg_lo) mono = false;           // foreground may only shrink
        if (!fg_hi && !fg_lo && llo.v[i] != lhi.v[i]) mono = false;  // background stable
    }
    c.require(mono, "raising theta_fg created foreground or moved background");
    c.note("threshold rule and theta_fg monotonicity hold");
    return c.ok;
}

// ---------- criterion 8: mIoU oracle equivalence ----------

bool criterion8(Ctx& c) {
    Rng rng(78);
    int exact = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const int C = 2 + rng.uniform_int(3);
        LabelBatch truth(1, 8, 8), pred(1, 8, 8);
        for (auto& v : truth.v)
            v = rng.uniform() < 0.1 ? kIgnore : static_cast<uint8_t>(rng.uniform_int(C));
        for (auto& v : pred.v) v = static_cast<uint8_t>(rng.uniform_int(C));

        ConfusionMatrix cm(C);
        cm.accumulate(pred, truth);

        double sum = 0.0;
        int counted = 0;
        for (int cls = 0; cls < C; ++cls) {
            int64_t inter = 0, uni = 0;
            for (size_t i = 0; i < truth.v.size(); ++i) {
                if (truth.v[i] == kIgnore) continue;
                bool t = truth.v[i] == cls, pr = pred.v[i] == cls;
                inter += t && pr;
                uni += t || pr;
            }
            if (uni == 0) continue;
            sum += static_cast<double>(inter) / static_cast<double>(uni);
            ++counted;
        }
        double got = cm.miou();
        bool same = counted ? got == sum / counted : std::isnan(got);
        exact += same;
        if (!same) c.require(false, "mismatch on instance " + std::to_string(inst));
    }
    c.note(std::to_string(exact) + "/100 instances match the brute-force oracle exactly");
    return c.ok;
}

// ---------- criterion 9: multi-domain routing and reversal ----------

bool criterion9(Ctx& c) {
    fs::path d0_dir = fs::temp_directory_path() / "cct_acc9_d0";
    fs::path d1_dir = fs::temp_directory_path() / "cct_acc9_d1";
    fs::path out = scratch("cct_acc9_out");
    Manifest d0 = make_shapes(d0_dir, 2, 4, 4, 5);
    Manifest d1 = make_shapes(d1_dir, 2, 4, 3, 6);

    TrainConfig cfg;
    cfg.mode = TrainMode::cct_multidomain;
    cfg.batch = 2;
    cfg.seed = 11;
    cfg.enc_w1 = 4;
    cfg.enc_w2 = 4;
    cfg.enc_w3 = 8;
    cfg.roster = {{PerturbationKind::F_NOISE, 1}, {PerturbationKind::DROPOUT, 1}};
    cfg.augment_data = false;
    cfg.use_discriminator = true;
    cfg.loss.lambda_adv = 0.02;
    Trainer tr(cfg, d0, d1, std::nullopt, out);
    tr.set_total_iters(10);

    // a domain-1 iteration must leave domain-2 heads bit-identical
    std::vector<Tensor> before;
    for (auto& p : tr.model().params()) before.push_back(*p.value);
    auto lab = d0.domain(0).split_indices("labeled");
    auto unl = d0.domain(0).split_indices("unlabeled");
    MixedBatch mb;
    mb.labeled = {lab[0], lab[1]};
    mb.unlabeled = {unl[0], unl[1]};
    tr.train_step(tr.make_batch(mb, 0), 0);

    auto ps = tr.model().params();
    bool other_frozen = true, enc_changed = false;
    for (size_t i = 0; i < ps.size(); ++i) {
        const std::string& n = ps[i].name;
        bool same = ps[i].value->v == before[i].v;
        if (n.rfind("d1.", 0) == 0)
            other_frozen &= same;
        else if (n.rfind("enc.", 0) == 0)
            enc_changed |= !same;
    }
    c.require(other_frozen, "a domain-1 step modified domain-2 decoder parameters");
    c.require(enc_changed, "shared encoder unchanged by a training step");

    // gradient reversal: encoder gradient of the adversarial term flips sign
    auto unl1 = d1.domain(0).split_indices("unlabeled");
    MixedBatch m1;
    m1.labeled = {d1.domain(0).split_indices("labeled")[0], d1.domain(0).split_indices("labeled")[1]};
    m1.unlabeled = {unl1[0], unl1[1]};
    Tensor xu0 = tr.make_batch(mb, 0).x_u;
    Tensor xu1 = tr.make_batch(m1, 1).x_u;

    tr.model().zero_grads();
    double l_rev = tr.adversarial_phase(xu0, xu1, 1.0);
    std::vector<Tensor> g_rev;
    for (auto& p : tr.model().params()) g_rev.push_back(*p.grad);
    tr.model().zero_grads();
    double l_off = tr.adversarial_phase(xu0, xu1, -1.0);  // reversal disabled
    c.require(std::abs(l_rev - l_off) < 1e-12 && l_rev > 0.0,
              "adversarial loss value depends on the reversal setting");

    ps = tr.model().params();
    bool flipped = true, enc_nonzero = false, disc_same = true, disc_nonzero = false;
    for (size_t i = 0; i < ps.size(); ++i) {
        const std::string& n = ps[i].name;
        const Tensor& g = *ps[i].grad;
        if (n.rfind("enc.", 0) == 0) {
            for (int64_t j = 0; j < g.size(); ++j) {
                flipped &= std::abs(g[j] + g_rev[i][j]) <= 1e-12 * std::abs(g_rev[i][j]);
                enc_nonzero |= g[j] != 0.0;
            }
        } else if (n.rfind("disc.", 0) == 0) {
            for (int64_t j = 0; j < g.size(); ++j) {
                disc_same &= g[j] == g_rev[i][j];
                disc_nonzero |= g[j] != 0.0;
            }
        }
    }
    c.require(flipped && enc_nonzero, "encoder adversarial gradient does not flip sign");
    c.require(disc_same && disc_nonzero, "discriminator gradient affected by reversal");
    c.note("domain isolation, encoder sign flip at lambda_adv=0.02, discriminator invariance");

    fs::remove_all(d0_dir);
    fs::remove_all(d1_dir);
    fs::remove_all(out);
    return c.ok;
}

// ---------- criterion 10: probe trend ----------

bool criterion10(Ctx& c) {
    auto t0 = std::chrono::steady_clock::now();
    fs::path train_dir = fs::temp_directory_path() / "cct_acc10_train";
    fs::path val_dir = fs::temp_directory_path() / "cct_acc10_val";
    fs::path out = scratch("cct_acc10_out");
    Manifest train = make_shapes(train_dir, 20, 0, 4, 100);
    Manifest val = make_shapes(val_dir, 40, 0, 4, 900);

    TrainConfig cfg;
    cfg.mode = TrainMode::supervised_baseline;
    cfg.batch = 4;
    cfg.seed = 1;
    cfg.optim.lr = 0.1;
    cfg.use_abce = false;
    cfg.epochs = 600;
    cfg.log_every = 1000;
    Trainer tr(cfg, train, std::nullopt, val, out);
    tr.run();
    Model& m = tr.model();

    double feat_b = 0.0, feat_i = 0.0, in_b = 0.0, in_i = 0.0;
    int n = 0;
    const auto& entries = val.domain(0).entries;
    for (size_t i = 0; i < entries.size(); ++i) {
        Example ex = load_example(val, 0, static_cast<int>(i));
        if (!ex.has_label) continue;
        ProbeStats fs_ = boundary_stats(feature_smoothness(ex.image, m.enc), ex.label);
        ProbeStats is_ = boundary_stats(input_smoothness(ex.image), ex.label);
        feat_b += fs_.mean_boundary;
        feat_i += fs_.mean_interior;
        in_b += is_.mean_boundary;
        in_i += is_.mean_interior;
        ++n;
    }
    double feat_ratio = (feat_b / n) / (feat_i / n);
    double in_ratio = (in_b / n) / (in_i / n);
    c.require(feat_ratio > 1.5, "feature boundary/interior ratio <= 1.5");
    c.require(in_ratio < feat_ratio, "input-level ratio not below the feature-level ratio");
    std::ostringstream s;
    s << "feature ratio " << feat_ratio << " vs input ratio " << in_ratio << " over " << n
      << " images, " << static_cast<int>(elapsed_s(t0)) << "s";
    c.note(s.str());

    fs::remove_all(train_dir);
    fs::remove_all(val_dir);
    fs::remove_all(out);
    return c.ok;
}

const char* kSummaries[10] = {
    "finite-difference gradient integrity of all ops and losses",
    "stop-gradient contract on the consistency term",
    "feature-perturbation invariants",
    "schedule endpoint exactness",
    "semi-supervised trend on the synthetic shapes task",
    "prediction-distance measure properties",
    "pseudo-label threshold rule",
    "mIoU oracle equivalence",
    "multi-domain routing and gradient reversal",
    "boundary-smoothness probe trend",
};

bool run_criterion(int n) {
    Ctx c;
    bool ok = false;
    try {
        switch (n) {
            case 1: ok = criterion1(c); break;
            case 2: ok = criterion2(c); break;
            case 3: ok = criterion3(c); break;
            case 4: ok = criterion4(c); break;
            case 5: ok = criterion5(c); break;
            case 6: ok = criterion6(c); break;
            case 7: ok = criterion7(c); break;
            case 8: ok = criterion8(c); break;
            case 9: ok = criterion9(c); break;
            case 10: ok = criterion10(c); break;
            default:
                std::cerr << "error: criterion must be in 1..10\n";
                return false;
        }
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail << (c.detail.str().empty() ? "" : "; ") << "exception: " << e.what();
        ok = false;
    }
    std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << " - " << kSummaries[n - 1];
    if (!c.detail.str().empty()) std::cout << " (" << c.detail.str() << ")";
    std::cout << std::endl;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    int which = 0;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) {
            which = std::atoi(argv[++i]);
        } else if (a == "--help" || a == "-h") {
            std::cout << "usage: acceptance [--criterion N]   (N in 1..10; default: all)\n";
            return 0;
        } else {
            std::cerr << "error: unknown argument " << a << "\n";
            return 2;
        }
    }
    bool all_ok = true;
    if (which == 0) {
        for (int n = 1; n <= 10; ++n) all_ok &= run_criterion(n);
    } else {
        all_ok = run_criterion(which);
    }
    return all_ok ? 0 : 1;
}
