#include "cct/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cct/eval.hpp"
#include "cct/nn.hpp"
#include "cct/weaklabels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cct {

TrainMode mode_from_name(const std::string& s) {
    if (s == "supervised_baseline") return TrainMode::supervised_baseline;
    if (s == "cct") return TrainMode::cct;
    if (s == "cct_weak") return TrainMode::cct_weak;
    if (s == "cct_multidomain") return TrainMode::cct_multidomain;
    throw ConfigError("unknown training mode: " + s);
}

std::string mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::supervised_baseline: return "supervised_baseline";
        case TrainMode::cct: return "cct";
        case TrainMode::cct_weak: return "cct_weak";
        case TrainMode::cct_multidomain: return "cct_multidomain";
    }
    return "?";
}

// ---------------- config ----------------

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& ctx) {
    std::string bad;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok |= it.key() == k;
        if (!ok) bad += (bad.empty() ? "" : ", ") + it.key();
    }
    if (!bad.empty()) throw ConfigError("unknown config key(s) in " + ctx + ": " + bad);
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (roster.empty() && mode != TrainMode::supervised_baseline)
        throw ConfigError("roster must be non-empty");
    for (const auto& e : roster)
        if (e.count < 1) throw ConfigError("roster counts must be >= 1");
    if (loss.pairwise_subset && *loss.pairwise_subset < 2)
        throw ConfigError("pairwise subset size must be >= 2");
    if (!(abce_final > 0.0 && abce_final <= 1.0)) throw ConfigError("abce_final must be in (0, 1]");
    if (use_discriminator && mode != TrainMode::cct_multidomain)
        throw ConfigError("use_discriminator requires cct_multidomain mode");
}

TrainConfig TrainConfig::from_json_file(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read config file: " + file.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    reject_unknown(j,
                   {"mode", "epochs", "batch", "seed", "optimizer", "rampup_frac_u",
                    "rampup_frac_w", "rampup_frac_abce", "abce_final", "power", "use_abce", "loss",
                    "roster", "perturb", "augment_data", "log_every", "pretrain_epochs",
                    "use_discriminator", "stopgrad_check_every", "encoder_widths"},
                   "config");
    TrainConfig c;
    try {
        if (j.contains("mode")) c.mode = mode_from_name(j.at("mode").get<std::string>());
        get_if(j, "epochs", c.epochs);
        get_if(j, "batch", c.batch);
        get_if(j, "seed", c.seed);
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            reject_unknown(o, {"lr", "momentum", "weight_decay"}, "optimizer");
            get_if(o, "lr", c.optim.lr);
            get_if(o, "momentum", c.optim.momentum);
            get_if(o, "weight_decay", c.optim.weight_decay);
        }
        get_if(j, "rampup_frac_u", c.rampup_frac_u);
        get_if(j, "rampup_frac_w", c.rampup_frac_w);
        get_if(j, "rampup_frac_abce", c.rampup_frac_abce);
        get_if(j, "abce_final", c.abce_final);
        get_if(j, "power", c.power);
        get_if(j, "use_abce", c.use_abce);
        if (j.contains("loss")) {
            const json& l = j.at("loss");
            reject_unknown(
                l, {"lambda_u", "lambda_w", "lambda_adv", "distance", "conf_threshold",
                    "pairwise_subset"},
                "loss");
            get_if(l, "lambda_u", c.loss.lambda_u);
            get_if(l, "lambda_w", c.loss.lambda_w);
            get_if(l, "lambda_adv", c.loss.lambda_adv);
            if (l.contains("distance"))
                c.loss.distance = distance_from_name(l.at("distance").get<std::string>());
            if (l.contains("conf_threshold") && !l.at("conf_threshold").is_null())
                c.loss.conf_threshold = l.at("conf_threshold").get<double>();
            if (l.contains("pairwise_subset") && !l.at("pairwise_subset").is_null())
                c.loss.pairwise_subset = l.at("pairwise_subset").get<int>();
        }
        if (j.contains("roster")) {
            c.roster.clear();
            for (const json& e : j.at("roster")) {
                reject_unknown(e, {"kind", "count"}, "roster entry");
                c.roster.push_back(
                    {kind_from_name(e.at("kind").get<std::string>()), e.at("count").get<int>()});
            }
        }
        if (j.contains("perturb")) {
            const json& p = j.at("perturb");
            reject_unknown(p,
                           {"noise_lo", "noise_hi", "drop_gamma_lo", "drop_gamma_hi", "dropout_p",
                            "cutout_area", "vat_eps", "vat_xi", "background_class"},
                           "perturb");
            get_if(p, "noise_lo", c.perturb.noise_lo);
            get_if(p, "noise_hi", c.perturb.noise_hi);
            get_if(p, "drop_gamma_lo", c.perturb.drop_gamma_lo);
            get_if(p, "drop_gamma_hi", c.perturb.drop_gamma_hi);
            get_if(p, "dropout_p", c.perturb.dropout_p);
            get_if(p, "cutout_area", c.perturb.cutout_area);
            get_if(p, "vat_eps", c.perturb.vat_eps);
            get_if(p, "vat_xi", c.perturb.vat_xi);
            get_if(p, "background_class", c.perturb.background_class);
        }
        get_if(j, "augment_data", c.augment_data);
        get_if(j, "log_every", c.log_every);
        get_if(j, "pretrain_epochs", c.pretrain_epochs);
        get_if(j, "use_discriminator", c.use_discriminator);
        get_if(j, "stopgrad_check_every", c.stopgrad_check_every);
        if (j.contains("encoder_widths")) {
            auto w = j.at("encoder_widths").get<std::vector<int>>();
            if (w.size() != 3) throw ConfigError("encoder_widths must have 3 entries");
            c.enc_w1 = w[0];
            c.enc_w2 = w[1];
            c.enc_w3 = w[2];
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("config field error: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

// ---------------- optimizer ----------------

void sgd_update(const std::vector<ParamRef>& params, std::vector<Tensor>& momentum_buf, double lr,
                double momentum, double weight_decay) {
    for (size_t i = 0; i < params.size(); ++i) {
        const ParamRef& p = params[i];
        if (!all_finite(*p.grad))
            throw std::runtime_error("non-finite gradient in parameter " + p.name);
        Tensor& v = momentum_buf[i];
        for (int64_t j = 0; j < p.value->size(); ++j) {
            v[j] = momentum * v[j] + ((*p.grad)[j] + weight_decay * (*p.value)[j]);
            (*p.value)[j] -= lr * v[j];
        }
    }
}

// ---------------- trainer ----------------

struct Trainer::Impl {
    std::vector<ParamRef> params;
    std::vector<Tensor> momentum;
    std::vector<std::vector<size_t>> update_set;       // indices into params, per domain
    std::vector<std::vector<size_t>> main_param_idx;   // main-decoder params, per domain
    std::vector<std::vector<Rng>> branch_rng;          // [domain][aux branch]
    std::vector<std::vector<Rng>> branch_snap;
    Rng aug_rng{0}, subset_rng{0};
    Tensor cached_zu, cached_logits, cached_probs;
    double cached_omega_u = 0.0;
    int cached_dom = -1;
    std::ofstream metrics;
    StepMetrics last;
};

Trainer::Trainer(TrainConfig cfg, Manifest data, std::optional<Manifest> data2,
                 std::optional<Manifest> val, fs::path out_dir)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      data2_(std::move(data2)),
      val_(std::move(val)),
      out_(std::move(out_dir)),
      last_miou_(std::numeric_limits<double>::quiet_NaN()),
      rng_(cfg_.seed),
      impl_(std::make_unique<Impl>()) {
    cfg_.validate();
    const bool multi = cfg_.mode == TrainMode::cct_multidomain;
    if (multi && !data2_) throw ConfigError("cct_multidomain requires a second dataset");
    if (!multi && data2_) throw ConfigError("second dataset given but mode is not cct_multidomain");
    if (cfg_.mode == TrainMode::cct_weak && data_.domain(0).split_indices("weak").empty())
        throw ConfigError("cct_weak requires a non-empty weak split");
    fs::create_directories(out_);

    Rng init_rng = rng_.fork(1);
    if (multi)
        model_.init_multi({data_.domain(0).num_classes, data2_->domain(0).num_classes}, cfg_.roster,
                          init_rng, cfg_.enc_w1, cfg_.enc_w2, cfg_.enc_w3);
    else
        model_.init(data_.domain(0).num_classes, cfg_.roster, init_rng, cfg_.enc_w1, cfg_.enc_w2,
                    cfg_.enc_w3);
    model_.has_disc = cfg_.use_discriminator;

    impl_->params = model_.params();
    impl_->momentum.reserve(impl_->params.size());
    for (auto& p : impl_->params) impl_->momentum.emplace_back(p.value->shape);

    const size_t n_dom = model_.domains.size();
    impl_->update_set.resize(n_dom);
    impl_->main_param_idx.resize(n_dom);
    for (size_t i = 0; i < impl_->params.size(); ++i) {
        const std::string& name = impl_->params[i].name;
        for (size_t d = 0; d < n_dom; ++d) {
            std::string dp = "d" + std::to_string(d) + ".";
            bool mine = name.rfind("enc.", 0) == 0 || name.rfind(dp, 0) == 0 ||
                        (name.rfind("disc.", 0) == 0 && d == n_dom - 1);
            if (mine) impl_->update_set[d].push_back(i);
            if (name.rfind(dp + "main.", 0) == 0) impl_->main_param_idx[d].push_back(i);
        }
    }

    impl_->branch_rng.resize(n_dom);
    for (size_t d = 0; d < n_dom; ++d) {
        size_t K = model_.dom(static_cast<int>(d)).aux.size();
        for (size_t k = 0; k < K; ++k)
            impl_->branch_rng[d].push_back(rng_.fork(1000 + d * 4096 + k));
    }
    impl_->branch_snap = impl_->branch_rng;
    impl_->aug_rng = rng_.fork(2);
    impl_->subset_rng = rng_.fork(3);
}

Trainer::~Trainer() = default;

StepBatch Trainer::make_batch(const MixedBatch& mb, int dom) {
    const Manifest& mf = dom == 0 ? data_ : *data2_;
    StepBatch sb;

    std::vector<Tensor> imgs;
    std::vector<LabelBatch> lbls;
    for (int idx : mb.labeled) {
        Example ex = load_example(mf, 0, idx);
        if (!ex.has_label) throw std::runtime_error("labeled split entry lacks a label");
        if (cfg_.augment_data) augment(ex.image, &ex.label, impl_->aug_rng);
        imgs.push_back(std::move(ex.image));
        lbls.push_back(std::move(ex.label));
    }
    sb.x_l = stack_images(imgs);
    sb.y_l = LabelBatch(static_cast<int>(lbls.size()), lbls[0].h, lbls[0].w);
    for (size_t i = 0; i < lbls.size(); ++i)
        std::copy(lbls[i].v.begin(), lbls[i].v.end(),
                  sb.y_l.v.begin() + static_cast<long>(i * lbls[0].v.size()));

    if (mb.unlabeled.empty()) return sb;

    const bool want_pseudo = cfg_.mode == TrainMode::cct_weak;
    imgs.clear();
    lbls.clear();
    for (int idx : mb.unlabeled) {
        Example ex = load_example(mf, 0, idx);
        LabelBatch pl;
        if (want_pseudo) {
            const ManifestEntry& e = mf.domain(0).entries[static_cast<size_t>(idx)];
            if (!e.pseudo_label.empty())
                pl = read_index_png(mf.root / e.pseudo_label);
            else
                pl = LabelBatch(1, ex.image.dim(1), ex.image.dim(2), kIgnore);
        }
        if (cfg_.augment_data) augment(ex.image, want_pseudo ? &pl : nullptr, impl_->aug_rng);
        imgs.push_back(std::move(ex.image));
        if (want_pseudo) lbls.push_back(std::move(pl));
    }
    sb.x_u = stack_images(imgs);
    if (want_pseudo) {
        sb.has_pseudo = true;
        sb.y_pseudo = LabelBatch(static_cast<int>(lbls.size()), lbls[0].h, lbls[0].w);
        for (size_t i = 0; i < lbls.size(); ++i)
            std::copy(lbls[i].v.begin(), lbls[i].v.end(),
                      sb.y_pseudo.v.begin() + static_cast<long>(i * lbls[0].v.size()));
    }
    return sb;
}

double Trainer::unsup_branches(const Tensor& z_u, const Tensor& main_logits,
                               const Tensor& main_probs, int dom, bool with_grad,
                               const StepBatch* sb, StepMetrics* m, std::vector<Rng>& rngs) {
    DomainHeads& H = model_.dom(dom);
    const size_t K = H.aux.size();
    std::vector<Perturbed> pert(K);
    std::vector<Tensor> aux_logits(K), aux_probs(K);
    for (size_t k = 0; k < K; ++k) {
        pert[k] = apply_perturbation(H.aux_kinds[k], z_u, main_logits, &H.aux[k], cfg_.perturb,
                                     rngs[k]);
        aux_logits[k] = H.aux[k].forward(pert[k].z);
        aux_probs[k] = softmax_channel(aux_logits[k]);
    }

    std::vector<Tensor> gcons;
    double l_u = consistency_loss(main_probs, aux_probs, cfg_.loss, with_grad ? &gcons : nullptr);
    m->loss_u = l_u;

    std::vector<Tensor> gweak;
    if (with_grad && sb && sb->has_pseudo)
        m->loss_w = weak_loss(sb->y_pseudo, aux_logits, &gweak);

    std::vector<size_t> subset;
    std::vector<Tensor> gpw;
    if (with_grad && cfg_.loss.pairwise_subset && K >= 2) {
        size_t S = std::min<size_t>(static_cast<size_t>(*cfg_.loss.pairwise_subset), K);
        std::vector<size_t> all(K);
        for (size_t k = 0; k < K; ++k) all[k] = k;
        impl_->subset_rng.shuffle(all);
        subset.assign(all.begin(), all.begin() + static_cast<long>(S));
        std::vector<const Tensor*> sel;
        for (size_t k : subset) sel.push_back(&aux_probs[k]);
        m->loss_pw = pairwise_loss(sel, &gpw);
    }

    if (!with_grad) return l_u;

    Tensor gz_acc(z_u.shape);
    for (size_t k = 0; k < K; ++k) {
        Tensor gp = gcons[k];
        for (auto& x : gp.v) x *= m->omega_u;
        for (size_t s = 0; s < subset.size(); ++s)
            if (subset[s] == k)
                for (int64_t j = 0; j < gp.size(); ++j) gp[j] += gpw[s][j];
        Tensor glog = softmax_channel_backward(aux_probs[k], gp);
        if (!gweak.empty())
            for (int64_t j = 0; j < glog.size(); ++j) glog[j] += m->omega_w * gweak[k][j];
        Tensor gz = pert[k].apply_backward(H.aux[k].backward(glog));
        for (int64_t j = 0; j < gz_acc.size(); ++j) gz_acc[j] += gz[j];
    }
    model_.enc.backward(gz_acc);
    return l_u;
}

double Trainer::adversarial_phase(const Tensor& xu_dom0, const Tensor& xu_dom1,
                                  double lambda_rev) {
    // Phased so that the single forward caches of the encoder/discriminator
    // are consumed before the next domain's forward overwrites them. The
    // per-domain CE gradients are independent of the other domain's logits.
    double loss = 0.0;
    const Tensor* xs[2] = {&xu_dom0, &xu_dom1};
    for (int d = 0; d < 2; ++d) {
        Tensor z = model_.enc.forward(*xs[d]);
        Tensor logits = model_.disc.forward(z);
        Tensor g;
        loss += domain_ce(logits, d, &g);
        for (auto& x : g.v) x *= cfg_.loss.lambda_adv;
        Tensor gz = model_.disc.backward_reversed(g, lambda_rev);
        model_.enc.backward(gz);
    }
    return loss;
}

StepMetrics Trainer::train_step(const StepBatch& sb, int dom, const Tensor* x_adv_other) {
    DomainHeads& H = model_.dom(dom);
    const int C = H.num_classes;
    const long long T = std::max<long long>(total_iters_, 1);
    const double t = static_cast<double>(std::min(step_, T));

    StepMetrics m;
    m.lr = poly_lr(std::min(step_, T), T, cfg_.optim.lr, cfg_.power);
    m.omega_u = ramp_exp(t, cfg_.rampup_frac_u * T, cfg_.loss.lambda_u);
    m.omega_w = ramp_exp(t, cfg_.rampup_frac_w * T, cfg_.loss.lambda_w);
    m.eta = cfg_.use_abce ? ramp_log_threshold(t, cfg_.rampup_frac_abce * T, cfg_.abce_final, C)
                          : 1.0;

    model_.zero_grads();

    // supervised branch
    Tensor zl = model_.enc.forward(sb.x_l);
    Tensor yl = H.main.forward(zl);
    Tensor gl;
    m.loss_s = cfg_.use_abce ? ab_ce(yl, sb.y_l, m.eta, &gl) : cross_entropy(yl, sb.y_l, &gl);
    model_.enc.backward(H.main.backward(gl));

    // unsupervised branches
    if (cfg_.mode != TrainMode::supervised_baseline && !sb.x_u.empty()) {
        Tensor zu = model_.enc.forward(sb.x_u);
        Tensor yu = H.main.forward(zu);
        Tensor pu = softmax_channel(yu);  // detached: used as a constant below
        impl_->cached_zu = zu;
        impl_->cached_logits = yu;
        impl_->cached_probs = pu;
        impl_->cached_dom = dom;
        impl_->branch_snap[static_cast<size_t>(dom)] = impl_->branch_rng[static_cast<size_t>(dom)];

        const bool audit =
            cfg_.stopgrad_check_every > 0 && step_ % cfg_.stopgrad_check_every == 0;
        std::vector<Tensor> main_before;
        if (audit)
            for (size_t i : impl_->main_param_idx[static_cast<size_t>(dom)])
                main_before.push_back(*impl_->params[i].grad);

        unsup_branches(zu, yu, pu, dom, true, &sb, &m,
                       impl_->branch_rng[static_cast<size_t>(dom)]);

        if (audit) {
            size_t j = 0;
            for (size_t i : impl_->main_param_idx[static_cast<size_t>(dom)]) {
                const Tensor& now = *impl_->params[i].grad;
                if (std::memcmp(now.v.data(), main_before[j].v.data(),
                                now.v.size() * sizeof(double)) != 0)
                    throw std::logic_error("stop-gradient violation: consistency term reached " +
                                           impl_->params[i].name);
                ++j;
            }
        }
    }
    impl_->cached_omega_u = m.omega_u;

    if (x_adv_other && model_.has_disc && !sb.x_u.empty()) {
        if (dom == 1)
            m.loss_adv = adversarial_phase(*x_adv_other, sb.x_u);
        else
            m.loss_adv = adversarial_phase(sb.x_u, *x_adv_other);
    }

    m.loss_total = total_loss(m.loss_s, m.loss_u, m.loss_w, m.loss_pw, m.loss_adv, m.omega_u,
                              m.omega_w, cfg_.loss.lambda_adv);
    if (!(m.loss_total <= 1e4))
        throw std::runtime_error("divergence guard: total loss " + std::to_string(m.loss_total));

    const auto& set =
        impl_->update_set[model_.domains.size() > 1 ? static_cast<size_t>(dom) : 0];
    for (size_t i : set) {
        const ParamRef& p = impl_->params[i];
        if (!all_finite(*p.grad))
            throw std::runtime_error("non-finite gradient in parameter " + p.name);
        Tensor& v = impl_->momentum[i];
        for (int64_t j = 0; j < p.value->size(); ++j) {
            v[j] = cfg_.optim.momentum * v[j] +
                   ((*p.grad)[j] + cfg_.optim.weight_decay * (*p.value)[j]);
            (*p.value)[j] -= m.lr * v[j];
        }
    }

    ++step_;
    impl_->last = m;
    return m;
}

double Trainer::recompute_unsup_loss(int dom) {
    if (impl_->cached_dom != dom)
        throw std::logic_error("recompute_unsup_loss: no cached step for this domain");
    std::vector<Rng> rngs = impl_->branch_snap[static_cast<size_t>(dom)];
    StepMetrics scratch;
    scratch.omega_u = impl_->cached_omega_u;
    double l_u = unsup_branches(impl_->cached_zu, impl_->cached_logits, impl_->cached_probs, dom,
                                false, nullptr, &scratch, rngs);
    return impl_->cached_omega_u * l_u;
}

void Trainer::log_row(const StepMetrics& m, int epoch) {
    auto& os = impl_->metrics;
    os << step_ << ',' << epoch << ',' << std::setprecision(17) << m.lr << ',' << m.eta << ','
       << m.omega_u << ',' << m.loss_total << ',' << m.loss_s << ',' << m.loss_u << ','
       << m.loss_w << ',' << m.loss_pw << ',' << m.loss_adv << ',' << last_miou_ << '\n';
    os.flush();
}

void Trainer::eval_epoch() {
    if (!val_) return;
    EvalReport r = evaluate(model_, *val_, 0, false);
    last_miou_ = r.miou;
    if (r.miou > best_miou_) {
        best_miou_ = r.miou;
        model_.save(out_ / "best", step_);
    }
}

void Trainer::run_single() {
    auto labeled = data_.domain(0).split_indices("labeled");
    if (labeled.empty()) throw ConfigError("dataset has no labeled examples");
    auto unlabeled = data_.domain(0).split_indices("unlabeled");
    if (cfg_.mode == TrainMode::cct_weak) {
        auto weak = data_.domain(0).split_indices("weak");
        unlabeled.insert(unlabeled.end(), weak.begin(), weak.end());
    }
    const bool sup = cfg_.mode == TrainMode::supervised_baseline;
    if (!sup && unlabeled.empty()) throw ConfigError("mode needs unlabeled (or weak) examples");

    if (cfg_.mode == TrainMode::cct_weak) {
        Rng pre = rng_.fork(7);
        double bce = pretrain_classifier(model_, data_, 0, cfg_.pretrain_epochs, cfg_.batch,
                                         cfg_.optim.lr, cfg_.optim.momentum, pre);
        PseudoStats ps = write_pseudo_labels(model_, data_, 0, PseudoLabelConfig{});
        std::cout << "classifier pretraining: bce " << bce << "; pseudo labels: " << ps.labeled_px
                  << " labeled px, " << ps.ignored_px << " ignored px\n";
    }

    const long long spe = std::max<size_t>(1, (sup ? labeled.size() : unlabeled.size()) /
                                                  static_cast<size_t>(cfg_.batch));
    total_iters_ = static_cast<long long>(cfg_.epochs) * spe;

    if (cfg_.epochs == 0) {
        model_.save(out_ / "final", 0);
        return;
    }

    Cycler lab(labeled, rng_.fork(20));
    Cycler unl(sup ? labeled : unlabeled, rng_.fork(21));
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (long long s = 0; s < spe; ++s) {
            MixedBatch mb;
            if (sup)
                for (int i = 0; i < cfg_.batch; ++i) mb.labeled.push_back(lab.next());
            else
                mb = sample_iteration(lab, unl, cfg_.batch);
            StepMetrics m = train_step(make_batch(mb, 0), 0);
            if ((step_ - 1) % cfg_.log_every == 0) log_row(m, epoch);
        }
        eval_epoch();
        log_row(impl_->last, epoch);
    }
    model_.save(out_ / "final", step_);
}

void Trainer::run_multidomain() {
    std::vector<std::vector<int>> labs(2), unls(2);
    for (int d = 0; d < 2; ++d) {
        const Manifest& mf = d == 0 ? data_ : *data2_;
        labs[static_cast<size_t>(d)] = mf.domain(0).split_indices("labeled");
        unls[static_cast<size_t>(d)] = mf.domain(0).split_indices("unlabeled");
        if (labs[static_cast<size_t>(d)].empty() || unls[static_cast<size_t>(d)].empty())
            throw ConfigError("cct_multidomain needs labeled and unlabeled examples per domain");
    }
    const long long spe =
        std::max<size_t>(1, unls[0].size() / static_cast<size_t>(cfg_.batch));
    total_iters_ = static_cast<long long>(cfg_.epochs) * spe * 2;

    if (cfg_.epochs == 0) {
        model_.save(out_ / "final", 0);
        return;
    }

    std::vector<Cycler> lab, unl;
    for (int d = 0; d < 2; ++d) {
        lab.emplace_back(labs[static_cast<size_t>(d)], rng_.fork(20 + static_cast<uint64_t>(d)));
        unl.emplace_back(unls[static_cast<size_t>(d)], rng_.fork(30 + static_cast<uint64_t>(d)));
    }

    Tensor prev_xu0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (long long s = 0; s < spe; ++s) {
            for (int d = 0; d < 2; ++d) {
                MixedBatch mb = sample_iteration(lab[static_cast<size_t>(d)],
                                                 unl[static_cast<size_t>(d)], cfg_.batch);
                StepBatch sb = make_batch(mb, d);
                const Tensor* other =
                    (d == 1 && cfg_.use_discriminator && !prev_xu0.empty()) ? &prev_xu0 : nullptr;
                StepMetrics m = train_step(sb, d, other);
                if (d == 0) prev_xu0 = sb.x_u;
                if ((step_ - 1) % cfg_.log_every == 0) log_row(m, epoch);
            }
        }
        eval_epoch();
        log_row(impl_->last, epoch);
    }
    model_.save(out_ / "final", step_);
}

double Trainer::run() {
    impl_->metrics.open(out_ / "metrics.csv");
    impl_->metrics
        << "step,epoch,lr,eta,omega_u,loss_total,loss_s,loss_u,loss_w,loss_pw,loss_adv,miou_val\n";
    if (cfg_.mode == TrainMode::cct_multidomain)
        run_multidomain();
    else
        run_single();
    if (!val_) return last_miou_;
    if (best_miou_ < 0.0) {
        // epochs == 0: evaluate the initial model so callers still get a number
        eval_epoch();
    }
    return best_miou_;
}

}  // namespace cct
