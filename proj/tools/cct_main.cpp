#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "cct/datasynth.hpp"
#include "cct/eval.hpp"
#include "cct/perturb.hpp"
#include "cct/probe.hpp"
#include "cct/trainer.hpp"
#include "cct/weaklabels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
    cct::DatasetSpec spec = cct::DatasetSpec::from_json_file(spec_path);
    if (seed) spec.seed = *seed;
    spec.validate();
    cct::Manifest m = cct::generate_dataset(spec, out_dir);
    std::cout << (m.root / "manifest.json").string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& data2_dir, const std::string& val_dir,
              const std::string& out_dir) {
    cct::TrainConfig cfg = cct::TrainConfig::from_json_file(config_path);
    if (cfg.mode == cct::TrainMode::cct_multidomain && data2_dir.empty())
        throw cct::ConfigError("mode cct_multidomain requires --data2");
    if (cfg.mode != cct::TrainMode::cct_multidomain && !data2_dir.empty())
        throw cct::ConfigError("--data2 is only valid with mode cct_multidomain");

    cct::Manifest data = cct::Manifest::load(data_dir);
    std::optional<cct::Manifest> data2, val;
    if (!data2_dir.empty()) data2 = cct::Manifest::load(data2_dir);
    if (!val_dir.empty()) val = cct::Manifest::load(val_dir);

    int n_aux = cfg.mode == cct::TrainMode::supervised_baseline ? 0 : cct::roster_total(cfg.roster);
    std::cout << "mode " << cct::mode_name(cfg.mode) << ", " << n_aux
              << " auxiliary decoders, seed " << cfg.seed << ", " << cfg.epochs << " epochs\n";

    cct::Trainer trainer(std::move(cfg), std::move(data), std::move(data2), std::move(val),
                         out_dir);
    double best = trainer.run();
    std::cout << "best val mIoU " << best << ", final val mIoU " << trainer.final_miou() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_dir, bool multiscale) {
    cct::Model m = cct::Model::load(ckpt_dir);
    cct::Manifest mf = cct::Manifest::load(data_dir);
    if (m.num_classes(0) != mf.domain(0).num_classes)
        throw cct::ConfigError("class-count mismatch: checkpoint has " +
                               std::to_string(m.num_classes(0)) + ", dataset has " +
                               std::to_string(mf.domain(0).num_classes));
    cct::EvalReport r = cct::evaluate(m, mf, 0, multiscale);
    json out;
    out["miou"] = r.miou;
    out["per_class"] = r.per_class;
    out["num_images"] = r.num_images;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_probe(const std::string& images_dir, const std::string& out_dir,
              const std::string& ckpt_dir, int patch) {
    cct::Manifest mf = cct::Manifest::load(images_dir);
    std::optional<cct::Model> model;
    if (!ckpt_dir.empty()) model = cct::Model::load(ckpt_dir);
    fs::create_directories(out_dir);

    std::ofstream stats(fs::path(out_dir) / "stats.csv");
    stats << "image,mean_boundary,mean_interior,ratio\n";

    int ok = 0, failed = 0;
    const auto& entries = mf.domain(0).entries;
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        cct::Example ex;
        try {
            ex = cct::load_example(mf, 0, static_cast<int>(i));
        } catch (const std::exception& err) {
            std::cerr << "warning: skipping " << e.image << ": " << err.what() << "\n";
            ++failed;
            continue;
        }
        std::string stem = fs::path(e.image).stem().string();
        cct::Tensor in_map = cct::input_smoothness(ex.image, patch);
        cct::write_gray_png(fs::path(out_dir) / ("input_" + stem + ".png"),
                            cct::normalize_map(in_map));
        const cct::Tensor* stats_map = &in_map;
        cct::Tensor feat_map;
        if (model) {
            feat_map = cct::feature_smoothness(ex.image, model->enc);
            cct::write_gray_png(fs::path(out_dir) / ("feature_" + stem + ".png"),
                                cct::normalize_map(feat_map));
            stats_map = &feat_map;
        }
        if (ex.has_label) {
            cct::ProbeStats st = cct::boundary_stats(*stats_map, ex.label);
            stats << e.image << ',' << st.mean_boundary << ',' << st.mean_interior << ','
                  << st.ratio << '\n';
        }
        ++ok;
    }
    if (ok == 0 && failed > 0) {
        std::cerr << "error: all images failed to load\n";
        return 1;
    }
    return 0;
}

int cmd_pseudo_label(const std::string& ckpt_dir, const std::string& data_dir, double theta_bg,
                     double theta_fg) {
    cct::PseudoLabelConfig cfg{theta_bg, theta_fg};
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw cct::ConfigError(e.what());
    }
    cct::Manifest mf = cct::Manifest::load(data_dir);
    if (mf.domain(0).split_indices("weak").empty())
        throw cct::ConfigError("dataset has no weak split");
    cct::Model m = cct::Model::load(ckpt_dir);
    cct::PseudoStats st = cct::write_pseudo_labels(m, mf, 0, cfg);
    std::cout << st.labeled_px << " labeled px, " << st.ignored_px << " ignored px\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-consistency training for semi-supervised segmentation"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, data_dir, data2_dir, val_dir, ckpt_dir;
    std::optional<uint64_t> seed;
    bool multiscale = false;
    int patch = 20;
    double theta_bg = 0.05, theta_fg = 0.30;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shapes dataset");
    gen->add_option("--spec", spec_path, "dataset spec JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed, "override the spec's seed");

    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--config", config_path, "training config JSON")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--data2", data2_dir, "second-domain dataset directory");
    train->add_option("--val", val_dir, "validation dataset directory");
    train->add_option("--out", out_dir, "run output directory")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_flag("--multiscale", multiscale, "multi-scale + flip inference");

    auto* probe = app.add_subcommand("probe", "Smoothness probe: heatmaps and boundary stats");
    probe->add_option("--images", data_dir, "dataset directory")->required();
    probe->add_option("--out", out_dir, "output directory")->required();
    probe->add_option("--checkpoint", ckpt_dir, "checkpoint for feature-level maps");
    probe->add_option("--patch", patch, "patch size for input-level maps");

    auto* pl = app.add_subcommand("pseudo-label", "Write CAM-based pseudo labels");
    pl->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
    pl->add_option("--data", data_dir, "dataset directory")->required();
    pl->add_option("--theta-bg", theta_bg, "background threshold");
    pl->add_option("--theta-fg", theta_fg, "foreground threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir, seed);
        if (train->parsed()) return cmd_train(config_path, data_dir, data2_dir, val_dir, out_dir);
        if (ev->parsed()) return cmd_eval(ckpt_dir, data_dir, multiscale);
        if (probe->parsed()) return cmd_probe(data_dir, out_dir, ckpt_dir, patch);
        if (pl->parsed()) return cmd_pseudo_label(ckpt_dir, data_dir, theta_bg, theta_fg);
    } catch (const cct::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
