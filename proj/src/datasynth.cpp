#include "cct/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cct/nn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cct {

// ---------------- spec / manifest ----------------

void DatasetSpec::validate() const {
    if (n_labeled < 0 || n_unlabeled < 0 || n_weak < 0)
        throw std::runtime_error("dataset spec: negative counts");
    if (H < 32 || W < 32) throw std::runtime_error("dataset spec: H, W must be >= 32");
    if (H % 8 || W % 8) throw std::runtime_error("dataset spec: H, W must be multiples of 8");
    if (shape_kinds.empty() || shape_kinds.size() > 3)
        throw std::runtime_error("dataset spec: shape_kinds must be a non-empty subset of {disk, rectangle, triangle}");
    for (const auto& k : shape_kinds)
        if (k != "disk" && k != "rectangle" && k != "triangle")
            throw std::runtime_error("dataset spec: unknown shape kind " + k);
    if (C != static_cast<int>(shape_kinds.size()) + 1)
        throw std::runtime_error("dataset spec: C must equal |shape_kinds| + 1");
    if (noise_level < 0.0 || noise_level > 1.0)
        throw std::runtime_error("dataset spec: noise_level must be in [0, 1]");
    if (color_jitter < 0.0 || color_jitter > 1.0)
        throw std::runtime_error("dataset spec: color_jitter must be in [0, 1]");
}

DatasetSpec DatasetSpec::from_json_file(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read spec: " + file.string());
    json j = json::parse(is);
    DatasetSpec s;
    s.n_labeled = j.value("n_labeled", 0);
    s.n_unlabeled = j.value("n_unlabeled", 0);
    s.n_weak = j.value("n_weak", 0);
    s.H = j.value("H", 64);
    s.W = j.value("W", 64);
    if (j.contains("shape_kinds")) s.shape_kinds = j["shape_kinds"].get<std::vector<std::string>>();
    s.C = j.value("C", static_cast<int>(s.shape_kinds.size()) + 1);
    s.noise_level = j.value("noise_level", 0.15);
    s.color_jitter = j.value("color_jitter", 0.15);
    s.seed = j.value("seed", 0ull);
    s.validate();
    return s;
}

std::vector<int> ManifestDomain::split_indices(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(static_cast<int>(i));
    return out;
}

Manifest Manifest::load(const fs::path& dir) {
    fs::path file = fs::is_directory(dir) ? dir / "manifest.json" : dir;
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read manifest: " + file.string());
    json j = json::parse(is);
    Manifest m;
    m.root = file.parent_path();
    for (const auto& dj : j.at("domains")) {
        ManifestDomain d;
        d.name = dj.at("name").get<std::string>();
        d.num_classes = dj.at("num_classes").get<int>();
        for (const auto& ej : dj.at("entries")) {
            ManifestEntry e;
            e.image = ej.at("image").get<std::string>();
            if (!ej.at("label").is_null()) e.label = ej.at("label").get<std::string>();
            if (ej.contains("pseudo_label") && !ej.at("pseudo_label").is_null())
                e.pseudo_label = ej.at("pseudo_label").get<std::string>();
            if (!ej.at("image_level").is_null())
                e.image_level = ej.at("image_level").get<std::vector<int>>();
            e.split = ej.at("split").get<std::string>();
            d.entries.push_back(std::move(e));
        }
        m.domains.push_back(std::move(d));
    }
    return m;
}

void Manifest::save() const {
    json j;
    j["domains"] = json::array();
    for (const auto& d : domains) {
        json dj;
        dj["name"] = d.name;
        dj["num_classes"] = d.num_classes;
        dj["entries"] = json::array();
        for (const auto& e : d.entries) {
            json ej;
            ej["image"] = e.image;
            ej["label"] = e.label.empty() ? json(nullptr) : json(e.label);
            if (!e.pseudo_label.empty()) ej["pseudo_label"] = e.pseudo_label;
            ej["image_level"] = e.image_level.empty() ? json(nullptr) : json(e.image_level);
            ej["split"] = e.split;
            dj["entries"].push_back(std::move(ej));
        }
        j["domains"].push_back(std::move(dj));
    }
    std::ofstream os(root / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in " + root.string());
    os << j.dump(2) << "\n";
}

// ---------------- PNG I/O ----------------

void write_rgb_png(const fs::path& file, const Tensor& img) {
    const int H = img.dim(1), W = img.dim(2);
    cv::Mat m(H, W, CV_8UC3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            auto& px = m.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) {
                double v = img.v[(static_cast<size_t>(c) * H + y) * W + x];
                v = std::clamp(v, 0.0, 1.0);
                px[2 - c] = static_cast<uint8_t>(std::lround(v * 255.0));  // BGR order
            }
        }
    if (!cv::imwrite(file.string(), m))
        throw std::runtime_error("failed to write PNG: " + file.string());
}

Tensor read_rgb_png(const fs::path& file) {
    cv::Mat m = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("failed to read PNG: " + file.string());
    Tensor img({3, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& px = m.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)
                img.v[(static_cast<size_t>(c) * m.rows + y) * m.cols + x] = px[2 - c] / 255.0;
        }
    return img;
}

void write_index_png(const fs::path& file, const LabelBatch& lbl) {
    cv::Mat m(lbl.h, lbl.w, CV_8UC1);
    for (int y = 0; y < lbl.h; ++y)
        for (int x = 0; x < lbl.w; ++x) m.at<uint8_t>(y, x) = lbl.at(0, y, x);
    if (!cv::imwrite(file.string(), m))
        throw std::runtime_error("failed to write PNG: " + file.string());
}

LabelBatch read_index_png(const fs::path& file) {
    cv::Mat m = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("failed to read PNG: " + file.string());
    LabelBatch lbl(1, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) lbl.at(0, y, x) = m.at<uint8_t>(y, x);
    return lbl;
}

void write_gray_png(const fs::path& file, const Tensor& hw) {
    const int H = hw.dim(0), W = hw.dim(1);
    cv::Mat m(H, W, CV_8UC1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            m.at<uint8_t>(y, x) = static_cast<uint8_t>(
                std::lround(std::clamp(hw.v[static_cast<size_t>(y) * W + x], 0.0, 1.0) * 255.0));
    if (!cv::imwrite(file.string(), m))
        throw std::runtime_error("failed to write PNG: " + file.string());
}

Tensor stack_images(const std::vector<Tensor>& imgs) {
    const int B = static_cast<int>(imgs.size());
    const int C = imgs[0].dim(0), H = imgs[0].dim(1), W = imgs[0].dim(2);
    Tensor out({B, C, H, W});
    for (int b = 0; b < B; ++b)
        std::copy(imgs[static_cast<size_t>(b)].v.begin(), imgs[static_cast<size_t>(b)].v.end(),
                  out.v.begin() + static_cast<int64_t>(b) * C * H * W);
    return out;
}

// ---------------- shape rendering ----------------

namespace {

struct Shape {
    int kind;  // 0 disk, 1 rectangle, 2 triangle (index into canonical names)
    int cls;   // class id (kind index in spec + 1)
    double cx, cy, r;       // center, nominal radius
    double angle;           // rotation
    double ax, ay;          // anisotropy for rectangle
    double color[3];
};

bool inside(const Shape& s, double x, double y) {
    double dx = x - s.cx, dy = y - s.cy;
    double ca = std::cos(s.angle), sa = std::sin(s.angle);
    double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
    switch (s.kind) {
        case 0:
            return dx * dx + dy * dy <= s.r * s.r;
        case 1:
            return std::abs(u) <= s.r * s.ax && std::abs(v) <= s.r * s.ay;
        case 2: {
            // equilateral triangle of circumradius r, one vertex along +u
            double px[3], py[3];
            for (int i = 0; i < 3; ++i) {
                double th = 2.0 * M_PI * i / 3.0;
                px[i] = s.r * std::cos(th);
                py[i] = s.r * std::sin(th);
            }
            double sgn = 0.0;
            for (int i = 0; i < 3; ++i) {
                int j = (i + 1) % 3;
                double cr = (px[j] - px[i]) * (v - py[i]) - (py[j] - py[i]) * (u - px[i]);
                if (i == 0)
                    sgn = cr;
                else if (cr * sgn < 0.0)
                    return false;
            }
            return true;
        }
    }
    return false;
}

int canonical_kind(const std::string& name) {
    if (name == "disk") return 0;
    if (name == "rectangle") return 1;
    return 2;
}

void render_example(const DatasetSpec& spec, Rng& rng, Tensor* img, LabelBatch* lbl,
                    std::vector<uint8_t>* present) {
    const int H = spec.H, W = spec.W;
    *img = Tensor({3, H, W});
    *lbl = LabelBatch(1, H, W, 0);
    present->assign(static_cast<size_t>(spec.C - 1), 0);

    // background: base color + directional gradient + pixel noise
    double bg[3];
    for (auto& c : bg) c = rng.uniform(0.15, 0.85);
    double gdir = rng.uniform(0.0, 2.0 * M_PI);
    double gamp = rng.uniform(0.0, 0.15);

    // shapes: distinct kinds, non-overlapping, random colors
    int max_shapes = std::min(4, spec.C - 1);
    int count = 1 + rng.uniform_int(max_shapes);
    std::vector<int> kind_order(spec.shape_kinds.size());
    for (size_t i = 0; i < kind_order.size(); ++i) kind_order[i] = static_cast<int>(i);
    rng.shuffle(kind_order);

    std::vector<Shape> shapes;
    for (int si = 0; si < count; ++si) {
        int ki = kind_order[static_cast<size_t>(si)];
        Shape s;
        s.kind = canonical_kind(spec.shape_kinds[static_cast<size_t>(ki)]);
        s.cls = ki + 1;
        bool placed = false;
        for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
            s.r = rng.uniform(0.10, 0.22) * std::min(H, W);
            s.cx = rng.uniform(s.r + 1.0, W - s.r - 1.0);
            s.cy = rng.uniform(s.r + 1.0, H - s.r - 1.0);
            s.angle = rng.uniform(0.0, 2.0 * M_PI);
            s.ax = rng.uniform(0.6, 1.0);
            s.ay = rng.uniform(0.6, 1.0);
            placed = true;
            for (const auto& o : shapes) {
                double d = std::hypot(s.cx - o.cx, s.cy - o.cy);
                if (d < s.r + o.r + 2.0) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) continue;
        // colors are anchored per class with per-image jitter, so class
        // identity is signalled by both geometry and color
        static const double kAnchors[3][3] = {
            {0.85, 0.15, 0.15}, {0.15, 0.80, 0.20}, {0.20, 0.30, 0.90}};
        const double* anchor = kAnchors[(s.cls - 1) % 3];
        for (int c = 0; c < 3; ++c)
            s.color[c] =
                std::clamp(anchor[c] + rng.uniform(-spec.color_jitter, spec.color_jitter), 0.0, 1.0);
        shapes.push_back(s);
        (*present)[static_cast<size_t>(s.cls - 1)] = 1;
    }

    const int ss = 3;  // supersampling for anti-aliasing
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double grad = gamp * ((x - W / 2.0) * std::cos(gdir) + (y - H / 2.0) * std::sin(gdir)) /
                          std::max(H, W);
            double px[3] = {bg[0] + grad, bg[1] + grad, bg[2] + grad};
            int best_cls = 0;
            for (const auto& s : shapes) {
                int hit = 0;
                for (int sy = 0; sy < ss; ++sy)
                    for (int sx = 0; sx < ss; ++sx)
                        if (inside(s, x + (sx + 0.5) / ss, y + (sy + 0.5) / ss)) ++hit;
                double cov = static_cast<double>(hit) / (ss * ss);
                if (cov > 0.0)
                    for (int c = 0; c < 3; ++c) px[c] = (1.0 - cov) * px[c] + cov * s.color[c];
                if (cov > 0.5) best_cls = s.cls;
            }
            lbl->at(0, y, x) = static_cast<uint8_t>(best_cls);
            for (int c = 0; c < 3; ++c) {
                double v = px[c] + spec.noise_level * rng.uniform(-1.0, 1.0);
                img->v[(static_cast<size_t>(c) * H + y) * W + x] = std::clamp(v, 0.0, 1.0);
            }
        }
}

}  // namespace

Manifest generate_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
    spec.validate();
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "labels");

    Manifest m;
    m.root = out_dir;
    ManifestDomain dom;
    dom.name = "synthetic";
    dom.num_classes = spec.C;

    Rng base(spec.seed);
    int global = 0;
    auto emit = [&](const std::string& split, int n) {
        for (int i = 0; i < n; ++i, ++global) {
            Rng rng = base.fork(static_cast<uint64_t>(global));
            Tensor img;
            LabelBatch lbl;
            std::vector<uint8_t> present;
            render_example(spec, rng, &img, &lbl, &present);
            if (split == "weak") {
                // weak examples must carry at least one foreground class
                int tries = 0;
                while (std::count(present.begin(), present.end(), 1) == 0 && tries < 16) {
                    Rng retry = base.fork(static_cast<uint64_t>(global) | (1ull << 48) | (static_cast<uint64_t>(tries) << 32));
                    render_example(spec, retry, &img, &lbl, &present);
                    ++tries;
                }
            }
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05d", split.c_str(), global);
            ManifestEntry e;
            e.split = split;
            e.image = std::string("images/") + name + ".png";
            write_rgb_png(out_dir / e.image, img);
            if (split == "labeled") {
                e.label = std::string("labels/") + name + ".png";
                write_index_png(out_dir / e.label, lbl);
            } else if (split == "weak") {
                e.image_level.assign(present.begin(), present.end());
            }
            dom.entries.push_back(std::move(e));
        }
    };
    emit("labeled", spec.n_labeled);
    emit("unlabeled", spec.n_unlabeled);
    emit("weak", spec.n_weak);

    m.domains.push_back(std::move(dom));
    m.save();
    return m;
}

Example load_example(const Manifest& m, int dom, int index) {
    const auto& e = m.domain(dom).entries[static_cast<size_t>(index)];
    Example ex;
    ex.image = read_rgb_png(m.root / e.image);
    if (!e.label.empty()) {
        ex.has_label = true;
        ex.label = read_index_png(m.root / e.label);
    }
    if (!e.image_level.empty()) {
        ex.has_weak = true;
        ex.present.assign(e.image_level.begin(), e.image_level.end());
    }
    return ex;
}

// ---------------- augmentation ----------------

namespace {
int nearest_src(int o, int osz, int isz) {
    int s = static_cast<int>(std::floor((o + 0.5) * static_cast<double>(isz) / osz));
    return std::clamp(s, 0, isz - 1);
}
}  // namespace

void augment(Tensor& img, LabelBatch* lbl, Rng& rng) {
    const int H = img.dim(1), W = img.dim(2);
    bool flip = rng.bernoulli(0.5);
    double scale = rng.uniform(0.5, 2.0);
    int nh = std::max(1, static_cast<int>(std::lround(H * scale)));
    int nw = std::max(1, static_cast<int>(std::lround(W * scale)));
    int offy = rng.uniform_int(std::abs(nh - H) + 1);
    int offx = rng.uniform_int(std::abs(nw - W) + 1);

    if (flip) {
        Tensor b({1, 3, H, W}, std::move(img.v));
        img = flip_horizontal(b);
        img.shape = {3, H, W};
        if (lbl)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W / 2; ++x) std::swap(lbl->at(0, y, x), lbl->at(0, y, W - 1 - x));
    }

    Tensor batched({1, 3, H, W}, img.v);
    Tensor scaled = bilinear_resize(batched, nh, nw);

    LabelBatch scaled_lbl;
    if (lbl) {
        scaled_lbl = LabelBatch(1, nh, nw);
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x)
                scaled_lbl.at(0, y, x) = lbl->at(0, nearest_src(y, nh, H), nearest_src(x, nw, W));
    }

    Tensor out({3, H, W});
    LabelBatch out_lbl(1, H, W, kIgnore);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int sy = nh >= H ? y + offy : y - offy;
            int sx = nw >= W ? x + offx : x - offx;
            bool in = sy >= 0 && sy < nh && sx >= 0 && sx < nw;
            for (int c = 0; c < 3; ++c)
                out.v[(static_cast<size_t>(c) * H + y) * W + x] =
                    in ? scaled.at(0, c, sy, sx) : 0.0;
            if (lbl) out_lbl.at(0, y, x) = in ? scaled_lbl.at(0, sy, sx) : kIgnore;
        }
    img = std::move(out);
    if (lbl) *lbl = std::move(out_lbl);
}

// ---------------- sampling ----------------

Cycler::Cycler(std::vector<int> indices, Rng r) : idx(std::move(indices)), rng(r) {
    rng.shuffle(idx);
}

int Cycler::next(bool* wrapped) {
    if (idx.empty()) throw std::runtime_error("cycler: empty index set");
    int out = idx[pos++];
    bool w = false;
    if (pos >= idx.size()) {
        pos = 0;
        rng.shuffle(idx);
        w = true;
    }
    if (wrapped) *wrapped = w;
    return out;
}

MixedBatch sample_iteration(Cycler& labeled, Cycler& unlabeled, int batch) {
    if (labeled.idx.empty())
        throw std::runtime_error("sample_iteration: labeled set is empty (pure-unsupervised training unsupported)");
    MixedBatch mb;
    for (int i = 0; i < batch; ++i) mb.labeled.push_back(labeled.next());
    for (int i = 0; i < batch; ++i) {
        bool w = false;
        mb.unlabeled.push_back(unlabeled.next(&w));
        mb.epoch_wrapped |= w;
    }
    return mb;
}

}  // namespace cct
