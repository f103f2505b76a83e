#include "cct/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cct {

// ---------------- Encoder ----------------

void Encoder::init(Rng& rng, int width1, int width2, int width3) {
    if (width3 % 4 != 0) throw std::runtime_error("encoder depth must be divisible by 4");
    w1 = width1;
    w2 = width2;
    w3 = width3;
    c1.init(3, w1, 3, rng);
    c2.init(w1, w2, 3, rng);
    c3.init(w2, w3, 3, rng);
    pool_g1.grid = 1;
    pool_g2.grid = 2;
    pool_g4.grid = 4;
    const int q = w3 / 4;
    br1.init(w3, q, 1, rng);
    br2.init(w3, q, 1, rng);
    br4.init(w3, q, 1, rng);
    fuse.init(w3 + 3 * q, w3, 1, rng);
}

Tensor Encoder::forward(const Tensor& img) {
    if (img.dim(2) % 8 || img.dim(3) % 8)
        throw std::runtime_error("encoder: spatial dims must be multiples of 8, got " +
                                 shape_str(img.shape));
    Tensor a = p1.forward(r1.forward(c1.forward(img)));
    a = p2.forward(r2.forward(c2.forward(a)));
    Tensor trunk = p3.forward(r3.forward(c3.forward(a)));
    feat_h = trunk.dim(2);
    feat_w = trunk.dim(3);

    Tensor b1 = bilinear_resize(rb1.forward(br1.forward(pool_g1.forward(trunk))), feat_h, feat_w);
    Tensor b2 = bilinear_resize(rb2.forward(br2.forward(pool_g2.forward(trunk))), feat_h, feat_w);
    Tensor b4 = bilinear_resize(rb4.forward(br4.forward(pool_g4.forward(trunk))), feat_h, feat_w);
    Tensor cat = concat_channels({&trunk, &b1, &b2, &b4});
    return fuse.forward(cat);
}

Tensor Encoder::backward(const Tensor& gz, bool accum) {
    const int q = w3 / 4;
    Tensor gcat = fuse.backward(gz, accum);
    auto parts = split_channels(gcat, {w3, q, q, q});
    Tensor gtrunk = std::move(parts[0]);

    auto branch_back = [&](Tensor& gb, ReLU& rb, Conv2d& br, AdaptiveAvgPool& pool) {
        Tensor g = bilinear_resize_backward(gb, pool.grid, pool.grid);
        g = br.backward(rb.backward(g), accum);
        g = pool.backward(g);
        for (int64_t i = 0; i < g.size(); ++i) gtrunk[i] += g[i];
    };
    branch_back(parts[1], rb1, br1, pool_g1);
    branch_back(parts[2], rb2, br2, pool_g2);
    branch_back(parts[3], rb4, br4, pool_g4);

    Tensor g = c3.backward(r3.backward(p3.backward(gtrunk)), accum);
    g = c2.backward(r2.backward(p2.backward(g)), accum);
    g = c1.backward(r1.backward(p1.backward(g)), accum);
    return g;
}

void Encoder::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
    c3.collect(prefix + ".c3", out);
    br1.collect(prefix + ".br1", out);
    br2.collect(prefix + ".br2", out);
    br4.collect(prefix + ".br4", out);
    fuse.collect(prefix + ".fuse", out);
}

// ---------------- Decoder ----------------

void Decoder::init(int C, int D, Rng& rng) {
    num_classes = C;
    depth = D;
    head.init(D, C, 1, rng);
    s1.init(C, 4 * C, 1, rng);
    s2.init(C, 4 * C, 1, rng);
    s3.init(C, 4 * C, 1, rng);
}

Tensor Decoder::forward(const Tensor& z) {
    Tensor t = head.forward(z);
    t = pixel_shuffle(rs1.forward(s1.forward(t)), 2);
    t = pixel_shuffle(rs2.forward(s2.forward(t)), 2);
    t = pixel_shuffle(s3.forward(t), 2);
    return t;
}

Tensor Decoder::backward(const Tensor& gy, bool accum) {
    Tensor g = s3.backward(pixel_unshuffle(gy, 2), accum);
    g = s2.backward(rs2.backward(pixel_unshuffle(g, 2)), accum);
    g = s1.backward(rs1.backward(pixel_unshuffle(g, 2)), accum);
    g = head.backward(g, accum);
    return g;
}

void Decoder::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    head.collect(prefix + ".head", out);
    s1.collect(prefix + ".s1", out);
    s2.collect(prefix + ".s2", out);
    s3.collect(prefix + ".s3", out);
}

// ---------------- Classifier ----------------

void Classifier::init(int C, int D, Rng& rng) { fc.init(D, C - 1, rng); }

Tensor Classifier::forward(const Tensor& z) {
    in_h = z.dim(2);
    in_w = z.dim(3);
    return fc.forward(global_avg_pool(z));
}

Tensor Classifier::backward(const Tensor& gy, bool accum) {
    return global_avg_pool_backward(fc.backward(gy, accum), in_h, in_w);
}

void Classifier::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    fc.collect(prefix + ".fc", out);
}

// ---------------- Discriminator ----------------

void Discriminator::init(int D, Rng& rng) {
    c1.init(D, 64, 3, rng);
    c2.init(64, 128, 3, rng);
    c3.init(128, 2, 1, rng);
}

Tensor Discriminator::forward(const Tensor& z) {
    return c3.forward(l2.forward(c2.forward(l1.forward(c1.forward(z)))));
}

Tensor Discriminator::backward_reversed(const Tensor& gy, double lambda_rev, bool accum) {
    Tensor g = c1.backward(l1.backward(c2.backward(l2.backward(c3.backward(gy, accum)), accum)), accum);
    for (auto& x : g.v) x *= -lambda_rev;
    return g;
}

void Discriminator::collect(const std::string& prefix, std::vector<ParamRef>& out) {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
    c3.collect(prefix + ".c3", out);
}

// ---------------- Model ----------------

void Model::init(int C, const AuxRoster& r, Rng& rng, int w1, int w2, int w3) {
    init_multi({C}, r, rng, w1, w2, w3);
}

void Model::init_multi(const std::vector<int>& Cs, const AuxRoster& r, Rng& rng, int w1, int w2,
                       int w3) {
    roster = r;
    depth = w3;
    enc.init(rng, w1, w2, w3);
    domains.clear();
    for (int C : Cs) {
        DomainHeads h;
        h.num_classes = C;
        h.main.init(C, depth, rng);
        h.aux_kinds = roster_expand(r);
        h.aux.resize(h.aux_kinds.size());
        for (auto& d : h.aux) d.init(C, depth, rng);
        h.cls.init(C, depth, rng);
        domains.push_back(std::move(h));
    }
    disc.init(depth, rng);
}

std::vector<ParamRef> Model::params() {
    std::vector<ParamRef> out;
    enc.collect("enc", out);
    for (size_t i = 0; i < domains.size(); ++i) {
        std::string dp = "d" + std::to_string(i);
        domains[i].main.collect(dp + ".main", out);
        for (size_t k = 0; k < domains[i].aux.size(); ++k)
            domains[i].aux[k].collect(dp + ".aux" + std::to_string(k), out);
        domains[i].cls.collect(dp + ".cls", out);
    }
    if (has_disc) disc.collect("disc", out);
    return out;
}

void Model::zero_grads() {
    for (auto& p : params()) p.grad->zero();
}

// ---------------- checkpoint I/O ----------------

void write_array(const fs::path& file, const Tensor& t) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os.write("CCTARRAY", 8);
    uint32_t rank = static_cast<uint32_t>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t.shape) {
        uint32_t u = static_cast<uint32_t>(d);
        os.write(reinterpret_cast<const char*>(&u), 4);
    }
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + file.string());
}

Tensor read_array(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CCTARRAY", 8) != 0)
        throw std::runtime_error("bad array magic in " + file.string());
    uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 4);
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        uint32_t u = 0;
        is.read(reinterpret_cast<char*>(&u), 4);
        d = static_cast<int>(u);
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated array file: " + file.string());
    return t;
}

void Model::save(const fs::path& dir, int64_t step) const {
    fs::create_directories(dir);
    json meta;
    meta["C"] = domains[0].num_classes;
    meta["D"] = depth;
    json roster_j = json::array();
    for (const auto& e : roster) roster_j.push_back({{"kind", kind_name(e.kind)}, {"count", e.count}});
    meta["aux_roster"] = roster_j;
    meta["step"] = step;
    meta["widths"] = {enc.w1, enc.w2, enc.w3};
    json doms = json::array();
    for (const auto& d : domains) doms.push_back({{"C", d.num_classes}});
    meta["domains"] = doms;
    meta["has_disc"] = has_disc;
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";

    // params() is non-const only because ParamRef carries mutable grad views
    auto refs = const_cast<Model*>(this)->params();
    for (const auto& p : refs) write_array(dir / (p.name + ".bin"), *p.value);
}

Model Model::load(const fs::path& dir, int64_t* step) {
    std::ifstream is(dir / "meta.json");
    if (!is) throw std::runtime_error("cannot read checkpoint meta: " + (dir / "meta.json").string());
    json meta = json::parse(is);
    AuxRoster roster;
    for (const auto& e : meta.at("aux_roster"))
        roster.push_back({kind_from_name(e.at("kind").get<std::string>()), e.at("count").get<int>()});
    std::vector<int> Cs;
    for (const auto& d : meta.at("domains")) Cs.push_back(d.at("C").get<int>());
    auto widths = meta.at("widths").get<std::vector<int>>();

    Model m;
    Rng rng(0);
    m.init_multi(Cs, roster, rng, widths[0], widths[1], widths[2]);
    m.has_disc = meta.value("has_disc", false);
    for (auto& p : m.params()) {
        Tensor t = read_array(dir / (p.name + ".bin"));
        if (t.shape != p.value->shape)
            throw std::runtime_error("checkpoint shape mismatch for " + p.name);
        *p.value = std::move(t);
    }
    if (step) *step = meta.at("step").get<int64_t>();
    return m;
}

}  // namespace cct
