#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace cct {

/// Dense row-major double tensor. Rank is dynamic but almost everything in
/// this project is (B, C, H, W) or (H, W).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
        v.assign(static_cast<size_t>(numel(shape)), 0.0);
    }
    Tensor(std::vector<int> shape_, std::vector<double> data)
        : shape(std::move(shape_)), v(std::move(data)) {
        assert(static_cast<size_t>(numel(shape)) == v.size());
    }

    static int64_t numel(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    bool empty() const { return v.empty(); }

    double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    // 4-d accessor (b, c, y, x)
    double& at(int b, int c, int y, int x) {
        return v[static_cast<size_t>(((static_cast<int64_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    const double& at(int b, int c, int y, int x) const {
        return v[static_cast<size_t>(((static_cast<int64_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::vector<int> shape;
    std::vector<double> v;
};

bool all_finite(const Tensor& t);
std::string shape_str(const std::vector<int>& s);

/// Integer label map batch, (B, H, W), values in {0..C-1} or kIgnore.
struct LabelBatch {
    int b = 0, h = 0, w = 0;
    std::vector<uint8_t> v;

    LabelBatch() = default;
    LabelBatch(int b_, int h_, int w_, uint8_t init = 0)
        : b(b_), h(h_), w(w_), v(static_cast<size_t>(b_) * h_ * w_, init) {}

    uint8_t& at(int bi, int y, int x) {
        return v[(static_cast<size_t>(bi) * h + y) * w + x];
    }
    uint8_t at(int bi, int y, int x) const {
        return v[(static_cast<size_t>(bi) * h + y) * w + x];
    }
};

constexpr uint8_t kIgnore = 255;

}  // namespace cct
