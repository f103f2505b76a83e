#include "cct/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cct {

double ramp_exp(double t, double T, double lambda) {
    if (t < 0.0 || T <= 0.0) throw std::runtime_error("ramp_exp: need t >= 0, T > 0");
    return std::min(lambda, std::exp(5.0 * (t / T - 1.0)) * lambda);
}

double ramp_log_threshold(double t, double T, double alpha, int C) {
    if (t < 0.0 || T <= 0.0) throw std::runtime_error("ramp_log_threshold: need t >= 0, T > 0");
    double inv_c = 1.0 / C;
    return std::min(alpha, (1.0 - std::exp(-5.0 * t / T)) * (alpha - inv_c) + inv_c);
}

double poly_lr(long long iter, long long max_iter, double base_lr, double power) {
    if (iter < 0 || iter > max_iter) throw std::runtime_error("poly_lr: iter outside [0, max_iter]");
    return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

}  // namespace cct
