#pragma once

namespace cct {

struct ScheduleConfig {
    long long total_iters = 0;
    double rampup_frac_u = 0.1;
    double rampup_frac_w = 0.1;
    double rampup_frac_abce = 0.5;
    double lambda_u = 30.0;
    double lambda_w = 0.4;
    double abce_final = 0.9;  // alpha
    int num_classes = 0;
    double base_lr = 0.01;
    double power = 0.9;
};

/// min(lambda, e^{5(t/T - 1)} * lambda); constant lambda for t >= T.
double ramp_exp(double t, double T, double lambda);

/// min(alpha, (1 - e^{-5 t/T}) * (alpha - 1/C) + 1/C); starts at 1/C.
double ramp_log_threshold(double t, double T, double alpha, int C);

/// base_lr * (1 - iter/max_iter)^power.
double poly_lr(long long iter, long long max_iter, double base_lr, double power);

}  // namespace cct
