#pragma once

#include <json.hpp>

#include "kscope/core.hpp"

namespace kscope {

struct SsimParams {
    Index window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over all valid window positions of a uniform window; variances
/// and covariance use the unbiased N/(N-1) factor. data_range <= 0 means
/// max(target).
double ssim(const RealImage& pred, const RealImage& target, const SsimParams& p = {}, double data_range = 0.0);

/// SSIM and its gradient with respect to pred (data range from target).
double ssim_grad(const RealImage& pred, const RealImage& target, RealImage& grad, const SsimParams& p = {},
                 double data_range = 0.0);

/// ||target - pred||^2 / ||target||^2. Throws NumericalError for a zero target.
double nmse(const RealImage& pred, const RealImage& target);

/// 10 log10(max(target)^2 / mse); +infinity when pred == target.
double psnr(const RealImage& pred, const RealImage& target);

struct ReconMetrics {
    double ssim = 0.0;
    double nmse = 0.0;
    double psnr = 0.0;
};

ReconMetrics evaluate_metrics(const RealImage& pred, const RealImage& target);
nlohmann::json to_json(const ReconMetrics& m);

/// Sums over every valid w x w window: (H-w+1) x (W-w+1).
RealImage box_sum_valid(const RealImage& img, Index w);
/// Adjoint of box_sum_valid: spreads each window value back over its pixels.
RealImage box_sum_adjoint(const RealImage& windows, Index w);

}  // namespace kscope
