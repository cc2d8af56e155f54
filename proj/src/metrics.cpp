#include "kscope/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace kscope {

RealImage box_sum_valid(const RealImage& img, Index w) {
    const Index ho = img.rows() - w + 1, wo = img.cols() - w + 1;
    RealImage rows = RealImage::Zero(img.rows(), wo);
    for (Index y = 0; y < img.rows(); ++y)
        for (Index x = 0; x < wo; ++x) rows(y, x) = img.row(y).segment(x, w).sum();
    RealImage out = RealImage::Zero(ho, wo);
    for (Index y = 0; y < ho; ++y)
        for (Index d = 0; d < w; ++d) out.row(y) += rows.row(y + d);
    return out;
}

RealImage box_sum_adjoint(const RealImage& windows, Index w) {
    const Index h = windows.rows() + w - 1, wd = windows.cols() + w - 1;
    RealImage cols = RealImage::Zero(h, windows.cols());
    for (Index y = 0; y < windows.rows(); ++y)
        for (Index d = 0; d < w; ++d) cols.row(y + d) += windows.row(y);
    RealImage out = RealImage::Zero(h, wd);
    for (Index x = 0; x < windows.cols(); ++x)
        for (Index d = 0; d < w; ++d) out.col(x + d) += cols.col(x);
    return out;
}

namespace {

struct WindowStats {
    RealImage mx, my, vx, vy, cxy;
    double n = 0.0, r = 0.0, c1 = 0.0, c2 = 0.0;
};

WindowStats window_stats(const RealImage& x, const RealImage& y, const SsimParams& p, double data_range) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw std::invalid_argument("ssim: shape mismatch");
    if (p.window < 2 || p.window > x.rows() || p.window > x.cols())
        throw std::invalid_argument("ssim: window larger than image");
    const double range = data_range > 0.0 ? data_range : y.maxCoeff();
    if (!(range > 0.0)) throw std::invalid_argument("ssim: data range must be positive");
    WindowStats s;
    s.n = static_cast<double>(p.window * p.window);
    s.r = s.n / (s.n - 1.0);
    s.c1 = (p.k1 * range) * (p.k1 * range);
    s.c2 = (p.k2 * range) * (p.k2 * range);
    const Index w = p.window;
    s.mx = box_sum_valid(x, w) / s.n;
    s.my = box_sum_valid(y, w) / s.n;
    s.vx = s.r * (box_sum_valid(x * x, w) / s.n - s.mx * s.mx);
    s.vy = s.r * (box_sum_valid(y * y, w) / s.n - s.my * s.my);
    s.cxy = s.r * (box_sum_valid(x * y, w) / s.n - s.mx * s.my);
    return s;
}

}  // namespace

double ssim(const RealImage& pred, const RealImage& target, const SsimParams& p, double data_range) {
    const auto s = window_stats(pred, target, p, data_range);
    const RealImage a1 = 2.0 * s.mx * s.my + s.c1, a2 = 2.0 * s.cxy + s.c2;
    const RealImage b1 = s.mx * s.mx + s.my * s.my + s.c1, b2 = s.vx + s.vy + s.c2;
    return ((a1 * a2) / (b1 * b2)).mean();
}

double ssim_grad(const RealImage& pred, const RealImage& target, RealImage& grad, const SsimParams& p,
                 double data_range) {
    const auto s = window_stats(pred, target, p, data_range);
    const RealImage a1 = 2.0 * s.mx * s.my + s.c1, a2 = 2.0 * s.cxy + s.c2;
    const RealImage b1 = s.mx * s.mx + s.my * s.my + s.c1, b2 = s.vx + s.vy + s.c2;
    const RealImage den = b1 * b2;
    const RealImage sw = a1 * a2 / den;
    // d S_w / d x_p = alpha_w + beta_w y_p + gamma_w x_p for p inside window w.
    const double n = s.n, r = s.r;
    const RealImage alpha = (2.0 / n) * (a2 * s.my / den - sw * s.mx / b1) +
                            (2.0 * r / n) * (-a1 * s.my / den + sw * s.mx / b2);
    const RealImage beta = (2.0 * r / n) * a1 / den;
    const RealImage gamma = -(2.0 * r / n) * sw / b2;
    const double count = static_cast<double>(sw.size());
    grad = (box_sum_adjoint(alpha, p.window) + target * box_sum_adjoint(beta, p.window) +
            pred * box_sum_adjoint(gamma, p.window)) /
           count;
    return sw.mean();
}

double nmse(const RealImage& pred, const RealImage& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw std::invalid_argument("nmse: shape mismatch");
    const double den = target.square().sum();
    if (!(den > 0.0)) throw NumericalError("nmse: ground truth has zero energy");
    return (target - pred).square().sum() / den;
}

double psnr(const RealImage& pred, const RealImage& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw std::invalid_argument("psnr: shape mismatch");
    const double mse = (target - pred).square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = target.maxCoeff();
    return 10.0 * std::log10(peak * peak / mse);
}

ReconMetrics evaluate_metrics(const RealImage& pred, const RealImage& target) {
    return {ssim(pred, target), nmse(pred, target), psnr(pred, target)};
}

nlohmann::json to_json(const ReconMetrics& m) {
    // JSON has no infinity; a perfect reconstruction reports psnr as the string "inf".
    nlohmann::json p = std::isinf(m.psnr) ? nlohmann::json("inf") : nlohmann::json(m.psnr);
    return {{"ssim", m.ssim}, {"nmse", m.nmse}, {"psnr", p}};
}

}  // namespace kscope
