#include "kscope/cs.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "kscope/fft.hpp"
#include "kscope/image.hpp"

namespace kscope {

double soft_threshold(double v, double t) {
    const double m = std::abs(v) - t;
    return m > 0.0 ? std::copysign(m, v) : 0.0;
}

cdouble soft_threshold(cdouble v, double t) {
    const double a = std::abs(v);
    return a > t ? v * ((a - t) / a) : cdouble{};
}

int haar_levels(Index h, Index w) {
    int levels = 0;
    while (h >= 2 && w >= 2 && h % 2 == 0 && w % 2 == 0) {
        ++levels;
        h /= 2;
        w /= 2;
    }
    return levels;
}

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

// One analysis step on the top-left h x w block: rows then columns.
void haar_step(ComplexImage& a, Index h, Index w) {
    ComplexImage tmp(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w / 2; ++x) {
            tmp(y, x) = (a(y, 2 * x) + a(y, 2 * x + 1)) * kInvSqrt2;
            tmp(y, w / 2 + x) = (a(y, 2 * x) - a(y, 2 * x + 1)) * kInvSqrt2;
        }
    for (Index x = 0; x < w; ++x)
        for (Index y = 0; y < h / 2; ++y) {
            a(y, x) = (tmp(2 * y, x) + tmp(2 * y + 1, x)) * kInvSqrt2;
            a(h / 2 + y, x) = (tmp(2 * y, x) - tmp(2 * y + 1, x)) * kInvSqrt2;
        }
}

void haar_unstep(ComplexImage& a, Index h, Index w) {
    ComplexImage tmp(h, w);
    for (Index x = 0; x < w; ++x)
        for (Index y = 0; y < h / 2; ++y) {
            tmp(2 * y, x) = (a(y, x) + a(h / 2 + y, x)) * kInvSqrt2;
            tmp(2 * y + 1, x) = (a(y, x) - a(h / 2 + y, x)) * kInvSqrt2;
        }
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w / 2; ++x) {
            a(y, 2 * x) = (tmp(y, x) + tmp(y, w / 2 + x)) * kInvSqrt2;
            a(y, 2 * x + 1) = (tmp(y, x) - tmp(y, w / 2 + x)) * kInvSqrt2;
        }
}

}  // namespace

ComplexImage haar_forward(const ComplexImage& img) {
    ComplexImage a = img;
    Index h = img.rows(), w = img.cols();
    for (int l = 0; l < haar_levels(img.rows(), img.cols()); ++l, h /= 2, w /= 2) haar_step(a, h, w);
    return a;
}

ComplexImage haar_inverse(const ComplexImage& coeffs) {
    ComplexImage a = coeffs;
    const int levels = haar_levels(coeffs.rows(), coeffs.cols());
    for (int l = levels - 1; l >= 0; --l) haar_unstep(a, coeffs.rows() >> l, coeffs.cols() >> l);
    return a;
}

void CsConfig::validate() const {
    if (!(lambda_rel >= 0.0)) throw std::invalid_argument("cs: lambda must be nonnegative");
    if (iters < 0) throw std::invalid_argument("cs: iteration count must be nonnegative");
    if (!(slack >= 0.0)) throw std::invalid_argument("cs: slack must be nonnegative");
}

CsConfig cs_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> allowed{"lambda_rel", "iters", "slack"};
    for (const auto& [k, _] : j.items())
        if (!allowed.contains(k)) throw std::invalid_argument("unknown key in cs config: " + k);
    CsConfig c;
    c.lambda_rel = j.value("lambda_rel", c.lambda_rel);
    c.iters = j.value("iters", c.iters);
    c.slack = j.value("slack", c.slack);
    c.validate();
    return c;
}

nlohmann::json to_json(const CsConfig& c) {
    return {{"lambda_rel", c.lambda_rel}, {"iters", c.iters}, {"slack", c.slack}};
}

std::vector<ComplexImage> sense_forward(const ComplexImage& x, const std::vector<ComplexImage>& maps,
                                        const SamplingMask& mask) {
    std::vector<ComplexImage> k;
    k.reserve(maps.size());
    for (const auto& s : maps) {
        ComplexImage kc = dft2(ComplexImage(s * x));
        for (Index c = 0; c < kc.cols(); ++c)
            if (!mask.is_acquired(c)) kc.col(c).setZero();
        k.push_back(std::move(kc));
    }
    return k;
}

ComplexImage sense_adjoint(const std::vector<ComplexImage>& k, const std::vector<ComplexImage>& maps,
                           const SamplingMask& mask) {
    ComplexImage acc = ComplexImage::Zero(maps.front().rows(), maps.front().cols());
    for (std::size_t c = 0; c < maps.size(); ++c) {
        ComplexImage kc = k[c];
        for (Index col = 0; col < kc.cols(); ++col)
            if (!mask.is_acquired(col)) kc.col(col).setZero();
        acc += maps[c].conjugate() * idft2(kc);
    }
    return acc;
}

double cs_objective(const ComplexImage& x, const std::vector<ComplexImage>& y, const std::vector<ComplexImage>& maps,
                    const SamplingMask& mask, double lambda) {
    const auto ax = sense_forward(x, maps, mask);
    double fit = 0.0;
    for (std::size_t c = 0; c < y.size(); ++c) fit += (ax[c] - y[c]).abs2().sum();
    return fit + (lambda > 0.0 ? lambda * haar_forward(x).abs().sum() : 0.0);
}

namespace {

ComplexImage prox_step(const ComplexImage& z, const std::vector<ComplexImage>& y, const std::vector<ComplexImage>& maps,
                       const SamplingMask& mask, double step, double lambda) {
    auto r = sense_forward(z, maps, mask);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] -= y[c];
    const ComplexImage v = z - (2.0 * step) * sense_adjoint(r, maps, mask);
    if (lambda == 0.0) return v;
    ComplexImage w = haar_forward(v);
    const double t = step * lambda;
    w = w.unaryExpr([t](cdouble c) { return soft_threshold(c, t); });
    return haar_inverse(w);
}

}  // namespace

CsResult cs_recon_lambda(const KSpaceSlice& ks, const SamplingMask& mask, const std::vector<ComplexImage>& maps,
                         double lambda, int iters, double slack) {
    if (mask.width() != ks.width()) throw std::invalid_argument("cs_recon: mask width mismatch");
    if (static_cast<Index>(maps.size()) != ks.num_coils()) throw std::invalid_argument("cs_recon: one map per coil required");
    std::vector<ComplexImage> y;
    for (Index c = 0; c < ks.num_coils(); ++c) {
        ComplexImage kc = ks.coil(c).cast<cdouble>();
        for (Index col = 0; col < kc.cols(); ++col)
            if (!mask.is_acquired(col)) kc.col(col).setZero();
        y.push_back(std::move(kc));
    }
    const double step = 0.5;
    CsResult res;
    res.lambda = lambda;
    ComplexImage x = ComplexImage::Zero(ks.height(), ks.width());
    ComplexImage z = x;
    double t = 1.0;
    double f = cs_objective(x, y, maps, mask, lambda);
    res.objective.push_back(f);
    for (int it = 0; it < iters; ++it) {
        ComplexImage xn = prox_step(z, y, maps, mask, step, lambda);
        double fn = cs_objective(xn, y, maps, mask, lambda);
        const double tol = slack * std::max(1.0, std::abs(f));
        if (fn > f + tol) {
            // Momentum overshoot: restart from the current iterate with a plain step.
            ++res.restarts;
            t = 1.0;
            xn = prox_step(x, y, maps, mask, step, lambda);
            fn = cs_objective(xn, y, maps, mask, lambda);
            if (fn > f + tol)
                throw NumericalError("cs_recon: objective increased from " + std::to_string(f) + " to " +
                                     std::to_string(fn) + " at iteration " + std::to_string(it));
            z = xn;
        } else {
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            z = xn + ((t - 1.0) / tn) * (xn - x);
            t = tn;
        }
        x = std::move(xn);
        f = fn;
        res.objective.push_back(f);
    }
    res.x = x;
    res.magnitude = x.abs();
    return res;
}

CsResult cs_recon(const KSpaceSlice& ks, const SamplingMask& mask, const std::vector<ComplexImage>& maps,
                  const CsConfig& cfg) {
    cfg.validate();
    std::vector<ComplexImage> y;
    for (Index c = 0; c < ks.num_coils(); ++c) y.push_back(ks.coil(c).cast<cdouble>());
    const double lambda = cfg.lambda_rel * sense_adjoint(y, maps, mask).abs().maxCoeff();
    return cs_recon_lambda(ks, mask, maps, lambda, cfg.iters, cfg.slack);
}

}  // namespace kscope
