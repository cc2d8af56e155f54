#pragma once

// Straightforward reference implementations used to check the library.

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "kscope/core.hpp"

namespace oracle {

using kscope::cdouble;
using kscope::ComplexImage;
using kscope::Index;
using kscope::RealImage;

inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::path(KSCOPE_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Centered unitary DFT of one axis by the defining sum.
inline std::vector<cdouble> dft(const std::vector<cdouble>& x, bool inverse) {
    const auto n = static_cast<long>(x.size());
    const long c = n / 2;
    const double sgn = inverse ? 1.0 : -1.0;
    std::vector<cdouble> out(x.size());
    for (long k = 0; k < n; ++k) {
        cdouble acc = 0.0;
        for (long m = 0; m < n; ++m)
            acc += x[static_cast<std::size_t>(m)] *
                   std::polar(1.0, sgn * 2.0 * std::numbers::pi * static_cast<double>((k - c) * (m - c)) / static_cast<double>(n));
        out[static_cast<std::size_t>(k)] = acc / std::sqrt(static_cast<double>(n));
    }
    return out;
}

inline ComplexImage dft2(const ComplexImage& img, bool inverse = false) {
    ComplexImage out = img;
    for (Index r = 0; r < out.rows(); ++r) {
        std::vector<cdouble> row(out.row(r).begin(), out.row(r).end());
        const auto t = dft(row, inverse);
        for (Index c = 0; c < out.cols(); ++c) out(r, c) = t[static_cast<std::size_t>(c)];
    }
    for (Index c = 0; c < out.cols(); ++c) {
        std::vector<cdouble> col(out.col(c).begin(), out.col(c).end());
        const auto t = dft(col, inverse);
        for (Index r = 0; r < out.rows(); ++r) out(r, c) = t[static_cast<std::size_t>(r)];
    }
    return out;
}

/// Mean SSIM over valid 7x7 windows with unbiased (co)variances.
inline double ssim(const RealImage& x, const RealImage& y, double range, Index win = 7) {
    const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
    const double n = static_cast<double>(win * win);
    double total = 0.0;
    long count = 0;
    for (Index r = 0; r + win <= x.rows(); ++r)
        for (Index c = 0; c + win <= x.cols(); ++c) {
            double mx = 0, my = 0;
            for (Index i = 0; i < win; ++i)
                for (Index j = 0; j < win; ++j) {
                    mx += x(r + i, c + j);
                    my += y(r + i, c + j);
                }
            mx /= n;
            my /= n;
            double vx = 0, vy = 0, cxy = 0;
            for (Index i = 0; i < win; ++i)
                for (Index j = 0; j < win; ++j) {
                    const double dx = x(r + i, c + j) - mx, dy = y(r + i, c + j) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            vx /= n - 1;
            vy /= n - 1;
            cxy /= n - 1;
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

inline double nmse(const RealImage& x, const RealImage& y) {
    double num = 0, den = 0;
    for (Index i = 0; i < x.size(); ++i) {
        num += (y(i) - x(i)) * (y(i) - x(i));
        den += y(i) * y(i);
    }
    return num / den;
}

inline double psnr(const RealImage& x, const RealImage& y) {
    double mse = 0, peak = -1e300;
    for (Index i = 0; i < x.size(); ++i) {
        mse += (y(i) - x(i)) * (y(i) - x(i));
        peak = std::max(peak, y(i));
    }
    mse /= static_cast<double>(x.size());
    return 20.0 * std::log10(peak) - 10.0 * std::log10(mse);
}

/// AUROC as the probability a positive outranks a negative, ties counting half.
inline double auroc(const std::vector<double>& s, const std::vector<int>& l) {
    double wins = 0;
    long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (l[i] == 1 && l[j] == 0) {
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
                ++pairs;
            }
    return wins / static_cast<double>(pairs);
}

/// Scalar Fisher overlap written out term by term.
inline double overlap(const std::vector<double>& a, const std::vector<double>& b) {
    double ta = 0, tb = 0;
    for (double v : a) ta += v;
    for (double v : b) tb += v;
    double frob = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::sqrt(a[i] / ta) - std::sqrt(b[i] / tb);
        frob += d * d;
    }
    return 1.0 - 0.5 * frob;
}

inline ComplexImage random_complex(Index h, Index w, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    ComplexImage out(h, w);
    for (Index i = 0; i < out.size(); ++i) out(i) = {g(rng), g(rng)};
    return out;
}

inline RealImage random_real(Index h, Index w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    RealImage out(h, w);
    for (Index i = 0; i < out.size(); ++i) out(i) = u(rng);
    return out;
}

/// Relative error with a floor on the scale so near-zero gradients compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
