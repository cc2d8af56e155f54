#include "kscope/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <vector>

namespace kscope {
namespace {

struct Radix2Plan {
    std::vector<cdouble> twiddle;  // exp(-2 pi i k / n), k < n/2
    std::vector<std::size_t> bitrev;
};

const Radix2Plan& radix2_plan(std::size_t n) {
    thread_local std::unordered_map<std::size_t, Radix2Plan> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    Radix2Plan plan;
    plan.twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        plan.twiddle[k] = {std::cos(a), std::sin(a)};
    }
    plan.bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b)
            if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        plan.bitrev[i] = r;
    }
    return cache.emplace(n, std::move(plan)).first->second;
}

const std::vector<cdouble>& direct_table(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::vector<cdouble>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<cdouble> table(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        table[m] = {std::cos(a), std::sin(a)};
    }
    return cache.emplace(n, std::move(table)).first->second;
}

// Uncentered, unnormalized forward FFT.
void fft_radix2(std::span<cdouble> a, bool inverse) {
    const std::size_t n = a.size();
    const auto& plan = radix2_plan(n);
    for (std::size_t i = 0; i < n; ++i)
        if (i < plan.bitrev[i]) std::swap(a[i], a[plan.bitrev[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2, stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < half; ++j) {
                cdouble w = plan.twiddle[j * stride];
                if (inverse) w = std::conj(w);
                const cdouble u = a[i + j];
                const cdouble v = a[i + j + half] * w;
                a[i + j] = u + v;
                a[i + j + half] = u - v;
            }
        }
    }
}

template <typename Fn>
void for_each_column(ComplexImage& img, Fn&& fn) {
    std::vector<cdouble> col(static_cast<std::size_t>(img.rows()));
    for (Index x = 0; x < img.cols(); ++x) {
        for (Index y = 0; y < img.rows(); ++y) col[static_cast<std::size_t>(y)] = img(y, x);
        fn(std::span<cdouble>(col));
        for (Index y = 0; y < img.rows(); ++y) img(y, x) = col[static_cast<std::size_t>(y)];
    }
}

ComplexImage transform2(const ComplexImage& in, bool inverse) {
    if (!all_finite(in)) throw NumericalError("dft2: non-finite input");
    ComplexImage out = in;
    for (Index y = 0; y < out.rows(); ++y)
        dft1_inplace(std::span<cdouble>(out.data() + y * out.cols(), static_cast<std::size_t>(out.cols())),
                     inverse);
    for_each_column(out, [inverse](std::span<cdouble> c) { dft1_inplace(c, inverse); });
    return out;
}

}  // namespace

void dft1_direct_inplace(std::span<cdouble> data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0) return;
    const auto& table = direct_table(n);
    const std::size_t c = n / 2;
    std::vector<cdouble> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cdouble acc = 0.0;
        const std::size_t fk = (k + n - c) % n;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t fi = (i + n - c) % n;
            const cdouble w = table[(fk * fi) % n];
            acc += data[i] * (inverse ? std::conj(w) : w);
        }
        out[k] = acc;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) data[k] = out[k] * scale;
}

void dft1_inplace(std::span<cdouble> data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0) return;
    if (!is_power_of_two(static_cast<Index>(n))) {
        dft1_direct_inplace(data, inverse);
        return;
    }
    // For even n, ifftshift == fftshift == rotation by n/2.
    const std::size_t h = n / 2;
    if (n > 1) std::rotate(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(h), data.end());
    fft_radix2(data, inverse);
    if (n > 1) std::rotate(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(h), data.end());
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : data) v *= scale;
}

ComplexImage dft2(const ComplexImage& img) { return transform2(img, false); }
ComplexImage idft2(const ComplexImage& ksp) { return transform2(ksp, true); }

}  // namespace kscope
