#pragma once

#include <span>

#include "kscope/core.hpp"

namespace kscope {

// Centered, unitary discrete Fourier transforms. For an axis of length N the
// origin sits at index floor(N/2) in both domains:
//
//   X[k] = N^{-1/2} * sum_n x[n] * exp(-2*pi*i*(k - c)(n - c)/N),  c = floor(N/2)
//
// Power-of-two lengths take a radix-2 path; other lengths fall back to the
// direct sum. Both paths are thread-safe.

/// In-place 1D centered transform of a contiguous sequence.
void dft1_inplace(std::span<cdouble> data, bool inverse);

/// Direct O(N^2) 1D centered transform; used as fallback and as test oracle.
void dft1_direct_inplace(std::span<cdouble> data, bool inverse);

ComplexImage dft2(const ComplexImage& img);
ComplexImage idft2(const ComplexImage& ksp);

inline ComplexImage dft2(const RealImage& img) { return dft2(ComplexImage(img.cast<cdouble>())); }

/// Circular shift: out(y, x) = in(y - dy, x - dx) with wrap-around.
template <typename Scalar>
Plane<Scalar> circshift(const Plane<Scalar>& in, Index dy, Index dx) {
    const Index h = in.rows(), w = in.cols();
    Plane<Scalar> out(h, w);
    for (Index y = 0; y < h; ++y) {
        const Index sy = ((y - dy) % h + h) % h;
        for (Index x = 0; x < w; ++x) out(y, x) = in(sy, ((x - dx) % w + w) % w);
    }
    return out;
}

inline bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace kscope
