#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace kscope {

using Index = Eigen::Index;
using cfloat = std::complex<float>;
using cdouble = std::complex<double>;
using Rng = std::mt19937_64;

/// Row-major 2D plane indexed (row, col) == (ky or y, kx or x).
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RealImage = Plane<double>;
using ComplexImage = Plane<cdouble>;

/// Malformed, missing or inconsistent data (files, shapes, labels).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values, divergence and other numerical failures.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SliceMeta {
    std::string anatomy;
    std::uint64_t volume_id = 0;
    std::uint32_t slice_index = 0;
    std::uint64_t seed = 0;
    std::uint64_t volume_seed = 0;

    bool operator==(const SliceMeta&) const = default;
};

/// Multi-coil Cartesian k-space of one 2D slice, indexed [coil](ky, kx).
template <typename Real>
struct BasicKSpaceSlice {
    using Sample = std::complex<Real>;

    std::vector<Plane<Sample>> coils;
    SliceMeta meta;

    BasicKSpaceSlice() = default;
    BasicKSpaceSlice(Index num_coils, Index height, Index width)
        : coils(static_cast<std::size_t>(num_coils), Plane<Sample>::Zero(height, width)) {}

    Index num_coils() const { return static_cast<Index>(coils.size()); }
    Index height() const { return coils.empty() ? 0 : coils.front().rows(); }
    Index width() const { return coils.empty() ? 0 : coils.front().cols(); }

    Plane<Sample>& coil(Index c) { return coils[static_cast<std::size_t>(c)]; }
    const Plane<Sample>& coil(Index c) const { return coils[static_cast<std::size_t>(c)]; }

    /// Checks the shape and finiteness invariants; throws DataError.
    void validate() const {
        if (coils.empty()) throw DataError("k-space slice has no coils");
        for (const auto& p : coils) {
            if (p.rows() != height() || p.cols() != width())
                throw DataError("k-space coils disagree in shape");
            if (!p.real().allFinite() || !p.imag().allFinite())
                throw DataError("k-space slice contains non-finite samples");
        }
    }

    template <typename Other>
    BasicKSpaceSlice<Other> cast() const {
        BasicKSpaceSlice<Other> out;
        out.meta = meta;
        out.coils.reserve(coils.size());
        for (const auto& p : coils) out.coils.push_back(p.template cast<std::complex<Other>>());
        return out;
    }

    bool operator==(const BasicKSpaceSlice& o) const {
        if (meta != o.meta || coils.size() != o.coils.size()) return false;
        for (std::size_t c = 0; c < coils.size(); ++c) {
            if (coils[c].rows() != o.coils[c].rows() || coils[c].cols() != o.coils[c].cols())
                return false;
            if ((coils[c] != o.coils[c]).any()) return false;
        }
        return true;
    }
};

/// Storage precision matches the float32 dataset format.
using KSpaceSlice = BasicKSpaceSlice<float>;

template <typename Derived>
bool all_finite(const Eigen::ArrayBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    if constexpr (Eigen::NumTraits<Scalar>::IsComplex)
        return a.real().allFinite() && a.imag().allFinite();
    else
        return a.allFinite();
}

}  // namespace kscope
