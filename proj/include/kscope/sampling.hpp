#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "kscope/core.hpp"

namespace kscope {

/// Per-column acquisition flags with a centered, fully acquired ACS block.
struct SamplingMask {
    std::vector<std::uint8_t> acquired;
    Index acs_begin = 0;  // ACS is [acs_begin, acs_end)
    Index acs_end = 0;

    Index width() const { return static_cast<Index>(acquired.size()); }
    bool is_acquired(Index col) const { return acquired[static_cast<std::size_t>(col)] != 0; }
    bool is_acs(Index col) const { return col >= acs_begin && col < acs_end; }
    Index acs_size() const { return acs_end - acs_begin; }
    Index acquired_count() const;
    double acceleration() const { return static_cast<double>(width()) / static_cast<double>(acquired_count()); }
    std::vector<Index> acquired_indices() const;
    std::vector<Index> acs_indices() const;

    /// Throws std::invalid_argument if an invariant is violated.
    void validate() const;

    bool operator==(const SamplingMask&) const = default;
};

/// floor(x + 0.5), the rounding used for every block size here.
Index round_half_up(double x);

/// round_half_up(fraction * width), at least one column.
Index acs_block_size(Index width, double fraction);

SamplingMask full_mask(Index width, Index acs_size);

/// Acquired count n ~ U{min_lines..width}; ACS first, then distinct
/// uniformly random columns until n are acquired.
SamplingMask sample_variable_mask(Index width, Index min_lines, double acs_fraction, std::mt19937_64& rng);

/// ACS block plus evenly spaced non-ACS columns; total = round(width / acceleration).
SamplingMask equispaced_mask(Index width, double acceleration, double center_fraction);

/// Zeroes unacquired columns in every coil; acquired samples are untouched.
KSpaceSlice apply_mask(const KSpaceSlice& ks, const SamplingMask& mask);

nlohmann::json to_json(const SamplingMask& mask);
SamplingMask mask_from_json(const nlohmann::json& j);

/// Conventional center fraction for a fixed acceleration (0.08 at 4x, 0.04 at 8x).
inline double default_center_fraction(double acceleration) { return 0.32 / acceleration; }

}  // namespace kscope
