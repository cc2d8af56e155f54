#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "kscope/core.hpp"
#include "kscope/sampling.hpp"

namespace kscope {

enum class LineKind { nominal, rotation, spike, translation };

const char* to_string(LineKind kind);
LineKind line_kind_from_string(const std::string& s);

struct ColumnLabel {
    LineKind kind = LineKind::nominal;
    double angle = 0.0;  // radians, rotation only
    double dx = 0.0;     // pixels along columns, translation only
    double dy = 0.0;     // pixels along rows, translation only

    bool corrupted() const { return kind != LineKind::nominal; }
    bool operator==(const ColumnLabel&) const = default;
};

struct Spike {
    Index coil = 0;
    Index ky = 0;
    Index kx = 0;
    cdouble amplitude;

    bool operator==(const Spike&) const = default;
};

/// Ground-truth labels keyed by k-space column, plus every spike injected.
struct CorruptionRecord {
    std::map<Index, ColumnLabel> labels;
    std::vector<Spike> spikes;

    bool corrupted(Index col) const;
    /// Later labels win; spikes are appended.
    void merge(const CorruptionRecord& other);

    bool operator==(const CorruptionRecord&) const = default;
};

/// Half-open column range [begin, end) that injectors must leave untouched.
struct ColumnRange {
    Index begin = 0;
    Index end = 0;
    bool contains(Index c) const { return c >= begin && c < end; }
};

inline ColumnRange acs_range(const SamplingMask& m) { return {m.acs_begin, m.acs_end}; }

/// Bilinear rotation by angle (radians, counterclockwise with y up) about the
/// centered origin (floor(H/2), floor(W/2)); zero outside the source.
ComplexImage rotate_bilinear(const ComplexImage& img, double angle);

/// Replaces the listed columns with those of dft2(s_c * rotate(source)).
/// `maps` may be empty for a single-coil slice. angle == 0 is a no-op and
/// labels the columns nominal.
std::pair<KSpaceSlice, CorruptionRecord> inject_rotation(const KSpaceSlice& ks, const ComplexImage& source,
                                                         std::span<const ComplexImage> maps,
                                                         std::span<const Index> columns, double angle,
                                                         ColumnRange acs);

/// Adds each spike amplitude at its coordinate.
std::pair<KSpaceSlice, CorruptionRecord> inject_spike(const KSpaceSlice& ks, std::span<const Spike> spikes,
                                                      ColumnRange acs = {});

/// Full-readout spike set for one column.
std::vector<Spike> line_spike(Index coil, Index kx, Index height, cdouble amplitude);

/// Multiplies the listed columns by exp(-i (kx dx + ky dy)) on the centered
/// frequency grid, kx = 2 pi (col - floor(W/2)) / W and likewise for rows.
std::pair<KSpaceSlice, CorruptionRecord> inject_translation(const KSpaceSlice& ks, std::span<const Index> columns,
                                                            double dx, double dy, ColumnRange acs);

struct CorruptionConfig {
    double fraction = 0.3;  // per acquired non-ACS column
    double rotation_weight = 0.5;
    double spike_weight = 0.5;
    double translation_weight = 0.0;
    double max_angle_deg = 15.0;
    double spike_min_rms = 5.0;  // spike amplitude range in units of the column RMS
    double spike_max_rms = 20.0;
    double line_spike_probability = 0.5;
    double max_translation = 4.0;  // pixels
    Index min_lines = 16;
    double acs_fraction = 0.08;
    bool variable_mask = true;  // false: fully sampled

    void validate() const;
};

CorruptionConfig corruption_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorruptionConfig& cfg);

/// One slice after emulated single-coil combination, masking and corruption.
struct CorruptedSlice {
    KSpaceSlice clean;      // single coil, masked, uncorrupted
    KSpaceSlice corrupted;  // single coil, masked, corrupted
    SamplingMask mask;
    CorruptionRecord record;  // labels cover exactly the acquired columns
};

/// Sensitivity-weighted coil combination sum_c conj(s_c) * image_c.
ComplexImage combine_coils(const KSpaceSlice& ks, std::span<const ComplexImage> maps);

/// Emulated single-coil k-space: dft2 of the sensitivity-combined image.
KSpaceSlice single_coil(const KSpaceSlice& ks);

CorruptedSlice corrupt_slice(const KSpaceSlice& ks, const CorruptionConfig& cfg, std::uint64_t seed);

/// Per-slice seeds are split_seed(seed, i).
std::vector<CorruptedSlice> make_corruption_dataset(const std::vector<KSpaceSlice>& dataset,
                                                    const CorruptionConfig& cfg, std::uint64_t seed);

/// A magnitude line pair (k_h, k_l) and the ground-truth label of k_h.
struct LinePair {
    std::vector<float> high;
    std::vector<float> low;
    int label = 0;
    std::size_t slice = 0;
    Index column = 0;
};

/// Every acquired non-ACS column paired with every ACS column.
std::vector<LinePair> line_pairs(const std::vector<CorruptedSlice>& slices);

std::vector<double> column_magnitudes(const KSpaceSlice& ks, Index col, Index coil = 0);

nlohmann::json to_json(const CorruptionRecord& rec);
CorruptionRecord record_from_json(const nlohmann::json& j);

/// out/clean, out/corrupted (kcore datasets) and out/labels.json.
void write_corruption_dataset(const std::filesystem::path& out, const std::vector<CorruptedSlice>& slices);
std::vector<CorruptedSlice> read_corruption_dataset(const std::filesystem::path& dir);

}  // namespace kscope
