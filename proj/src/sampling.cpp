#include "kscope/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <numeric>
#include <stdexcept>

namespace kscope {

Index SamplingMask::acquired_count() const {
    return static_cast<Index>(std::count(acquired.begin(), acquired.end(), std::uint8_t{1}));
}

std::vector<Index> SamplingMask::acquired_indices() const {
    std::vector<Index> out;
    for (Index c = 0; c < width(); ++c)
        if (is_acquired(c)) out.push_back(c);
    return out;
}

std::vector<Index> SamplingMask::acs_indices() const {
    std::vector<Index> out(static_cast<std::size_t>(acs_size()));
    std::iota(out.begin(), out.end(), acs_begin);
    return out;
}

void SamplingMask::validate() const {
    if (acquired.empty()) throw std::invalid_argument("mask: zero width");
    if (acs_begin < 0 || acs_end > width() || acs_end - acs_begin < 1)
        throw std::invalid_argument("mask: ACS block must be a nonempty range inside the mask");
    for (Index c = acs_begin; c < acs_end; ++c)
        if (!is_acquired(c)) throw std::invalid_argument("mask: ACS column not acquired");
    for (auto v : acquired)
        if (v > 1) throw std::invalid_argument("mask: flags must be 0 or 1");
}

Index round_half_up(double x) { return static_cast<Index>(std::floor(x + 0.5)); }

Index acs_block_size(Index width, double fraction) {
    return std::max<Index>(1, round_half_up(fraction * static_cast<double>(width)));
}

namespace {

SamplingMask with_acs(Index width, Index acs) {
    SamplingMask m;
    m.acquired.assign(static_cast<std::size_t>(width), 0);
    m.acs_begin = (width - acs + 1) / 2;
    m.acs_end = m.acs_begin + acs;
    for (Index c = m.acs_begin; c < m.acs_end; ++c) m.acquired[static_cast<std::size_t>(c)] = 1;
    return m;
}

std::vector<Index> non_acs_columns(const SamplingMask& m) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(m.width() - m.acs_size()));
    for (Index c = 0; c < m.width(); ++c)
        if (!m.is_acs(c)) out.push_back(c);
    return out;
}

}  // namespace

SamplingMask full_mask(Index width, Index acs_size) {
    if (acs_size < 1 || acs_size > width) throw std::invalid_argument("full_mask: bad ACS size");
    SamplingMask m = with_acs(width, acs_size);
    std::fill(m.acquired.begin(), m.acquired.end(), std::uint8_t{1});
    return m;
}

SamplingMask sample_variable_mask(Index width, Index min_lines, double acs_fraction, std::mt19937_64& rng) {
    if (width < 1 || min_lines < 1 || min_lines > width)
        throw std::invalid_argument("sample_variable_mask: need 1 <= min_lines <= width");
    if (!(acs_fraction > 0.0 && acs_fraction <= 1.0))
        throw std::invalid_argument("sample_variable_mask: acs_fraction must lie in (0, 1]");
    const Index acs = acs_block_size(width, acs_fraction);
    if (min_lines < acs)
        throw std::invalid_argument("sample_variable_mask: min_lines (" + std::to_string(min_lines) +
                                    ") is smaller than the ACS block (" + std::to_string(acs) + ")");

    std::uniform_int_distribution<Index> count_dist(min_lines, width);
    const Index n = count_dist(rng);
    SamplingMask m = with_acs(width, acs);
    auto pool = non_acs_columns(m);
    // Partial Fisher-Yates: the first (n - acs) entries become a uniform subset.
    const auto extra = static_cast<std::size_t>(n - acs);
    for (std::size_t i = 0; i < extra; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        m.acquired[static_cast<std::size_t>(pool[i])] = 1;
    }
    return m;
}

SamplingMask equispaced_mask(Index width, double acceleration, double center_fraction) {
    if (width < 1) throw std::invalid_argument("equispaced_mask: zero width");
    if (!(acceleration >= 1.0)) throw std::invalid_argument("equispaced_mask: acceleration must be >= 1");
    if (!(center_fraction > 0.0 && center_fraction <= 1.0))
        throw std::invalid_argument("equispaced_mask: center_fraction must lie in (0, 1]");
    const Index acs = acs_block_size(width, center_fraction);
    const Index budget = std::max<Index>(1, round_half_up(static_cast<double>(width) / acceleration));
    if (acs > budget)
        throw std::invalid_argument("equispaced_mask: ACS block (" + std::to_string(acs) +
                                    ") exceeds the line budget (" + std::to_string(budget) + ")");
    SamplingMask m = with_acs(width, acs);
    const auto pool = non_acs_columns(m);
    const Index extra = budget - acs;
    const auto slots = static_cast<double>(pool.size());
    for (Index j = 0; j < extra; ++j) {
        const auto at = static_cast<std::size_t>(std::floor((static_cast<double>(j) + 0.5) * slots / static_cast<double>(extra)));
        m.acquired[static_cast<std::size_t>(pool[at])] = 1;
    }
    return m;
}

KSpaceSlice apply_mask(const KSpaceSlice& ks, const SamplingMask& mask) {
    if (mask.width() != ks.width())
        throw std::invalid_argument("apply_mask: mask width " + std::to_string(mask.width()) +
                                    " does not match k-space width " + std::to_string(ks.width()));
    KSpaceSlice out = ks;
    for (auto& plane : out.coils)
        for (Index c = 0; c < plane.cols(); ++c)
            if (!mask.is_acquired(c)) plane.col(c).setZero();
    return out;
}

nlohmann::json to_json(const SamplingMask& mask) {
    return {{"width", mask.width()},
            {"acquired", mask.acquired_indices()},
            {"acs", {mask.acs_begin, mask.acs_end}},
            {"acceleration", mask.acceleration()}};
}

SamplingMask mask_from_json(const nlohmann::json& j) {
    SamplingMask m;
    const auto width = j.at("width").get<Index>();
    if (width < 1) throw std::invalid_argument("mask.json: width must be positive");
    m.acquired.assign(static_cast<std::size_t>(width), 0);
    for (Index c : j.at("acquired").get<std::vector<Index>>()) {
        if (c < 0 || c >= width) throw std::invalid_argument("mask.json: acquired index out of range");
        m.acquired[static_cast<std::size_t>(c)] = 1;
    }
    const auto acs = j.at("acs").get<std::vector<Index>>();
    if (acs.size() != 2) throw std::invalid_argument("mask.json: acs must be [begin, end)");
    m.acs_begin = acs[0];
    m.acs_end = acs[1];
    m.validate();
    return m;
}

}  // namespace kscope
