#include "kscope/corruption.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "kscope/dataset.hpp"
#include "kscope/fft.hpp"
#include "kscope/image.hpp"
#include "kscope/parallel.hpp"
#include "kscope/phantom.hpp"

namespace kscope {
namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(LineKind kind) {
    switch (kind) {
        case LineKind::nominal: return "nominal";
        case LineKind::rotation: return "rotation";
        case LineKind::spike: return "spike";
        case LineKind::translation: return "translation";
    }
    return "nominal";
}

LineKind line_kind_from_string(const std::string& s) {
    if (s == "nominal") return LineKind::nominal;
    if (s == "rotation") return LineKind::rotation;
    if (s == "spike") return LineKind::spike;
    if (s == "translation") return LineKind::translation;
    throw DataError("unknown line label: " + s);
}

bool CorruptionRecord::corrupted(Index col) const {
    auto it = labels.find(col);
    return it != labels.end() && it->second.corrupted();
}

void CorruptionRecord::merge(const CorruptionRecord& other) {
    for (const auto& [col, label] : other.labels) labels[col] = label;
    spikes.insert(spikes.end(), other.spikes.begin(), other.spikes.end());
}

namespace {

void check_columns(const KSpaceSlice& ks, std::span<const Index> columns, ColumnRange acs, const char* who) {
    for (Index c : columns) {
        if (c < 0 || c >= ks.width()) throw std::invalid_argument(std::string(who) + ": column out of range");
        if (acs.contains(c))
            throw std::invalid_argument(std::string(who) + ": column " + std::to_string(c) + " overlaps the ACS block");
    }
}

}  // namespace

ComplexImage rotate_bilinear(const ComplexImage& img, double angle) {
    const Index h = img.rows(), w = img.cols();
    const double cy = static_cast<double>(h / 2), cx = static_cast<double>(w / 2);
    const double c = std::cos(angle), s = std::sin(angle);
    ComplexImage out = ComplexImage::Zero(h, w);
    auto at = [&](Index y, Index x) -> cdouble { return (y >= 0 && y < h && x >= 0 && x < w) ? img(y, x) : cdouble{}; };
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) - cx, v = cy - static_cast<double>(y);
            const double us = u * c + v * s, vs = -u * s + v * c;
            const double xs = cx + us, ys = cy - vs;
            const double fx = std::floor(xs), fy = std::floor(ys);
            const double tx = xs - fx, ty = ys - fy;
            const auto x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
            out(y, x) = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                        ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
    return out;
}

std::pair<KSpaceSlice, CorruptionRecord> inject_rotation(const KSpaceSlice& ks, const ComplexImage& source,
                                                         std::span<const ComplexImage> maps,
                                                         std::span<const Index> columns, double angle,
                                                         ColumnRange acs) {
    check_columns(ks, columns, acs, "inject_rotation");
    if (!(std::abs(angle) <= std::numbers::pi)) throw std::invalid_argument("inject_rotation: |angle| must be <= pi");
    if (source.rows() != ks.height() || source.cols() != ks.width())
        throw std::invalid_argument("inject_rotation: source image shape mismatch");
    if (maps.empty() && ks.num_coils() != 1)
        throw std::invalid_argument("inject_rotation: coil maps required for multi-coil slices");
    if (!maps.empty() && static_cast<Index>(maps.size()) != ks.num_coils())
        throw std::invalid_argument("inject_rotation: one coil map per coil required");

    CorruptionRecord rec;
    KSpaceSlice out = ks;
    if (angle == 0.0) {
        for (Index c : columns) rec.labels[c] = {};
        return {std::move(out), std::move(rec)};
    }
    const ComplexImage rotated = rotate_bilinear(source, angle);
    for (Index coil = 0; coil < ks.num_coils(); ++coil) {
        const ComplexImage k = maps.empty() ? dft2(rotated)
                                            : dft2(ComplexImage(rotated * maps[static_cast<std::size_t>(coil)]));
        for (Index c : columns) out.coil(coil).col(c) = k.col(c).cast<cfloat>();
    }
    for (Index c : columns) rec.labels[c] = {LineKind::rotation, angle, 0.0, 0.0};
    return {std::move(out), std::move(rec)};
}

std::pair<KSpaceSlice, CorruptionRecord> inject_spike(const KSpaceSlice& ks, std::span<const Spike> spikes,
                                                      ColumnRange acs) {
    KSpaceSlice out = ks;
    CorruptionRecord rec;
    for (const auto& s : spikes) {
        if (s.coil < 0 || s.coil >= ks.num_coils() || s.ky < 0 || s.ky >= ks.height() || s.kx < 0 || s.kx >= ks.width())
            throw std::invalid_argument("inject_spike: coordinate out of range");
        if (acs.contains(s.kx)) throw std::invalid_argument("inject_spike: spike inside the ACS block");
    }
    for (const auto& s : spikes) {
        auto& v = out.coil(s.coil)(s.ky, s.kx);
        v = cfloat(cdouble(v) + s.amplitude);
        rec.labels[s.kx] = {LineKind::spike, 0.0, 0.0, 0.0};
        rec.spikes.push_back(s);
    }
    return {std::move(out), std::move(rec)};
}

std::vector<Spike> line_spike(Index coil, Index kx, Index height, cdouble amplitude) {
    std::vector<Spike> out;
    out.reserve(static_cast<std::size_t>(height));
    for (Index ky = 0; ky < height; ++ky) out.push_back({coil, ky, kx, amplitude});
    return out;
}

std::pair<KSpaceSlice, CorruptionRecord> inject_translation(const KSpaceSlice& ks, std::span<const Index> columns,
                                                            double dx, double dy, ColumnRange acs) {
    check_columns(ks, columns, acs, "inject_translation");
    KSpaceSlice out = ks;
    CorruptionRecord rec;
    if (dx == 0.0 && dy == 0.0) {
        for (Index c : columns) rec.labels[c] = {};
        return {std::move(out), std::move(rec)};
    }
    const Index h = ks.height(), w = ks.width();
    const double two_pi = 2.0 * std::numbers::pi;
    for (Index c : columns) {
        const double kx = two_pi * static_cast<double>(c - w / 2) / static_cast<double>(w);
        for (Index y = 0; y < h; ++y) {
            const double ky = two_pi * static_cast<double>(y - h / 2) / static_cast<double>(h);
            const cdouble phase = std::polar(1.0, -(kx * dx + ky * dy));
            for (auto& plane : out.coils) plane(y, c) = cfloat(cdouble(plane(y, c)) * phase);
        }
        rec.labels[c] = {LineKind::translation, 0.0, dx, dy};
    }
    return {std::move(out), std::move(rec)};
}

void CorruptionConfig::validate() const {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("corruption: fraction must lie in [0, 1]");
    if (!(rotation_weight >= 0 && spike_weight >= 0 && translation_weight >= 0) ||
        rotation_weight + spike_weight + translation_weight <= 0.0)
        throw std::invalid_argument("corruption: kind weights must be nonnegative with a positive sum");
    if (!(max_angle_deg >= 0.0 && max_angle_deg <= 180.0)) throw std::invalid_argument("corruption: bad angle range");
    if (!(spike_min_rms >= 0.0 && spike_max_rms >= spike_min_rms)) throw std::invalid_argument("corruption: bad spike range");
    if (!(line_spike_probability >= 0.0 && line_spike_probability <= 1.0))
        throw std::invalid_argument("corruption: line spike probability must lie in [0, 1]");
    if (!(max_translation >= 0.0)) throw std::invalid_argument("corruption: bad translation range");
    if (!(acs_fraction > 0.0 && acs_fraction <= 1.0)) throw std::invalid_argument("corruption: bad acs fraction");
}

CorruptionConfig corruption_config_from_json(const json& j) {
    static const std::set<std::string> allowed{"fraction", "rotation_weight", "spike_weight", "translation_weight",
                                               "max_angle_deg", "spike_min_rms", "spike_max_rms",
                                               "line_spike_probability", "max_translation", "min_lines",
                                               "acs_fraction", "variable_mask"};
    for (const auto& [k, _] : j.items())
        if (!allowed.contains(k)) throw std::invalid_argument("unknown key in corruption config: " + k);
    CorruptionConfig c;
    c.fraction = j.value("fraction", c.fraction);
    c.rotation_weight = j.value("rotation_weight", c.rotation_weight);
    c.spike_weight = j.value("spike_weight", c.spike_weight);
    c.translation_weight = j.value("translation_weight", c.translation_weight);
    c.max_angle_deg = j.value("max_angle_deg", c.max_angle_deg);
    c.spike_min_rms = j.value("spike_min_rms", c.spike_min_rms);
    c.spike_max_rms = j.value("spike_max_rms", c.spike_max_rms);
    c.line_spike_probability = j.value("line_spike_probability", c.line_spike_probability);
    c.max_translation = j.value("max_translation", c.max_translation);
    c.min_lines = j.value("min_lines", c.min_lines);
    c.acs_fraction = j.value("acs_fraction", c.acs_fraction);
    c.variable_mask = j.value("variable_mask", c.variable_mask);
    c.validate();
    return c;
}

json to_json(const CorruptionConfig& c) {
    return {{"fraction", c.fraction},
            {"rotation_weight", c.rotation_weight},
            {"spike_weight", c.spike_weight},
            {"translation_weight", c.translation_weight},
            {"max_angle_deg", c.max_angle_deg},
            {"spike_min_rms", c.spike_min_rms},
            {"spike_max_rms", c.spike_max_rms},
            {"line_spike_probability", c.line_spike_probability},
            {"max_translation", c.max_translation},
            {"min_lines", c.min_lines},
            {"acs_fraction", c.acs_fraction},
            {"variable_mask", c.variable_mask}};
}

ComplexImage combine_coils(const KSpaceSlice& ks, std::span<const ComplexImage> maps) {
    if (static_cast<Index>(maps.size()) != ks.num_coils())
        throw std::invalid_argument("combine_coils: one map per coil required");
    ComplexImage acc = ComplexImage::Zero(ks.height(), ks.width());
    for (Index c = 0; c < ks.num_coils(); ++c) acc += maps[static_cast<std::size_t>(c)].conjugate() * coil_image(ks, c);
    return acc;
}

KSpaceSlice single_coil(const KSpaceSlice& ks) {
    const auto maps = coil_sensitivities(static_cast<int>(ks.num_coils()), ks.height(), ks.width());
    KSpaceSlice out(1, ks.height(), ks.width());
    out.meta = ks.meta;
    out.coil(0) = dft2(combine_coils(ks, maps)).cast<cfloat>();
    return out;
}

std::vector<double> column_magnitudes(const KSpaceSlice& ks, Index col, Index coil) {
    std::vector<double> out(static_cast<std::size_t>(ks.height()));
    for (Index y = 0; y < ks.height(); ++y) out[static_cast<std::size_t>(y)] = std::abs(ks.coil(coil)(y, col));
    return out;
}

CorruptedSlice corrupt_slice(const KSpaceSlice& ks, const CorruptionConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const KSpaceSlice full = single_coil(ks);
    const Index w = full.width(), h = full.height();

    SamplingMask mask = cfg.variable_mask ? sample_variable_mask(w, std::min(cfg.min_lines, w), cfg.acs_fraction, rng)
                                          : full_mask(w, acs_block_size(w, cfg.acs_fraction));
    CorruptedSlice out;
    out.clean = apply_mask(full, mask);
    out.mask = mask;
    const ColumnRange acs = acs_range(mask);

    std::vector<Index> rot_cols, trans_cols;
    std::vector<Spike> spikes;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double wsum = cfg.rotation_weight + cfg.spike_weight + cfg.translation_weight;
    for (Index c : mask.acquired_indices()) {
        out.record.labels[c] = {};
        if (acs.contains(c)) continue;
        if (unit(rng) >= cfg.fraction) continue;
        const double kind = unit(rng) * wsum;
        if (kind < cfg.rotation_weight) {
            rot_cols.push_back(c);
        } else if (kind < cfg.rotation_weight + cfg.spike_weight) {
            const auto mags = column_magnitudes(out.clean, c);
            double rms = 0.0;
            for (double m : mags) rms += m * m;
            rms = std::sqrt(rms / static_cast<double>(h));
            const double scale = cfg.spike_min_rms + (cfg.spike_max_rms - cfg.spike_min_rms) * unit(rng);
            const cdouble amp = std::polar(scale * rms, 2.0 * std::numbers::pi * unit(rng));
            if (unit(rng) < cfg.line_spike_probability) {
                auto line = line_spike(0, c, h, amp);
                spikes.insert(spikes.end(), line.begin(), line.end());
            } else {
                std::uniform_int_distribution<Index> ky(0, h - 1);
                spikes.push_back({0, ky(rng), c, amp});
            }
        } else {
            trans_cols.push_back(c);
        }
    }
    const double deg = std::numbers::pi / 180.0;
    const double angle = cfg.max_angle_deg * deg * (2.0 * unit(rng) - 1.0);
    const double dx = cfg.max_translation * (2.0 * unit(rng) - 1.0);
    const double dy = cfg.max_translation * (2.0 * unit(rng) - 1.0);

    KSpaceSlice k = out.clean;
    if (!rot_cols.empty()) {
        const ComplexImage source = idft2(ComplexImage(full.coil(0).cast<cdouble>()));
        auto [rk, rrec] = inject_rotation(k, source, {}, rot_cols, angle, acs);
        k = std::move(rk);
        out.record.merge(rrec);
    }
    if (!trans_cols.empty()) {
        auto [tk, trec] = inject_translation(k, trans_cols, dx, dy, acs);
        k = std::move(tk);
        out.record.merge(trec);
    }
    if (!spikes.empty()) {
        auto [sk, srec] = inject_spike(k, spikes, acs);
        k = std::move(sk);
        out.record.merge(srec);
    }
    out.corrupted = std::move(k);
    return out;
}

std::vector<CorruptedSlice> make_corruption_dataset(const std::vector<KSpaceSlice>& dataset,
                                                    const CorruptionConfig& cfg, std::uint64_t seed) {
    if (dataset.empty()) throw DataError("make_corruption_dataset: empty dataset");
    cfg.validate();
    std::vector<CorruptedSlice> out(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t i) { out[i] = corrupt_slice(dataset[i], cfg, split_seed(seed, i)); });
    return out;
}

std::vector<LinePair> line_pairs(const std::vector<CorruptedSlice>& slices) {
    std::vector<LinePair> out;
    for (std::size_t s = 0; s < slices.size(); ++s) {
        const auto& cs = slices[s];
        std::vector<std::vector<float>> acs_lines;
        for (Index a : cs.mask.acs_indices()) {
            const auto m = column_magnitudes(cs.corrupted, a);
            acs_lines.emplace_back(m.begin(), m.end());
        }
        for (Index c : cs.mask.acquired_indices()) {
            if (cs.mask.is_acs(c)) continue;
            const auto m = column_magnitudes(cs.corrupted, c);
            const std::vector<float> high(m.begin(), m.end());
            for (const auto& low : acs_lines) out.push_back({high, low, cs.record.corrupted(c) ? 1 : 0, s, c});
        }
    }
    return out;
}

json to_json(const CorruptionRecord& rec) {
    json labels = json::array();
    for (const auto& [col, l] : rec.labels) {
        json e{{"column", col}, {"kind", to_string(l.kind)}};
        if (l.kind == LineKind::rotation) e["angle"] = l.angle;
        if (l.kind == LineKind::translation) e["shift"] = {l.dx, l.dy};
        labels.push_back(e);
    }
    json spikes = json::array();
    for (const auto& s : rec.spikes)
        spikes.push_back({s.coil, s.ky, s.kx, s.amplitude.real(), s.amplitude.imag()});
    return {{"labels", labels}, {"spikes", spikes}};
}

CorruptionRecord record_from_json(const json& j) {
    CorruptionRecord rec;
    for (const auto& e : j.at("labels")) {
        ColumnLabel l;
        l.kind = line_kind_from_string(e.at("kind").get<std::string>());
        if (e.contains("angle")) l.angle = e.at("angle").get<double>();
        if (e.contains("shift")) {
            l.dx = e.at("shift").at(0).get<double>();
            l.dy = e.at("shift").at(1).get<double>();
        }
        rec.labels[e.at("column").get<Index>()] = l;
    }
    for (const auto& s : j.at("spikes"))
        rec.spikes.push_back({s.at(0).get<Index>(), s.at(1).get<Index>(), s.at(2).get<Index>(),
                              {s.at(3).get<double>(), s.at(4).get<double>()}});
    return rec;
}

void write_corruption_dataset(const fs::path& out, const std::vector<CorruptedSlice>& slices) {
    std::vector<KSpaceSlice> clean, corrupted;
    json entries = json::array();
    for (const auto& s : slices) {
        clean.push_back(s.clean);
        corrupted.push_back(s.corrupted);
        entries.push_back({{"mask", to_json(s.mask)}, {"record", to_json(s.record)}});
    }
    write_dataset(out / "clean", clean);
    write_dataset(out / "corrupted", corrupted);
    std::ofstream(out / "labels.json") << json{{"version", 1}, {"slices", entries}}.dump(1) << '\n';
}

std::vector<CorruptedSlice> read_corruption_dataset(const fs::path& dir) {
    auto clean = read_dataset(dir / "clean");
    auto corrupted = read_dataset(dir / "corrupted");
    std::ifstream lf(dir / "labels.json");
    if (!lf) throw DataError("missing labels.json in " + dir.string());
    json j;
    try {
        lf >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed labels.json: ") + e.what());
    }
    const auto& entries = j.at("slices");
    if (clean.size() != corrupted.size() || clean.size() != entries.size())
        throw DataError("corruption dataset: clean/corrupted/labels disagree in slice count");
    std::vector<CorruptedSlice> out(clean.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].clean = std::move(clean[i]);
        out[i].corrupted = std::move(corrupted[i]);
        try {
            out[i].mask = mask_from_json(entries[i].at("mask"));
            out[i].record = record_from_json(entries[i].at("record"));
        } catch (const std::exception& e) {
            throw DataError(std::string("labels.json entry invalid: ") + e.what());
        }
        if (out[i].mask.width() != out[i].clean.width()) throw DataError("labels.json: mask width mismatch");
    }
    return out;
}

}  // namespace kscope
