#include "kscope/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace kscope {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void put_float(std::string& buf, float f) {
    std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
    char raw[4];
    std::memcpy(raw, &bits, 4);
    buf.append(raw, 4);
}

float get_float(const char* p) {
    std::uint32_t bits;
    std::memcpy(&bits, p, 4);
    return std::bit_cast<float>(to_little(bits));
}

std::string volume_dir_name(std::size_t ordinal) {
    std::ostringstream os;
    os << "vol_";
    os.width(4);
    os.fill('0');
    os << ordinal;
    return os.str();
}

std::vector<KSpaceSlice> read_volume(const fs::path& dir) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw DataError("missing meta.json in " + dir.string());
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw DataError("malformed meta.json in " + dir.string() + ": " + e.what());
    }
    try {
        if (meta.at("version").get<int>() != kDatasetVersion)
            throw DataError("dataset version mismatch in " + dir.string() + ": expected " +
                            std::to_string(kDatasetVersion) + ", found " + meta.at("version").dump());
        const auto coils = meta.at("coils").get<Index>();
        const auto height = meta.at("height").get<Index>();
        const auto width = meta.at("width").get<Index>();
        const auto count = meta.at("slice_count").get<std::size_t>();
        const auto seeds = meta.at("slice_seeds").get<std::vector<std::uint64_t>>();
        const auto indices = meta.at("slice_indices").get<std::vector<std::uint32_t>>();
        if (coils < 1 || height < 1 || width < 1) throw DataError("non-positive shape in " + dir.string());
        if (seeds.size() != count || indices.size() != count)
            throw DataError("slice_seeds/slice_indices disagree with slice_count in " + dir.string());

        std::ifstream bf(dir / "slices.bin", std::ios::binary);
        if (!bf) throw DataError("missing slices.bin in " + dir.string());
        std::string payload((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
        const std::size_t expected =
            count * static_cast<std::size_t>(coils * height * width) * 2 * sizeof(float);
        if (payload.size() != expected)
            throw DataError(std::string(payload.size() < expected ? "truncated payload: " : "") +
                            "metadata/payload shape disagreement in " + dir.string() + ": expected " +
                            std::to_string(expected) + " bytes, found " + std::to_string(payload.size()));

        std::vector<KSpaceSlice> out;
        out.reserve(count);
        const char* p = payload.data();
        for (std::size_t s = 0; s < count; ++s) {
            KSpaceSlice ks(coils, height, width);
            ks.meta.anatomy = meta.at("anatomy").get<std::string>();
            ks.meta.volume_id = meta.at("volume_id").get<std::uint64_t>();
            ks.meta.volume_seed = meta.at("seed").get<std::uint64_t>();
            ks.meta.seed = seeds[s];
            ks.meta.slice_index = indices[s];
            for (Index c = 0; c < coils; ++c)
                for (Index y = 0; y < height; ++y)
                    for (Index x = 0; x < width; ++x, p += 8) ks.coil(c)(y, x) = {get_float(p), get_float(p + 4)};
            out.push_back(std::move(ks));
        }
        return out;
    } catch (const json::exception& e) {
        throw DataError("invalid meta.json in " + dir.string() + ": " + e.what());
    }
}

}  // namespace

void write_dataset(const fs::path& root, const std::vector<KSpaceSlice>& slices) {
    std::vector<std::uint64_t> order;
    std::map<std::uint64_t, std::vector<const KSpaceSlice*>> groups;
    for (const auto& ks : slices) {
        ks.validate();
        auto [it, inserted] = groups.try_emplace(ks.meta.volume_id);
        if (inserted) order.push_back(ks.meta.volume_id);
        it->second.push_back(&ks);
    }
    fs::create_directories(root);

    for (std::size_t v = 0; v < order.size(); ++v) {
        const auto& group = groups.at(order[v]);
        const KSpaceSlice& first = *group.front();
        json meta;
        meta["version"] = kDatasetVersion;
        meta["volume_id"] = first.meta.volume_id;
        meta["anatomy"] = first.meta.anatomy;
        meta["coils"] = first.num_coils();
        meta["height"] = first.height();
        meta["width"] = first.width();
        meta["seed"] = first.meta.volume_seed;
        meta["slice_count"] = group.size();
        std::vector<std::uint64_t> seeds;
        std::vector<std::uint32_t> indices;
        std::string payload;
        payload.reserve(group.size() * static_cast<std::size_t>(first.num_coils() * first.height() * first.width()) * 8);
        for (const KSpaceSlice* ks : group) {
            if (ks->num_coils() != first.num_coils() || ks->height() != first.height() ||
                ks->width() != first.width() || ks->meta.anatomy != first.meta.anatomy ||
                ks->meta.volume_seed != first.meta.volume_seed)
                throw DataError("slices of volume " + std::to_string(first.meta.volume_id) + " disagree in shape or metadata");
            seeds.push_back(ks->meta.seed);
            indices.push_back(ks->meta.slice_index);
            for (const auto& plane : ks->coils)
                for (Index y = 0; y < plane.rows(); ++y)
                    for (Index x = 0; x < plane.cols(); ++x) {
                        put_float(payload, plane(y, x).real());
                        put_float(payload, plane(y, x).imag());
                    }
        }
        meta["slice_seeds"] = seeds;
        meta["slice_indices"] = indices;

        const fs::path dir = root / volume_dir_name(v);
        fs::create_directories(dir);
        std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
        std::ofstream bf(dir / "slices.bin", std::ios::binary);
        bf.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!bf) throw DataError("failed writing " + (dir / "slices.bin").string());
    }
}

std::vector<fs::path> list_volumes(const fs::path& root) {
    if (fs::exists(root / "meta.json")) return {root};
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

std::vector<KSpaceSlice> read_dataset(const fs::path& root) {
    std::vector<KSpaceSlice> out;
    for (const auto& dir : list_volumes(root)) {
        auto vol = read_volume(dir);
        std::move(vol.begin(), vol.end(), std::back_inserter(out));
    }
    return out;
}

}  // namespace kscope
