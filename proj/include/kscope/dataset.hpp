#pragma once

#include <filesystem>
#include <vector>

#include "kscope/core.hpp"

namespace kscope {

inline constexpr int kDatasetVersion = 1;

// On-disk layout: one directory per volume, `vol_NNNN/`, holding
//   meta.json   version, volume_id, anatomy, coils, height, width, seed,
//               slice_count, slice_seeds[], slice_indices[]
//   slices.bin  little-endian interleaved complex float32, [slice][coil][ky][kx]

/// Writes slices grouped by meta.volume_id (first-appearance order).
/// Slices of one volume must agree in coils, shape, anatomy and volume seed.
void write_dataset(const std::filesystem::path& root, const std::vector<KSpaceSlice>& slices);

/// Reads every volume under root (sorted by directory name), or root itself
/// when it directly contains meta.json. Throws DataError on malformed input.
std::vector<KSpaceSlice> read_dataset(const std::filesystem::path& root);

/// Volume directories found under root, sorted.
std::vector<std::filesystem::path> list_volumes(const std::filesystem::path& root);

}  // namespace kscope
