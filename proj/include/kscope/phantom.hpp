#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "kscope/core.hpp"

namespace kscope {


/// One ellipsoid of a phantom. Coordinates are normalized to [-1, 1]^3;
/// rotation is about z, in radians.
struct EllipseSpec {
    double intensity = 0.0;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d axes = Eigen::Vector3d::Ones();
    double rotation = 0.0;

    bool contains(double x, double y, double z) const;
};

/// Canonical 10-ellipsoid modified Shepp-Logan table (z-rotations only).
std::vector<EllipseSpec> modified_shepp_logan();
/// Alternative topology: two bright bones with marrow and joint structures.
std::vector<EllipseSpec> knee_like();

struct PhantomConfig {
    std::string anatomy = "shepp-logan";
    std::vector<EllipseSpec> ellipses = modified_shepp_logan();
    Index height = 128;
    Index width = 128;
    double jitter_center = 0.05;    // absolute, per coordinate
    double jitter_axes = 0.05;      // relative
    double jitter_rotation = 0.0872664625997164788;  // 5 degrees
    double blur_sigma = 1.0;        // pixels
    int coils = 4;
    double noise_sigma = 0.005;     // complex std per k-space sample; canonical peak intensity is 1
    double phase_roll = 1.5707963267948966;  // max |d phase / d coord| per axis, coords in [-1, 1]
    double z_extent = 0.5;          // slices of a volume span [-z_extent, z_extent]
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

/// Default config for a named preset: "shepp-logan" or "knee".
PhantomConfig preset_config(const std::string& anatomy);

PhantomConfig phantom_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhantomConfig& cfg);
nlohmann::json to_json(const EllipseSpec& e);

/// Pixel-center grid: column j -> x = -1 + (2j + 1)/W, row i -> y = 1 - (2i + 1)/H.
double grid_x(Index j, Index width);
double grid_y(Index i, Index height);

/// Sum of indicator intensities of the given ellipses on the pixel grid at z.
RealImage render_ellipses(const std::vector<EllipseSpec>& ellipses, Index height, Index width, double z);

/// Draws independent center/axes/rotation jitter for every ellipse.
std::vector<EllipseSpec> jitter_ellipses(const PhantomConfig& cfg, Rng& rng);

RealImage render_phantom_slice(const PhantomConfig& cfg, double z, Rng& rng);

/// Gaussian-profile coil maps on a ring around the FOV with smooth phase,
/// normalized so sum_c |s_c|^2 = 1 at every pixel. coils == 1 is uniform 1.
std::vector<ComplexImage> coil_sensitivities(int coils, Index height, Index width);

/// Separable Gaussian blur, kernel truncated at 4 sigma and normalized to unit
/// sum, zero boundary. sigma == 0 is the identity.
ComplexImage gaussian_blur(const ComplexImage& img, double sigma);
std::vector<double> gaussian_kernel(double sigma);

/// Phase roll -> blur -> coil maps -> dft2 -> complex noise.
KSpaceSlice phantom_to_kspace(const RealImage& img, const PhantomConfig& cfg, Rng& rng);

/// The complex image before coil modulation (phase roll + blur), drawing the
/// same random numbers phantom_to_kspace draws for the phase roll.
ComplexImage phase_rolled_blurred(const RealImage& img, const PhantomConfig& cfg, Rng& rng);

double slice_position(Index slice, Index slices_per_volume, double z_extent);

/// Generates volumes x slices_per_volume slices. Volume v uses seed
/// split_seed(master, v); slice s of it uses split_seed(volume_seed, s).
std::vector<KSpaceSlice> make_phantom_slices(const PhantomConfig& cfg, Index volumes, Index slices_per_volume,
                                             std::uint64_t master_seed, std::uint64_t first_volume_id = 0);

/// Regenerates a single slice from its recorded seed.
KSpaceSlice regenerate_slice(const PhantomConfig& cfg, std::uint64_t slice_seed, Index slice, Index slices_per_volume);

void make_phantom_dataset(const PhantomConfig& cfg, Index volumes, Index slices_per_volume,
                          const std::filesystem::path& out, std::uint64_t master_seed);

}  // namespace kscope
