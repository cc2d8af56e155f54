#include "kscope/phantom.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "kscope/dataset.hpp"
#include "kscope/fft.hpp"
#include "kscope/parallel.hpp"

namespace kscope {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

EllipseSpec ellipse(double intensity, double a, double b, double c, double x0, double y0, double z0, double phi_deg) {
    EllipseSpec e;
    e.intensity = intensity;
    e.axes = {a, b, c};
    e.center = {x0, y0, z0};
    e.rotation = phi_deg * kDeg;
    return e;
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* what) {
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw std::invalid_argument(std::string("unknown key in ") + what + ": " + key);
}

}  // namespace

bool EllipseSpec::contains(double x, double y, double z) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double dx = x - center.x(), dy = y - center.y(), dz = z - center.z();
    const double xr = dx * c + dy * s;
    const double yr = -dx * s + dy * c;
    return (xr * xr) / (axes.x() * axes.x()) + (yr * yr) / (axes.y() * axes.y()) +
               (dz * dz) / (axes.z() * axes.z()) <=
           1.0;
}

void PhantomConfig::validate() const {
    if (height < 1 || width < 1) throw std::invalid_argument("phantom: grid must be at least 1x1");
    if (coils < 1) throw std::invalid_argument("phantom: coils must be >= 1");
    if (!(blur_sigma >= 0.0)) throw std::invalid_argument("phantom: blur sigma must be >= 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("phantom: noise sigma must be >= 0");
    if (!(jitter_center >= 0.0 && jitter_axes >= 0.0 && jitter_rotation >= 0.0 && phase_roll >= 0.0))
        throw std::invalid_argument("phantom: jitter ranges must be nonnegative");
    if (jitter_axes >= 1.0) throw std::invalid_argument("phantom: relative axis jitter must be < 1");
    if (!(z_extent >= 0.0 && z_extent <= 1.0)) throw std::invalid_argument("phantom: z extent must lie in [0, 1]");
    for (const auto& e : ellipses) {
        if (!(e.axes.array() > 0.0).all()) throw std::invalid_argument("phantom: ellipse semi-axes must be > 0");
        if (!(e.center.array().abs() <= 1.0).all()) throw std::invalid_argument("phantom: ellipse center outside [-1,1]^3");
    }
}

std::vector<EllipseSpec> modified_shepp_logan() {
    //                 A      a       b      c      x0      y0      z0    phi
    return {
        ellipse(1.0, 0.6900, 0.920, 0.810, 0.00, 0.0000, 0.00, 0.0),
        ellipse(-0.8, 0.6624, 0.874, 0.780, 0.00, -0.0184, 0.00, 0.0),
        ellipse(-0.2, 0.1100, 0.310, 0.220, 0.22, 0.0000, 0.00, -18.0),
        ellipse(-0.2, 0.1600, 0.410, 0.280, -0.22, 0.0000, 0.00, 18.0),
        ellipse(0.1, 0.2100, 0.250, 0.410, 0.00, 0.3500, -0.15, 0.0),
        ellipse(0.1, 0.0460, 0.046, 0.050, 0.00, 0.1000, 0.25, 0.0),
        ellipse(0.1, 0.0460, 0.046, 0.050, 0.00, -0.1000, 0.25, 0.0),
        ellipse(0.1, 0.0460, 0.023, 0.050, -0.08, -0.6050, 0.00, 0.0),
        ellipse(0.1, 0.0230, 0.023, 0.020, 0.00, -0.6060, 0.00, 0.0),
        ellipse(0.1, 0.0230, 0.046, 0.020, 0.06, -0.6050, 0.00, 0.0),
    };
}

std::vector<EllipseSpec> knee_like() {
    return {
        ellipse(0.35, 0.78, 0.92, 0.90, 0.00, 0.00, 0.0, 0.0),    // soft tissue
        ellipse(0.55, 0.46, 0.40, 0.85, 0.00, 0.46, 0.0, 4.0),    // femur
        ellipse(0.55, 0.42, 0.36, 0.85, 0.02, -0.50, 0.0, -3.0),  // tibia
        ellipse(-0.35, 0.34, 0.28, 0.80, 0.00, 0.50, 0.0, 4.0),   // femoral marrow
        ellipse(-0.35, 0.30, 0.25, 0.80, 0.02, -0.54, 0.0, -3.0), // tibial marrow
        ellipse(0.30, 0.15, 0.035, 0.50, 0.28, -0.04, 0.0, 8.0),  // lateral meniscus
        ellipse(0.30, 0.15, 0.035, 0.50, -0.28, -0.04, 0.0, -8.0),// medial meniscus
        ellipse(0.40, 0.09, 0.20, 0.50, 0.60, 0.30, 0.0, 15.0),   // patella
        ellipse(0.45, 0.04, 0.04, 0.90, -0.55, 0.05, 0.0, 0.0),   // vessel
        ellipse(-0.20, 0.05, 0.30, 0.60, -0.40, -0.20, 0.0, -10.0),  // fat pad
    };
}

PhantomConfig preset_config(const std::string& anatomy) {
    PhantomConfig cfg;
    cfg.anatomy = anatomy;
    if (anatomy == "shepp-logan") {
        cfg.ellipses = modified_shepp_logan();
    } else if (anatomy == "knee") {
        cfg.ellipses = knee_like();
    } else {
        throw std::invalid_argument("unknown phantom preset: " + anatomy);
    }
    return cfg;
}

nlohmann::json to_json(const EllipseSpec& e) {
    return {{"intensity", e.intensity},
            {"center", {e.center.x(), e.center.y(), e.center.z()}},
            {"axes", {e.axes.x(), e.axes.y(), e.axes.z()}},
            {"rotation_deg", e.rotation / kDeg}};
}

nlohmann::json to_json(const PhantomConfig& cfg) {
    nlohmann::json ell = nlohmann::json::array();
    for (const auto& e : cfg.ellipses) ell.push_back(to_json(e));
    return {{"anatomy", cfg.anatomy},
            {"ellipses", ell},
            {"height", cfg.height},
            {"width", cfg.width},
            {"jitter", {{"center", cfg.jitter_center}, {"axes", cfg.jitter_axes}, {"rotation_deg", cfg.jitter_rotation / kDeg}}},
            {"blur_sigma", cfg.blur_sigma},
            {"coils", cfg.coils},
            {"noise_sigma", cfg.noise_sigma},
            {"phase_roll", cfg.phase_roll},
            {"z_extent", cfg.z_extent},
            {"seed", cfg.seed}};
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"anatomy", "preset", "ellipses", "height", "width", "jitter", "blur_sigma", "coils",
                         "noise_sigma", "phase_roll", "z_extent", "seed"},
                        "phantom config");
    PhantomConfig cfg;
    if (j.contains("preset")) cfg = preset_config(j.at("preset").get<std::string>());
    if (j.contains("anatomy")) cfg.anatomy = j.at("anatomy").get<std::string>();
    if (j.contains("ellipses")) {
        cfg.ellipses.clear();
        for (const auto& je : j.at("ellipses")) {
            reject_unknown_keys(je, {"intensity", "center", "axes", "rotation_deg"}, "ellipse");
            EllipseSpec e;
            e.intensity = je.at("intensity").get<double>();
            const auto c = je.at("center").get<std::vector<double>>();
            const auto a = je.at("axes").get<std::vector<double>>();
            if (c.size() != 3 || a.size() != 3) throw std::invalid_argument("ellipse center/axes need 3 entries");
            e.center = {c[0], c[1], c[2]};
            e.axes = {a[0], a[1], a[2]};
            e.rotation = je.value("rotation_deg", 0.0) * kDeg;
            cfg.ellipses.push_back(e);
        }
    }
    if (j.contains("height")) cfg.height = j.at("height").get<Index>();
    if (j.contains("width")) cfg.width = j.at("width").get<Index>();
    if (j.contains("jitter")) {
        const auto& jj = j.at("jitter");
        reject_unknown_keys(jj, {"center", "axes", "rotation_deg"}, "jitter");
        cfg.jitter_center = jj.value("center", cfg.jitter_center);
        cfg.jitter_axes = jj.value("axes", cfg.jitter_axes);
        cfg.jitter_rotation = jj.value("rotation_deg", cfg.jitter_rotation / kDeg) * kDeg;
    }
    cfg.blur_sigma = j.value("blur_sigma", cfg.blur_sigma);
    cfg.coils = j.value("coils", cfg.coils);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.phase_roll = j.value("phase_roll", cfg.phase_roll);
    cfg.z_extent = j.value("z_extent", cfg.z_extent);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

double grid_x(Index j, Index width) {
    return -1.0 + (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(width);
}
double grid_y(Index i, Index height) {
    return 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(height);
}

RealImage render_ellipses(const std::vector<EllipseSpec>& ellipses, Index height, Index width, double z) {
    RealImage img = RealImage::Zero(height, width);
    for (const auto& e : ellipses) {
        const double dz = (z - e.center.z()) / e.axes.z();
        const double rz = 1.0 - dz * dz;
        if (rz < 0.0) continue;
        const double c = std::cos(e.rotation), s = std::sin(e.rotation);
        const double ia2 = 1.0 / (e.axes.x() * e.axes.x()), ib2 = 1.0 / (e.axes.y() * e.axes.y());
        for (Index i = 0; i < height; ++i) {
            const double dy = grid_y(i, height) - e.center.y();
            for (Index j = 0; j < width; ++j) {
                const double dx = grid_x(j, width) - e.center.x();
                const double xr = dx * c + dy * s;
                const double yr = -dx * s + dy * c;
                if (xr * xr * ia2 + yr * yr * ib2 <= rz) img(i, j) += e.intensity;
            }
        }
    }
    return img;
}

std::vector<EllipseSpec> jitter_ellipses(const PhantomConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<EllipseSpec> out = cfg.ellipses;
    for (auto& e : out) {
        for (int k = 0; k < 3; ++k) e.center[k] = std::clamp(e.center[k] + cfg.jitter_center * unit(rng), -1.0, 1.0);
        for (int k = 0; k < 3; ++k) e.axes[k] *= 1.0 + cfg.jitter_axes * unit(rng);
        e.rotation += cfg.jitter_rotation * unit(rng);
    }
    return out;
}

RealImage render_phantom_slice(const PhantomConfig& cfg, double z, Rng& rng) {
    if (!(z >= -1.0 && z <= 1.0)) throw std::invalid_argument("render_phantom_slice: z outside [-1, 1]");
    cfg.validate();
    return render_ellipses(jitter_ellipses(cfg, rng), cfg.height, cfg.width, z);
}

std::vector<ComplexImage> coil_sensitivities(int coils, Index height, Index width) {
    if (coils < 1) throw std::invalid_argument("coil_sensitivities: coils must be >= 1");
    if (coils == 1) return {ComplexImage::Ones(height, width)};
    constexpr double ring_radius = 1.4, profile_width = 0.9, phase_slope = 0.6;
    std::vector<ComplexImage> maps(static_cast<std::size_t>(coils), ComplexImage(height, width));
    for (int c = 0; c < coils; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / coils;
        const double cx = ring_radius * std::cos(angle), cy = ring_radius * std::sin(angle);
        for (Index i = 0; i < height; ++i)
            for (Index j = 0; j < width; ++j) {
                const double x = grid_x(j, width), y = grid_y(i, height);
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double mag = std::exp(-d2 / (2.0 * profile_width * profile_width));
                const double phase = angle + phase_slope * (x * std::cos(angle) + y * std::sin(angle));
                maps[static_cast<std::size_t>(c)](i, j) = std::polar(mag, phase);
            }
    }
    RealImage norm = RealImage::Zero(height, width);
    for (const auto& m : maps) norm += m.abs2();
    norm = norm.sqrt();
    for (auto& m : maps) m /= norm.cast<cdouble>();
    return maps;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double v = std::exp(-0.5 * t * t / (sigma * sigma));
        k[static_cast<std::size_t>(t + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

ComplexImage gaussian_blur(const ComplexImage& img, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return img;
    const auto k = gaussian_kernel(sigma);
    const Index r = static_cast<Index>(k.size() / 2);
    const Index h = img.rows(), w = img.cols();
    ComplexImage tmp = ComplexImage::Zero(h, w), out = ComplexImage::Zero(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            cdouble acc = 0.0;
            for (Index t = -r; t <= r; ++t) {
                const Index xs = x + t;
                if (xs >= 0 && xs < w) acc += k[static_cast<std::size_t>(t + r)] * img(y, xs);
            }
            tmp(y, x) = acc;
        }
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            cdouble acc = 0.0;
            for (Index t = -r; t <= r; ++t) {
                const Index ys = y + t;
                if (ys >= 0 && ys < h) acc += k[static_cast<std::size_t>(t + r)] * tmp(ys, x);
            }
            out(y, x) = acc;
        }
    return out;
}

ComplexImage phase_rolled_blurred(const RealImage& img, const PhantomConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double gx = cfg.phase_roll * unit(rng);
    const double gy = cfg.phase_roll * unit(rng);
    ComplexImage rolled(img.rows(), img.cols());
    for (Index i = 0; i < img.rows(); ++i)
        for (Index j = 0; j < img.cols(); ++j)
            rolled(i, j) = std::polar(img(i, j), gx * grid_x(j, img.cols()) + gy * grid_y(i, img.rows()));
    return gaussian_blur(rolled, cfg.blur_sigma);
}

KSpaceSlice phantom_to_kspace(const RealImage& img, const PhantomConfig& cfg, Rng& rng) {
    if (!all_finite(img)) throw std::invalid_argument("phantom_to_kspace: non-finite image");
    const ComplexImage base = phase_rolled_blurred(img, cfg, rng);
    const auto maps = coil_sensitivities(cfg.coils, img.rows(), img.cols());
    std::normal_distribution<double> normal(0.0, cfg.noise_sigma / std::numbers::sqrt2);
    KSpaceSlice ks(cfg.coils, img.rows(), img.cols());
    ks.meta.anatomy = cfg.anatomy;
    for (int c = 0; c < cfg.coils; ++c) {
        ComplexImage k = dft2(ComplexImage(base * maps[static_cast<std::size_t>(c)]));
        if (cfg.noise_sigma > 0.0)
            for (Index i = 0; i < k.size(); ++i) k(i) += cdouble(normal(rng), normal(rng));
        ks.coil(c) = k.cast<cfloat>();
    }
    return ks;
}

double slice_position(Index slice, Index slices_per_volume, double z_extent) {
    if (slices_per_volume <= 1) return 0.0;
    return -z_extent + 2.0 * z_extent * (static_cast<double>(slice) + 0.5) / static_cast<double>(slices_per_volume);
}

KSpaceSlice regenerate_slice(const PhantomConfig& cfg, std::uint64_t slice_seed, Index slice, Index slices_per_volume) {
    Rng rng(slice_seed);
    const RealImage img = render_phantom_slice(cfg, slice_position(slice, slices_per_volume, cfg.z_extent), rng);
    KSpaceSlice ks = phantom_to_kspace(img, cfg, rng);
    ks.meta.seed = slice_seed;
    ks.meta.slice_index = static_cast<std::uint32_t>(slice);
    return ks;
}

std::vector<KSpaceSlice> make_phantom_slices(const PhantomConfig& cfg, Index volumes, Index slices_per_volume,
                                             std::uint64_t master_seed, std::uint64_t first_volume_id) {
    cfg.validate();
    if (volumes < 1 || slices_per_volume < 1)
        throw std::invalid_argument("make_phantom_slices: need at least one volume and one slice");
    const auto total = static_cast<std::size_t>(volumes * slices_per_volume);
    std::vector<KSpaceSlice> out(total);
    parallel_for(total, [&](std::size_t n) {
        const auto v = static_cast<Index>(n) / slices_per_volume, s = static_cast<Index>(n) % slices_per_volume;
        const std::uint64_t volume_id = first_volume_id + static_cast<std::uint64_t>(v);
        const std::uint64_t volume_seed = split_seed(master_seed, volume_id);
        KSpaceSlice ks = regenerate_slice(cfg, split_seed(volume_seed, static_cast<std::uint64_t>(s)), s, slices_per_volume);
        ks.meta.volume_id = volume_id;
        ks.meta.volume_seed = volume_seed;
        out[n] = std::move(ks);
    });
    return out;
}

void make_phantom_dataset(const PhantomConfig& cfg, Index volumes, Index slices_per_volume,
                          const std::filesystem::path& out, std::uint64_t master_seed) {
    write_dataset(out, make_phantom_slices(cfg, volumes, slices_per_volume, master_seed));
}

}  // namespace kscope
