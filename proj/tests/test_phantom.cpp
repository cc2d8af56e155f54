#include <doctest.h>

#include <fstream>

#include "kscope/corruption.hpp"
#include "kscope/image.hpp"
#include "kscope/phantom.hpp"
#include "oracles.hpp"

using namespace kscope;

TEST_SUITE("phantom") {

TEST_CASE("modified Shepp-Logan table has the standard in-plane parameters") {
    // intensity, a, b, x0, y0, phi (degrees)
    const double ref[10][6] = {
        {1.0, .69, .92, 0, 0, 0},          {-.8, .6624, .874, 0, -.0184, 0}, {-.2, .11, .31, .22, 0, -18},
        {-.2, .16, .41, -.22, 0, 18},      {.1, .21, .25, 0, .35, 0},        {.1, .046, .046, 0, .1, 0},
        {.1, .046, .046, 0, -.1, 0},       {.1, .046, .023, -.08, -.605, 0}, {.1, .023, .023, 0, -.606, 0},
        {.1, .023, .046, .06, -.605, 0},
    };
    const auto e = modified_shepp_logan();
    REQUIRE(e.size() == 10);
    for (int i = 0; i < 10; ++i) {
        CHECK(e[i].intensity == doctest::Approx(ref[i][0]));
        CHECK(e[i].axes.x() == doctest::Approx(ref[i][1]));
        CHECK(e[i].axes.y() == doctest::Approx(ref[i][2]));
        CHECK(e[i].center.x() == doctest::Approx(ref[i][3]));
        CHECK(e[i].center.y() == doctest::Approx(ref[i][4]));
        CHECK(e[i].rotation == doctest::Approx(ref[i][5] * std::numbers::pi / 180.0));
    }
}

TEST_CASE("the shipped ellipse table equals the built-in one") {
    std::ifstream f(std::string(KSCOPE_DATA_DIR) + "/shepp_logan_modified.json");
    REQUIRE(f.good());
    const auto cfg = phantom_config_from_json(nlohmann::json::parse(f));
    const auto ref = modified_shepp_logan();
    REQUIRE(cfg.ellipses.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(cfg.ellipses[i].intensity == doctest::Approx(ref[i].intensity));
        CHECK((cfg.ellipses[i].center - ref[i].center).norm() < 1e-12);
        CHECK((cfg.ellipses[i].axes - ref[i].axes).norm() < 1e-12);
        CHECK(cfg.ellipses[i].rotation == doctest::Approx(ref[i].rotation));
    }
}

TEST_CASE("rendering sums overlapping intensities on the pixel-center grid") {
    CHECK(grid_x(0, 4) == doctest::Approx(-0.75));
    CHECK(grid_y(0, 4) == doctest::Approx(0.75));
    CHECK(grid_x(32, 65) == doctest::Approx(0.0));
    const auto img = render_ellipses(modified_shepp_logan(), 65, 65, 0.0);
    CHECK(img(32, 32) == doctest::Approx(0.2));  // skull interior minus brain offset
    CHECK(img(0, 0) == 0.0);
    CHECK(img.minCoeff() >= -1e-12);
    // A single axis-aligned ellipse: count of covered pixel centers.
    EllipseSpec e;
    e.intensity = 2.0;
    e.axes = {0.5, 0.25, 1.0};
    const auto one = render_ellipses({e}, 40, 40, 0.0);
    int inside = 0;
    for (Index i = 0; i < 40; ++i)
        for (Index j = 0; j < 40; ++j) {
            const double x = grid_x(j, 40), y = grid_y(i, 40);
            inside += (x * x / 0.25 + y * y / 0.0625 <= 1.0);
        }
    CHECK(one.sum() == doctest::Approx(2.0 * inside));
}

TEST_CASE("coil maps have unit root-sum-of-squares everywhere") {
    for (int coils : {1, 2, 4, 8}) {
        const auto maps = coil_sensitivities(coils, 24, 20);
        REQUIRE(maps.size() == static_cast<std::size_t>(coils));
        RealImage acc = RealImage::Zero(24, 20);
        for (const auto& m : maps) acc += m.abs2();
        CHECK((acc - 1.0).abs().maxCoeff() < 1e-12);
    }
    const auto one = coil_sensitivities(1, 5, 5)[0];
    CHECK((one - cdouble(1.0)).abs().maxCoeff() == 0.0);
}

TEST_CASE("Gaussian kernel is normalized, symmetric and truncated at four sigma") {
    for (double s : {0.5, 1.0, 2.5}) {
        const auto k = gaussian_kernel(s);
        CHECK(k.size() == static_cast<std::size_t>(2 * std::ceil(4 * s) + 1));
        double sum = 0;
        for (double v : k) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
        for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] == k[k.size() - 1 - i]);
    }
    std::mt19937_64 rng(1);
    const auto img = oracle::random_complex(6, 7, rng);
    CHECK((gaussian_blur(img, 0.0) - img).abs().maxCoeff() == 0.0);
    // Away from the boundary a constant image stays constant.
    const ComplexImage ones = ComplexImage::Constant(30, 30, 1.0);
    CHECK(std::abs(gaussian_blur(ones, 1.0)(15, 15) - 1.0) < 1e-12);
}

TEST_CASE("noiseless k-space decomposes into coil maps times the blurred image") {
    auto cfg = preset_config("shepp-logan");
    cfg.height = cfg.width = 32;
    cfg.noise_sigma = 0.0;
    Rng r1(5), r2(5);
    const RealImage img = render_ellipses(cfg.ellipses, 32, 32, 0.0);
    const auto ks = phantom_to_kspace(img, cfg, r1);
    const auto base = phase_rolled_blurred(img, cfg, r2);
    const auto maps = coil_sensitivities(cfg.coils, 32, 32);
    REQUIRE(ks.num_coils() == cfg.coils);
    for (Index c = 0; c < ks.num_coils(); ++c) {
        const ComplexImage expect = maps[static_cast<std::size_t>(c)] * base;
        CHECK((coil_image(ks, c) - expect).abs().maxCoeff() < 1e-5);
    }
    // RSS of the coil images recovers |image| since the maps have unit RSS.
    CHECK((rss_combine(ks) - base.abs()).abs().maxCoeff() < 1e-5);
}

TEST_CASE("generation is seed-deterministic and slices regenerate from their seeds") {
    auto cfg = preset_config("knee");
    cfg.height = cfg.width = 24;
    const auto a = make_phantom_slices(cfg, 2, 3, 42, 7);
    const auto b = make_phantom_slices(cfg, 2, 3, 42, 7);
    const auto c = make_phantom_slices(cfg, 2, 3, 43, 7);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(!(a[i] == c[i]));
        CHECK(a[i].meta.anatomy == "knee");
        CHECK(a[i].meta.volume_id == 7 + i / 3);
        CHECK(a[i].meta.slice_index == i % 3);
        KSpaceSlice re = regenerate_slice(cfg, a[i].meta.seed, a[i].meta.slice_index, 3);
        re.meta = a[i].meta;
        CHECK(re == a[i]);
    }
}

TEST_CASE("slice positions are symmetric about the center") {
    CHECK(slice_position(0, 1, 0.5) == 0.0);
    for (Index n : {2, 5, 8})
        for (Index s = 0; s < n; ++s) CHECK(slice_position(s, n, 0.5) == doctest::Approx(-slice_position(n - 1 - s, n, 0.5)));
}

TEST_CASE("config JSON roundtrip and validation") {
    auto cfg = preset_config("knee");
    cfg.height = 40;
    cfg.coils = 3;
    cfg.blur_sigma = 2.5;
    const auto back = phantom_config_from_json(to_json(cfg));
    CHECK(back.anatomy == "knee");
    CHECK(back.height == 40);
    CHECK(back.coils == 3);
    CHECK(back.blur_sigma == 2.5);
    CHECK(back.ellipses.size() == cfg.ellipses.size());
    CHECK_THROWS_AS(preset_config("liver"), std::invalid_argument);
    auto bad = cfg;
    bad.coils = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.ellipses[0].axes.x() = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.noise_sigma = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("knee preset differs in topology from Shepp-Logan") {
    const auto sl = render_ellipses(modified_shepp_logan(), 64, 64, 0.0);
    const auto kn = render_ellipses(knee_like(), 64, 64, 0.0);
    CHECK((sl - kn).abs().mean() > 0.05);
}

}  // TEST_SUITE
