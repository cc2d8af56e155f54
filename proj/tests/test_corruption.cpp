#include <doctest.h>

#include "kscope/corruption.hpp"
#include "kscope/fft.hpp"
#include "kscope/image.hpp"
#include "kscope/phantom.hpp"
#include "oracles.hpp"

using namespace kscope;

namespace {

KSpaceSlice phantom_slice(Index n, int coils, std::uint64_t seed, double noise = 0.005) {
    auto cfg = preset_config("shepp-logan");
    cfg.height = cfg.width = n;
    cfg.coils = coils;
    cfg.noise_sigma = noise;
    return make_phantom_slices(cfg, 1, 1, seed).front();
}

std::vector<Index> all_columns(Index w) {
    std::vector<Index> c(static_cast<std::size_t>(w));
    std::iota(c.begin(), c.end(), Index{0});
    return c;
}

}  // namespace

TEST_SUITE("corruption") {

TEST_CASE("full-column integer translation equals a circular shift of the image") {
    for (Index n : {32, 33}) {
        const auto ks = phantom_slice(n, 2, 3);
        for (auto [dx, dy] : {std::pair{3, -2}, {-5, 0}, {0, 7}}) {
            const auto [moved, rec] = inject_translation(ks, all_columns(n), dx, dy, {});
            for (Index c = 0; c < ks.num_coils(); ++c) {
                const ComplexImage expect = circshift(coil_image(ks, c), dy, dx);
                CHECK((coil_image(moved, c) - expect).abs().maxCoeff() < 1e-5);
            }
            CHECK(rec.labels.size() == static_cast<std::size_t>(n));
            CHECK(rec.labels.at(0).kind == LineKind::translation);
            CHECK(rec.labels.at(0).dx == dx);
        }
    }
}

TEST_CASE("translation keeps column magnitudes and skips a zero shift") {
    const auto ks = phantom_slice(24, 1, 4);
    const std::vector<Index> cols{2, 5, 20};
    const auto [moved, rec] = inject_translation(ks, cols, 1.5, -0.5, {10, 14});
    for (Index c = 0; c < 24; ++c) CHECK((moved.coil(0).col(c).abs() - ks.coil(0).col(c).abs()).abs().maxCoeff() < 1e-5);
    const auto [same, rec0] = inject_translation(ks, cols, 0.0, 0.0, {});
    CHECK(same == ks);
    CHECK(!rec0.labels.at(2).corrupted());
    CHECK_THROWS_AS(inject_translation(ks, std::vector<Index>{11}, 1.0, 0.0, {10, 14}), std::invalid_argument);
}

TEST_CASE("bilinear rotation: identity at zero and an index permutation at 90 degrees") {
    std::mt19937_64 rng(5);
    const Index n = 16;
    const auto img = oracle::random_complex(n, n, rng);
    CHECK((rotate_bilinear(img, 0.0) - img).abs().maxCoeff() < 1e-12);
    const auto r = rotate_bilinear(img, std::numbers::pi / 2);
    // Counterclockwise with y up: out(y, x) = in(x, n - y) about the (n/2, n/2) origin.
    for (Index y = 1; y < n; ++y)
        for (Index x = 0; x < n; ++x) CHECK(std::abs(r(y, x) - img(x, n - y)) < 1e-9);
    CHECK(r.row(0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("rotation injection replaces only the listed columns") {
    const auto ks = phantom_slice(32, 1, 6);
    const ComplexImage src = coil_image(ks, 0);
    const std::vector<Index> cols{3, 9, 27};
    const double angle = 10.0 * std::numbers::pi / 180.0;
    const auto [out, rec] = inject_rotation(ks, src, {}, cols, angle, {14, 18});
    const ComplexImage expect = dft2(rotate_bilinear(src, angle));
    for (Index c = 0; c < 32; ++c) {
        const bool listed = std::find(cols.begin(), cols.end(), c) != cols.end();
        if (listed)
            CHECK((out.coil(0).col(c).cast<cdouble>() - expect.col(c)).abs().maxCoeff() < 1e-5);
        else
            CHECK((out.coil(0).col(c) == ks.coil(0).col(c)).all());
    }
    CHECK(rec.labels.at(9).kind == LineKind::rotation);
    CHECK(rec.labels.at(9).angle == angle);
    const auto [same, rec0] = inject_rotation(ks, src, {}, cols, 0.0, {});
    CHECK(same == ks);
    CHECK(!rec0.labels.at(3).corrupted());
    CHECK_THROWS_AS(inject_rotation(ks, src, {}, std::vector<Index>{15}, angle, {14, 18}), std::invalid_argument);
    const auto multi = phantom_slice(32, 2, 6);
    CHECK_THROWS_AS(inject_rotation(multi, src, {}, cols, angle, {}), std::invalid_argument);
}

TEST_CASE("spikes add their amplitude and are refused inside the ACS") {
    const auto ks = phantom_slice(16, 2, 7);
    const std::vector<Spike> spikes{{1, 3, 4, {2.0, -1.0}}, {0, 0, 12, {0.5, 0.5}}};
    const auto [out, rec] = inject_spike(ks, spikes, {7, 9});
    CHECK(std::abs(cdouble(out.coil(1)(3, 4)) - cdouble(ks.coil(1)(3, 4)) - cdouble(2.0, -1.0)) < 1e-6);
    CHECK(std::abs(cdouble(out.coil(0)(0, 12)) - cdouble(ks.coil(0)(0, 12)) - cdouble(0.5, 0.5)) < 1e-6);
    CHECK(rec.spikes == spikes);
    CHECK(rec.labels.size() == 2);
    const auto line = line_spike(0, 5, 16, {1.0, 0.0});
    CHECK(line.size() == 16);
    CHECK_THROWS_AS(inject_spike(ks, std::vector<Spike>{{0, 0, 8, {1.0, 0.0}}}, {7, 9}), std::invalid_argument);
    CHECK_THROWS_AS(inject_spike(ks, std::vector<Spike>{{2, 0, 1, {1.0, 0.0}}}), std::invalid_argument);
}

TEST_CASE("single-coil emulation recovers the coil-free image") {
    auto cfg = preset_config("shepp-logan");
    cfg.height = cfg.width = 32;
    cfg.noise_sigma = 0.0;
    Rng r1(3), r2(3);
    const RealImage img = render_ellipses(cfg.ellipses, 32, 32, 0.0);
    const auto ks = phantom_to_kspace(img, cfg, r1);
    const auto base = phase_rolled_blurred(img, cfg, r2);
    const auto sc = single_coil(ks);
    REQUIRE(sc.num_coils() == 1);
    CHECK((coil_image(sc, 0) - base).abs().maxCoeff() < 1e-5);
}

TEST_CASE("corrupted slices: labels, ACS protection and clean nominal columns") {
    CorruptionConfig cfg;
    cfg.min_lines = 8;
    auto pcfg = preset_config("shepp-logan");
    pcfg.height = pcfg.width = 32;
    const auto data = make_phantom_slices(pcfg, 4, 10, 11);
    const auto slices = make_corruption_dataset(data, cfg, 5);
    long eligible = 0, corrupted = 0;
    for (const auto& s : slices) {
        s.mask.validate();
        const auto acquired = s.mask.acquired_indices();
        REQUIRE(s.record.labels.size() == acquired.size());
        for (Index c : acquired) {
            REQUIRE(s.record.labels.count(c) == 1);
            const bool bad = s.record.corrupted(c);
            if (s.mask.is_acs(c)) {
                CHECK(!bad);
            } else {
                ++eligible;
                corrupted += bad;
            }
            if (!bad) CHECK((s.corrupted.coil(0).col(c) == s.clean.coil(0).col(c)).all());
            else CHECK(!(s.corrupted.coil(0).col(c) == s.clean.coil(0).col(c)).all());
        }
        for (Index c = 0; c < s.mask.width(); ++c)
            if (!s.mask.is_acquired(c)) CHECK((s.corrupted.coil(0).col(c) == cfloat(0)).all());
    }
    const double rate = static_cast<double>(corrupted) / static_cast<double>(eligible);
    CHECK(rate == doctest::Approx(0.3).epsilon(0.2));
}

TEST_CASE("corruption is deterministic given the seed") {
    CorruptionConfig cfg;
    cfg.min_lines = 8;
    const auto data = std::vector<KSpaceSlice>{phantom_slice(32, 2, 1), phantom_slice(32, 2, 2)};
    const auto a = make_corruption_dataset(data, cfg, 9), b = make_corruption_dataset(data, cfg, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].corrupted == b[i].corrupted);
        CHECK(a[i].record == b[i].record);
        CHECK(a[i].mask == b[i].mask);
    }
}

TEST_CASE("line pairs pair every acquired non-ACS line with every ACS line") {
    CorruptionConfig cfg;
    cfg.min_lines = 8;
    const auto slices = make_corruption_dataset({phantom_slice(32, 1, 1), phantom_slice(32, 1, 2)}, cfg, 3);
    std::size_t expect = 0;
    for (const auto& s : slices) expect += static_cast<std::size_t>((s.mask.acquired_count() - s.mask.acs_size()) * s.mask.acs_size());
    const auto pairs = line_pairs(slices);
    CHECK(pairs.size() == expect);
    for (const auto& p : pairs) {
        CHECK(p.high.size() == 32);
        CHECK(p.label == (slices[p.slice].record.corrupted(p.column) ? 1 : 0));
        CHECK(!slices[p.slice].mask.is_acs(p.column));
    }
}

TEST_CASE("corruption dataset and record JSON roundtrip") {
    CorruptionConfig cfg;
    cfg.min_lines = 8;
    cfg.translation_weight = 0.5;
    auto second = phantom_slice(32, 1, 2);
    second.meta.volume_id = 1;
    const auto slices = make_corruption_dataset({phantom_slice(32, 1, 1), second}, cfg, 4);
    for (const auto& s : slices) CHECK(record_from_json(to_json(s.record)) == s.record);
    const auto dir = oracle::scratch("corruption_rt");
    write_corruption_dataset(dir, slices);
    const auto back = read_corruption_dataset(dir);
    REQUIRE(back.size() == slices.size());
    for (std::size_t i = 0; i < slices.size(); ++i) {
        CHECK(back[i].clean == slices[i].clean);
        CHECK(back[i].corrupted == slices[i].corrupted);
        CHECK(back[i].mask == slices[i].mask);
        CHECK(back[i].record == slices[i].record);
    }
    const auto c2 = corruption_config_from_json(to_json(cfg));
    CHECK(c2.translation_weight == 0.5);
    CHECK(c2.min_lines == 8);
}

TEST_CASE("corruption config validation") {
    CorruptionConfig c;
    c.fraction = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.rotation_weight = c.spike_weight = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(line_kind_from_string(to_string(LineKind::spike)) == LineKind::spike);
    CHECK_THROWS(line_kind_from_string("smear"));
}

}  // TEST_SUITE
