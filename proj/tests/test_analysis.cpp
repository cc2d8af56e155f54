#include <doctest.h>

#include <fstream>

#include "kscope/analysis.hpp"
#include "kscope/phantom.hpp"
#include "oracles.hpp"

using namespace kscope;

TEST_SUITE("analysis") {

TEST_CASE("line correlation equals the summed flattened covariance") {
    std::mt19937_64 rng(1);
    const Index h = 5, w = 6, n = 4;
    std::vector<ComplexImage> ks;
    for (Index i = 0; i < n; ++i) ks.push_back(oracle::random_complex(h, w, rng));
    const auto map = autocorr_kspace(ks);
    REQUIRE(map.size() == w);
    for (Index i = 0; i < w; ++i)
        for (Index j = 0; j < w; ++j) {
            cdouble ref = 0;
            for (Index r = 0; r < h; ++r)
                for (Index q = 0; q < h; ++q)
                    for (Index s = 0; s < n; ++s) ref += ks[s](r, i) * std::conj(ks[s](q, j));
            ref /= static_cast<double>(n - 1);
            CHECK(std::abs(map.values(i, j) - ref) < 1e-10);
        }
    CHECK((map.values - map.values.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    for (Index i = 0; i < w; ++i) CHECK(map.values(i, i).imag() == 0.0);
    CHECK(map.phase()(1, 2) == doctest::Approx(std::arg(map.values(1, 2))));
    CHECK_THROWS_AS(autocorr_kspace({ks[0]}), DataError);
    CHECK_THROWS_AS(autocorr_kspace({ks[0], oracle::random_complex(5, 5, rng)}), DataError);
}

TEST_CASE("summary finds the strongest off-diagonal partner") {
    LineCorrelationMap m;
    const Index w = 25;
    m.values = Eigen::MatrixXcd::Constant(w, w, cdouble(0.1, 0.0));
    for (Index i = 0; i < w; ++i) m.values(i, i) = 10.0;
    m.values(3, 12) = m.values(12, 3) = 2.0;  // 12 is the center column
    m.values(20, 5) = m.values(5, 20) = cdouble(0.0, 3.0);
    const auto s = summarize(m, 0.08);
    CHECK(s.acs_begin == 12);
    CHECK(s.acs_end == 14);
    REQUIRE(s.partners.size() == static_cast<std::size_t>(w));
    CHECK(s.partners[3] == 12);
    CHECK(s.partners[20] == 5);
    CHECK(s.partners[5] == 20);
    CHECK(s.argmax_in_acs_fraction > 0.0);
    CHECK(s.argmax_in_acs_fraction <= 1.0);
    CHECK(s.phase_circular_variance >= 0.0);
    CHECK(s.phase_circular_variance <= 1.0);
}

TEST_CASE("phantom k-space lines correlate most with the center block") {
    auto cfg = preset_config("shepp-logan");
    cfg.height = cfg.width = 32;
    const auto slices = make_phantom_slices(cfg, 2, 4, 3);
    const auto map = autocorr(slices, 32);
    CHECK(summarize(map).argmax_in_acs_fraction >= 0.8);
    CHECK_THROWS_AS(autocorr(slices, 64), std::invalid_argument);
    const auto j = to_json(map, {0, 5}, summarize(map));
    CHECK(j["kind"] == "autocorr");
    CHECK(j["anchors"].size() == 2);
}

TEST_CASE("histograms count every value once and clamp the ends") {
    const auto h = histogram({0.0, 0.1, 0.5, 0.99, 1.0, -3.0, 7.0}, 4, 0.0, 1.0);
    CHECK(h.total() == 7);
    CHECK(h.counts == std::vector<std::size_t>{3, 0, 1, 3});
    CHECK(h.bin_width() == doctest::Approx(0.25));
    const auto auto_range = histogram({2.0, 2.0, 2.0}, 3);
    CHECK(auto_range.total() == 3);
    CHECK(auto_range.hi > auto_range.lo);
    CHECK_THROWS(histogram({std::nan("")}, 3, 0.0, 1.0));
    CHECK_THROWS(histogram({1.0}, 0, 0.0, 1.0));
    CHECK_THROWS(histogram({1.0}, 3, 1.0, 1.0));
    CHECK(to_json(h)["counts"].size() == 4);
}

TEST_CASE("SVG output is deterministic and escapes text") {
    const Series s{"a<b", {0, 1, 2}, {0.5, 0.25, 1.0}};
    const auto one = svg_lines("t & u", "x", "y", {s});
    CHECK(one == svg_lines("t & u", "x", "y", {s}));
    CHECK(one.find("<svg") == 0);
    CHECK(one.find("a&lt;b") != std::string::npos);
    CHECK(one.find("t &amp; u") != std::string::npos);
    const auto hm = svg_heatmap("m", Eigen::MatrixXd::Identity(3, 3));
    CHECK(hm.find("</svg>") != std::string::npos);
    const auto hs = svg_histograms("h", {{"x", histogram({0.1, 0.2}, 2, 0, 1)}});
    CHECK(hs.find("</svg>") != std::string::npos);
}

TEST_CASE("report emission writes plots and a table per result") {
    const auto dir = oracle::scratch("report");
    const nlohmann::json det = {{"kind", "detector"},
                                {"labels", {1, 0, 1, 0, 0}},
                                {"scores", {{"net", {0.9, 0.2, 0.7, 0.1, 0.3}}, {"baseline", {0.5, 0.5, 0.4, 0.6, 0.5}}}}};
    const auto files = emit_report({{"results", {det}}}, dir);
    CHECK(files.size() >= 2);
    for (const auto& f : files) CHECK(std::filesystem::exists(f));
    std::ifstream rf(dir / "report.json");
    const auto rep = nlohmann::json::parse(rf);
    CHECK(rep["version"] == 1);
    REQUIRE(rep["entries"].size() == 1);
    CHECK(rep["entries"][0]["kind"] == "detector");

    CHECK_THROWS_AS(emit_report({{"kind", "nonsense"}}, dir), DataError);
    CHECK_THROWS_AS(emit_report({{"kind", "detector"}, {"labels", {1, 0}}}, dir), DataError);
    CHECK_THROWS_AS(emit_report(nlohmann::json(3), dir), DataError);
}

}  // TEST_SUITE
