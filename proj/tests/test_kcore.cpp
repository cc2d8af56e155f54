#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kscope/dataset.hpp"
#include "kscope/fft.hpp"
#include "kscope/image.hpp"
#include "kscope/metrics.hpp"
#include "kscope/parallel.hpp"
#include "oracles.hpp"

using namespace kscope;

namespace {

std::vector<KSpaceSlice> random_slices(int volumes, int per_volume, Index coils, Index h, Index w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<KSpaceSlice> out;
    for (int v = 0; v < volumes; ++v)
        for (int s = 0; s < per_volume; ++s) {
            KSpaceSlice ks(coils, h, w);
            for (auto& c : ks.coils) c = oracle::random_complex(h, w, rng).cast<cfloat>();
            ks.meta = {"shepp-logan", static_cast<std::uint64_t>(10 + v), static_cast<std::uint32_t>(s), rng(), 99u + v};
            out.push_back(ks);
        }
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("kcore") {

TEST_CASE("1D transform matches the defining sum for power-of-two and other lengths") {
    std::mt19937_64 rng(3);
    for (int n : {1, 2, 3, 5, 8, 12, 16, 31, 64}) {
        const auto img = oracle::random_complex(1, n, rng);
        std::vector<cdouble> x(img.data(), img.data() + n);
        for (bool inverse : {false, true}) {
            auto fast = x, direct = x;
            dft1_inplace(fast, inverse);
            dft1_direct_inplace(direct, inverse);
            const auto ref = oracle::dft(x, inverse);
            for (int k = 0; k < n; ++k) {
                CHECK(std::abs(fast[k] - ref[k]) < 1e-10);
                CHECK(std::abs(direct[k] - ref[k]) < 1e-10);
            }
        }
    }
}

TEST_CASE("2D transform roundtrip and Parseval") {
    std::mt19937_64 rng(4);
    for (auto [h, w] : {std::pair<Index, Index>{16, 16}, {12, 20}, {64, 64}, {7, 9}}) {
        const auto x = oracle::random_complex(h, w, rng);
        const auto k = dft2(x);
        CHECK((idft2(k) - x).abs().maxCoeff() < 1e-10);
        CHECK(std::abs(k.abs2().sum() - x.abs2().sum()) / x.abs2().sum() < 1e-12);
        CHECK((k - oracle::dft2(x)).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("a centered impulse transforms to a constant") {
    for (Index n : {8, 9}) {
        ComplexImage x = ComplexImage::Zero(n, n);
        x(n / 2, n / 2) = 1.0;
        const auto k = dft2(x);
        CHECK((k - cdouble(1.0 / static_cast<double>(n))).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("real transform overload equals the complex one") {
    std::mt19937_64 rng(5);
    const RealImage r = oracle::random_real(10, 12, rng);
    CHECK((dft2(r) - dft2(ComplexImage(r.cast<cdouble>()))).abs().maxCoeff() == 0.0);
}

TEST_CASE("circshift wraps in both axes and composes") {
    RealImage a(3, 4);
    for (Index i = 0; i < a.size(); ++i) a(i) = static_cast<double>(i);
    const auto s = circshift(a, 1, -1);
    CHECK(s(1, 0) == a(0, 1));
    CHECK(s(0, 3) == a(2, 0));
    CHECK((circshift(s, -1, 1) - a).abs().maxCoeff() == 0.0);
}

TEST_CASE("center crop and pad are adjoint") {
    std::mt19937_64 rng(6);
    for (auto [h, w, ch, cw] : {std::tuple<Index, Index, Index, Index>{10, 10, 4, 4}, {9, 11, 4, 5}, {8, 8, 8, 8}}) {
        const auto x = oracle::random_real(h, w, rng);
        const auto y = oracle::random_real(ch, cw, rng);
        CHECK(std::abs((center_crop(x, ch, cw) * y).sum() - (x * center_pad(y, h, w)).sum()) < 1e-12);
        CHECK(center_crop(x, ch, cw)(0, 0) == x((h - ch) / 2, (w - cw) / 2));
    }
    RealImage x = RealImage::Zero(4, 4);
    CHECK_THROWS_AS(center_crop(x, 5, 4), std::invalid_argument);
    CHECK_THROWS_AS(center_pad(x, 3, 4), std::invalid_argument);
}

TEST_CASE("RSS combination of one coil is its magnitude") {
    std::mt19937_64 rng(7);
    std::vector<ComplexImage> one{oracle::random_complex(5, 6, rng)};
    CHECK((rss_combine(one) - one[0].abs()).abs().maxCoeff() < 1e-15);
    std::vector<ComplexImage> two{one[0], one[0]};
    CHECK((rss_combine(two) - std::sqrt(2.0) * one[0].abs()).abs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(rss_combine(std::vector<ComplexImage>{}), std::invalid_argument);
}

TEST_CASE("SSIM, NMSE and PSNR agree with reference implementations") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto y = oracle::random_real(20, 17, rng, 0.0, 2.0);
        const RealImage x = y + 0.2 * oracle::random_real(20, 17, rng, -1.0, 1.0);
        CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y, y.maxCoeff())) < 1e-9);
        CHECK(std::abs(ssim(x, y, {}, 3.0) - oracle::ssim(x, y, 3.0)) < 1e-9);
        CHECK(std::abs(nmse(x, y) - oracle::nmse(x, y)) < 1e-9);
        CHECK(std::abs(psnr(x, y) - oracle::psnr(x, y)) < 1e-9);
        const auto m = evaluate_metrics(x, y);
        CHECK(m.ssim == ssim(x, y));
    }
}

TEST_CASE("metric edge cases") {
    std::mt19937_64 rng(9);
    const auto y = oracle::random_real(12, 12, rng);
    CHECK(ssim(y, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isinf(psnr(y, y)));
    CHECK(nmse(y, y) == 0.0);
    CHECK_THROWS_AS(nmse(y, RealImage::Zero(12, 12)), NumericalError);
    CHECK_THROWS_AS(nmse(y, RealImage::Zero(11, 12)), std::invalid_argument);
    CHECK(to_json(evaluate_metrics(y, y))["psnr"] == "inf");
}

TEST_CASE("SSIM gradient matches central differences") {
    std::mt19937_64 rng(10);
    const auto y = oracle::random_real(10, 9, rng);
    RealImage x = y + 0.3 * oracle::random_real(10, 9, rng, -1.0, 1.0);
    RealImage g;
    const double v = ssim_grad(x, y, g);
    CHECK(v == doctest::Approx(ssim(x, y)).epsilon(1e-12));
    const double h = 1e-6;
    for (Index i = 0; i < x.size(); ++i) {
        const double keep = x(i);
        x(i) = keep + h;
        const double up = ssim(x, y, {}, y.maxCoeff());
        x(i) = keep - h;
        const double dn = ssim(x, y, {}, y.maxCoeff());
        x(i) = keep;
        CHECK(oracle::rel_err(g(i), (up - dn) / (2 * h), 1e-4) < 1e-5);
    }
}

TEST_CASE("box sums and their adjoint") {
    std::mt19937_64 rng(11);
    const auto x = oracle::random_real(9, 8, rng);
    const auto s = box_sum_valid(x, 3);
    REQUIRE(s.rows() == 7);
    REQUIRE(s.cols() == 6);
    CHECK(s(2, 3) == doctest::Approx(x.block(2, 3, 3, 3).sum()));
    const auto y = oracle::random_real(7, 6, rng);
    CHECK(std::abs((s * y).sum() - (x * box_sum_adjoint(y, 3)).sum()) < 1e-12);
}

TEST_CASE("dataset roundtrip is bit-exact and rewriting gives identical bytes") {
    const auto dir = oracle::scratch("dataset_rt");
    const auto slices = random_slices(3, 2, 2, 6, 8, 1);
    write_dataset(dir / "a", slices);
    const auto back = read_dataset(dir / "a");
    REQUIRE(back.size() == slices.size());
    for (std::size_t i = 0; i < slices.size(); ++i) CHECK(back[i] == slices[i]);
    write_dataset(dir / "b", back);
    const auto vols = list_volumes(dir / "a");
    REQUIRE(vols.size() == 3);
    for (const auto& v : vols) {
        CHECK(slurp(v / "slices.bin") == slurp(dir / "b" / v.filename() / "slices.bin"));
        CHECK(slurp(v / "meta.json") == slurp(dir / "b" / v.filename() / "meta.json"));
    }
    const auto single = read_dataset(vols.front());
    CHECK(single.size() == 2);
    CHECK(single.front() == slices.front());
}

TEST_CASE("dataset stores little-endian float32 in slice, coil, row, column order") {
    const auto dir = oracle::scratch("dataset_layout");
    auto slices = random_slices(1, 1, 2, 2, 3, 2);
    write_dataset(dir, slices);
    const auto bytes = slurp(list_volumes(dir).front() / "slices.bin");
    REQUIRE(bytes.size() == 2u * 2u * 3u * 2u * 4u);
    auto at = [&](std::size_t k) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * k + b])) << (8 * b);
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    };
    const auto& ks = slices.front();
    CHECK(at(0) == ks.coil(0)(0, 0).real());
    CHECK(at(1) == ks.coil(0)(0, 0).imag());
    CHECK(at(2) == ks.coil(0)(0, 1).real());
    CHECK(at(6) == ks.coil(0)(1, 0).real());
    CHECK(at(12) == ks.coil(1)(0, 0).real());
}

TEST_CASE("dataset reader rejects malformed input") {
    const auto dir = oracle::scratch("dataset_bad");
    CHECK_THROWS_AS(read_dataset(dir / "missing"), DataError);
    write_dataset(dir / "t", random_slices(1, 2, 1, 4, 4, 3));
    const auto vol = list_volumes(dir / "t").front();
    {
        auto s = slurp(vol / "slices.bin");
        std::ofstream(vol / "slices.bin", std::ios::binary) << s.substr(0, s.size() - 4);
    }
    CHECK_THROWS_AS(read_dataset(dir / "t"), DataError);

    write_dataset(dir / "v", random_slices(1, 1, 1, 4, 4, 4));
    const auto vv = list_volumes(dir / "v").front();
    auto meta = nlohmann::json::parse(slurp(vv / "meta.json"));
    meta["version"] = 99;
    std::ofstream(vv / "meta.json") << meta.dump();
    CHECK_THROWS_AS(read_dataset(dir / "v"), DataError);

    std::ofstream(vv / "meta.json") << "{not json";
    CHECK_THROWS_AS(read_dataset(dir / "v"), DataError);

    auto nan = random_slices(1, 1, 1, 4, 4, 5);
    nan[0].coil(0)(1, 1) = cfloat(std::nanf(""), 0.0f);
    CHECK_THROWS_AS(write_dataset(dir / "n", nan), DataError);
}

TEST_CASE("slice validation") {
    KSpaceSlice empty;
    CHECK_THROWS_AS(empty.validate(), DataError);
    KSpaceSlice ks(2, 4, 4);
    ks.coil(1) = Plane<cfloat>::Zero(4, 5);
    CHECK_THROWS_AS(ks.validate(), DataError);
}

TEST_CASE("parallel_for is deterministic and propagates exceptions") {
    std::vector<double> a(1000), b(1000);
    set_thread_count(1);
    parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
    set_thread_count(4);
    parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
    CHECK(a == b);
    CHECK_THROWS_AS(parallel_for(100, [](std::size_t i) {
                        if (i == 37) throw DataError("boom");
                    }),
                    DataError);
    set_thread_count(1);
}

TEST_CASE("seed splitting gives distinct streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t k = 0; k < 64; ++k) seen.insert(split_seed(s, k));
    CHECK(seen.size() == 256);
    CHECK(split_seed(1, 2) == split_seed(1, 2));
}

}  // TEST_SUITE
