#include <doctest.h>

#include "kscope/continual.hpp"
#include "kscope/experiments.hpp"
#include "oracles.hpp"

using namespace kscope;
using nn::Vec;

namespace {

FisherDiagonal fisher(std::initializer_list<double> v) {
    FisherDiagonal f;
    f.values = Vec::Map(std::data(v), static_cast<Index>(v.size()));
    return f;
}

FisherDiagonal random_fisher(Index n, std::mt19937_64& rng, double sparsity = 0.0) {
    std::exponential_distribution<double> e(1.0);
    std::uniform_real_distribution<double> u;
    FisherDiagonal f;
    f.values.resize(n);
    for (Index i = 0; i < n; ++i) f.values[i] = u(rng) < sparsity ? 0.0 : e(rng);
    if (f.values.sum() == 0.0) f.values[0] = 1.0;
    return f;
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_SUITE("continual") {

TEST_CASE("overlap of a Fisher with itself is one, disjoint supports give zero") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto f = random_fisher(30, rng);
        CHECK(fisher_overlap(f, f) == doctest::Approx(1.0).epsilon(1e-12));
        FisherDiagonal scaled = f;
        scaled.values *= 123.0;
        CHECK(std::abs(fisher_overlap(f, scaled) - 1.0) < 1e-9);
    }
    CHECK(std::abs(fisher_overlap(fisher({1, 2, 0, 0}), fisher({0, 0, 3, 1}))) < 1e-12);
}

TEST_CASE("overlap is symmetric, bounded and matches the scalar formula") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10000; ++t) {
        const Index n = 1 + static_cast<Index>(rng() % 12);
        const auto a = random_fisher(n, rng, 0.3), b = random_fisher(n, rng, 0.3);
        const double ab = fisher_overlap(a, b);
        CHECK(ab == fisher_overlap(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (t < 200) CHECK(ab == doctest::Approx(oracle::overlap(to_std(a.values), to_std(b.values))).epsilon(1e-12));
    }
}

TEST_CASE("worked two-parameter example") {
    const double omega = fisher_overlap(fisher({0.5, 0.5}), fisher({1.0, 0.0}));
    CHECK(omega == doctest::Approx(oracle::overlap({0.5, 0.5}, {1.0, 0.0})).epsilon(1e-12));
    CHECK(std::abs(omega - 0.7071) < 1e-3);
}

TEST_CASE("normalization and validation") {
    const auto n = normalized(fisher({1, 3}));
    CHECK(n.unit_trace);
    CHECK(n.values.sum() == doctest::Approx(1.0));
    CHECK_THROWS_AS(normalized(fisher({0, 0})), NumericalError);
    CHECK_THROWS(fisher({-1, 2}).validate());
    CHECK_THROWS(fisher_overlap(fisher({1, 2}), fisher({1, 2, 3})));
}

TEST_CASE("empirical Fisher is the mean squared per-sample gradient") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<Vec> grads;
    for (int s = 0; s < 7; ++s) {
        Vec v(5);
        for (auto& x : v) x = g(rng);
        grads.push_back(v);
    }
    const auto f = fisher_diagonal(7, 5, [&](std::size_t s, Vec& out) { out = grads[s]; }, "A");
    Vec ref = Vec::Zero(5);
    for (const auto& v : grads) ref += v.cwiseAbs2();
    ref /= 7.0;
    CHECK((f.values - ref).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(f.task == "A");
    CHECK(!f.unit_trace);
}

TEST_CASE("consolidation penalty value and gradient") {
    EwcAnchor a;
    a.anchor = Vec::Zero(3);
    a.anchor << 1.0, -1.0, 0.5;
    a.fisher = fisher({2.0, 0.0, 1.0});
    a.lambda = 4.0;
    Vec p(3);
    p << 2.0, 5.0, 0.0;
    Vec grad = Vec::Zero(3);
    const double v = ewc_penalty(p, a, &grad);
    CHECK(v == doctest::Approx(0.5 * 4.0 * (2.0 * 1.0 + 0.0 + 1.0 * 0.25)));
    CHECK(grad[0] == doctest::Approx(4.0 * 2.0 * 1.0));
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == doctest::Approx(4.0 * 1.0 * -0.5));
    CHECK(ewc_loss(0.75, p, a) == doctest::Approx(0.25 + v));
    a.lambda = 0.0;
    CHECK(ewc_penalty(p, a) == 0.0);
    a.lambda = kLambdaInfinity;
    CHECK_THROWS_AS(ewc_penalty(p, a), std::invalid_argument);
    a.lambda = -1.0;
    CHECK_THROWS_AS(ewc_penalty(p, a), std::invalid_argument);
    a.lambda = 1.0;
    CHECK_THROWS_AS(ewc_penalty(Vec::Zero(2), a), std::invalid_argument);
}

TEST_CASE("partitions: JSON roundtrip, coverage and per-component overlap") {
    const nlohmann::json j = {{"components", {{"head", {{0, 2}}}, {"body", {{2, 5}, {6, 7}}}, {"tail", {{5, 6}}}}},
                              {"param_count", 7}};
    const auto p = partition_from_json(j);
    p.validate(7);
    CHECK(p.names.size() == 3);
    const auto back = partition_from_json(to_json(p));
    CHECK(back.assignment == p.assignment);
    CHECK_THROWS(p.validate(8));
    nlohmann::json gap = j;
    gap["components"]["tail"] = nlohmann::json::array();
    CHECK_THROWS(partition_from_json(gap).validate(7));

    const auto a = fisher({1, 1, 0, 0, 2, 1, 3}), b = fisher({1, 1, 5, 5, 0, 1, 3});
    const auto parts = fisher_overlap_by_component(a, b, p);
    REQUIRE(parts.size() == 3);
    for (const auto& c : parts) {
        if (c.name == "head") CHECK(c.omega == doctest::Approx(1.0));
        if (c.name == "tail") CHECK(c.omega == doctest::Approx(1.0));
        if (c.name == "body")
            CHECK(c.omega == doctest::Approx(oracle::overlap({0, 0, 2, 3}, {5, 5, 0, 3})));
    }
}

TEST_CASE("lambda lists") {
    const auto l = parse_lambda_list("0,3e2,inf");
    REQUIRE(l.size() == 3);
    CHECK(l[1] == 300.0);
    CHECK(std::isinf(l[2]));
    CHECK_THROWS_AS(parse_lambda_list("1,-2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_lambda_list("1,x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_lambda_list(""), std::invalid_argument);
}

}  // TEST_SUITE
