#include "dnw/error.hpp"
#include "dnw/verify.hpp"

#include <doctest.h>

#include <cmath>

using namespace dnw;

TEST_CASE("accepted swap scenarios satisfy the claim") {
    Rng rng(77);
    for (bool general : {false, true}) {
        std::size_t accepted = 0;
        for (int t = 0; t < 600 && accepted < 15; ++t) {
            const auto s = random_swap_scenario(rng, general, 0.02, 0.1);
            const auto r = general ? check_swap_general(s) : check_swap(s);
            if (!r.accepted) {
                CHECK(!r.reason.empty());
                continue;
            }
            ++accepted;
            CHECK(r.alpha > 0.0);
            CHECK(r.inequality);
            CHECK(r.loss_decreased);
            CHECK(r.loss_swap < r.loss_noswap);
            CHECK(r.agree);
        }
        CHECK(accepted > 0);
    }
}

TEST_CASE("simple scenarios pair a hallucinated and a real edge into one node") {
    Rng rng(78);
    std::size_t paired = 0;
    for (int t = 0; t < 40; ++t) {
        const auto s = random_swap_scenario(rng, false, 0.02, 0.1);
        if (s.hallucinated == s.real) {
            CHECK(!check_swap(s).accepted);
            continue;
        }
        ++paired;
        const auto& c = s.model.graph.topology.candidates();
        const auto e = select_edges(s.model.graph.store);
        CHECK(c[s.hallucinated].v == c[s.real].v);
        CHECK(!e.contains(s.hallucinated));
        CHECK(e.contains(s.real));
    }
    CHECK(paired > 10);
}

TEST_CASE("descent check on a quadratic recovers the analytic step bound") {
    const ScalarFn quad = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += 0.5 * v * v;
        return s;
    };
    Rng rng(79);
    std::size_t checked = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(3), g1(3), g2(3);
        for (auto& v : x) v = rng.normal();
        for (auto& v : g1) v = rng.normal();
        for (auto& v : g2) v = rng.normal();
        double d1 = 0.0, d2 = 0.0, n1 = 0.0, n2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            d1 -= g1[i] * x[i];
            d2 -= g2[i] * x[i];
            n1 += g1[i] * g1[i];
            n2 += g2[i] * g2[i];
        }
        const auto r = check_descent(quad, x, g1, g2, 1.0, x);
        if (d1 <= d2) {
            CHECK(!r.accepted);
            continue;
        }
        REQUIRE(r.accepted);
        CHECK(r.margin == doctest::Approx(d1 - d2));
        const double expect = n1 > n2 ? std::min(1.0, 2.0 * (d1 - d2) / (n1 - n2)) : 1.0;
        CHECK(r.alpha_star == doctest::Approx(expect).epsilon(1e-6));
        ++checked;
    }
    CHECK(checked > 50);

    const std::vector<double> x{1.0, 2.0}, g{1.0, 0.0}, h{0.0, 1.0};
    const auto fd = check_descent(quad, x, g, h, 1.0);
    CHECK(fd.accepted);
    CHECK(fd.margin == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(check_descent(quad, x, g, h, 0.0), Error);
    const std::vector<double> shorter{1.0};
    CHECK_THROWS_AS(check_descent(quad, x, shorter, h, 1.0), Error);
}

TEST_CASE("small verification run") {
    VerifyOptions o;
    o.swap_scenarios = 30;
    o.general_scenarios = 15;
    o.descent_trials = 40;
    o.seed = 5;
    const auto r = run_verification(o);
    CHECK(r.ok());
    CHECK(r.swap.accepted == 30);
    CHECK(r.swap_general.accepted == 15);
    CHECK(r.descent.accepted == 40);
    CHECK(r.swap.failed == 0);
    CHECK(r.swap.disagreements == 0);
    CHECK(r.swap.worst_margin < 0.0);
    CHECK(r.to_json().find("\"swap_general\"") != std::string::npos);
}
