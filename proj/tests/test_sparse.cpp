#include "dnw/dataset.hpp"
#include "dnw/error.hpp"
#include "dnw/sparse.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace dnw;

TEST_CASE("keep count rounds up without float spill") {
    CHECK(keep_count(200, 0.1) == 20);
    CHECK(keep_count(10, 0.1) == 1);
    CHECK(keep_count(11, 0.1) == 2);
    CHECK(keep_count(7, 1.0) == 7);
    CHECK(keep_count(3, 0.3) == 1);
    CHECK(keep_count(100, 0.07) == 7);
    CHECK_THROWS_AS(keep_count(10, 0.0), Error);
    CHECK_THROWS_AS(keep_count(10, 1.5), Error);
}

TEST_CASE("fraction mask keeps the largest magnitudes with index tie-break") {
    const std::vector<double> w{0.5, -0.5, 0.1, 0.5, -0.9, 0.0, 0.2, 0.3, 0.4, 0.05};
    const auto m = mask_topk_fraction(w, 0.3);
    const std::vector<std::uint8_t> expect{1, 1, 0, 0, 1, 0, 0, 0, 0, 0};
    CHECK(m == expect);

    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> v(1 + rng.below(60));
        for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
        const double f = 0.05 + 0.95 * rng.next_unit();
        const auto mask = mask_topk_fraction(v, f);
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return std::abs(v[a]) > std::abs(v[b]); });
        std::vector<std::uint8_t> oracle(v.size(), 0);
        for (std::size_t i = 0; i < keep_count(v.size(), f); ++i) oracle[order[i]] = 1;
        CHECK(mask == oracle);
    }
}

TEST_CASE("magnitude policy keeps exactly the budget active every step") {
    const auto data = gen_spirals(80, 2, 0.1, 2);
    SparseConfig c;
    c.layers = {2, 100, 2};
    c.seed = 3;
    auto net = build_sparse_net(c);
    TrainConfig t;
    t.epochs = 3;
    t.lr = 0.05;
    t.seed = 3;
    std::size_t steps = 0;
    SparseHooks hooks;
    hooks.on_step = [&](std::size_t, const SparseStep& s) {
        ++steps;
        REQUIRE(s.active.size() == 2);
        CHECK(s.active[0] == 20);
        CHECK(s.active[1] == 20);
    };
    const auto hist = train_sparse(net, data, t, hooks);
    CHECK(steps == 3 * (data.train.size() / 32));
    for (const auto& r : hist) {
        CHECK(r.active_edges == 40);
        CHECK(r.k == 40);
    }
}

TEST_CASE("dense first layer") {
    SparseConfig c;
    c.layers = {2, 10, 10, 2};
    c.dense_first_layer = true;
    const auto net = build_sparse_net(c);
    CHECK(net.layers[0].active() == 20);
    CHECK(net.layers[1].active() == 10);
    CHECK(net.layers[2].active() == 2);
}

TEST_CASE("frozen random mask trains only its entries") {
    const auto data = gen_spirals(40, 2, 0.1, 2);
    SparseConfig c;
    c.layers = {2, 20, 2};
    c.policy = MaskPolicy::FrozenRandom;
    c.keep_fraction = 0.25;
    c.seed = 9;
    auto net = build_sparse_net(c);
    const auto before = net;
    TrainConfig t;
    t.epochs = 2;
    t.seed = 9;
    train_sparse(net, data, t);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(net.layers[l].mask == before.layers[l].mask);
        CHECK(net.layers[l].active() == keep_count(net.layers[l].weight.size(), 0.25));
        std::size_t moved = 0;
        for (std::size_t i = 0; i < net.layers[l].weight.size(); ++i) {
            if (net.layers[l].mask[i])
                moved += net.layers[l].weight.value[i] != before.layers[l].weight.value[i];
            else
                CHECK(net.layers[l].weight.value[i] == before.layers[l].weight.value[i]);
        }
        CHECK(moved > 0);
    }
}

TEST_CASE("sparse config validation") {
    SparseConfig c;
    c.layers = {2, 4, 2};
    c.keep_fraction = 0.0;
    CHECK_THROWS_AS(build_sparse_net(c), Error);
    c.keep_fraction = 1.01;
    CHECK_THROWS_AS(build_sparse_net(c), Error);
    c.keep_fraction = 0.5;
    c.layers = {2};
    CHECK_THROWS_AS(build_sparse_net(c), Error);
    c.layers = {3, 4, 2};
    auto net = build_sparse_net(c);
    const auto data = gen_spirals(10, 2, 0.1, 1);
    CHECK_THROWS_AS(train_sparse(net, data, TrainConfig{}), Error);
}
