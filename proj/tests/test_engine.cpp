#include "dnw/dataset.hpp"
#include "dnw/engine.hpp"
#include "dnw/error.hpp"

#include "reference.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace dnw;

namespace {

Dataset small_spirals(std::uint64_t seed = 3) { return gen_spirals(60, 2, 0.1, seed); }

GraphSpec small_spec(std::size_t k = 20, std::uint64_t seed = 1) {
    GraphSpec s;
    s.blocks = {3, 4, 4, 2};
    s.k = k;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("library forward matches the reference loss") {
    Rng rng(17);
    for (int t = 0; t < 30; ++t) {
        const auto act = t % 3 == 0 ? Activation::Relu : Activation::Tanh;
        auto p = ref::random_problem(rng, 16, 8, act, t % 4 != 0);
        const auto e = select_edges(p.model.graph.store);
        auto st = forward(p.model, e, p.x, Mode::Train);
        const double lib = softmax_ce(st.logits, p.y).loss;
        const double oracle = ref::loss(p.model, e.mask, p.model.graph.store.weights.value, p.x, p.y);
        CHECK(lib == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("hallucinated weights do not reach the forward pass") {
    Rng rng(5);
    auto p = ref::random_problem(rng, 12, 6);
    const auto e = select_edges(p.model.graph.store);
    const auto before = forward(p.model, e, p.x, Mode::Train).logits;
    std::vector<double> w = p.model.graph.store.weights.value;
    for (std::size_t c = 0; c < w.size(); ++c)
        if (!e.contains(c)) w[c] = 1e3;
    ForwardOptions opt;
    opt.weights = w;
    CHECK(forward(p.model, e, p.x, Mode::Train, opt).logits == before);
}

TEST_CASE("analytic gradients against differenced reference") {
    Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 15; ++t) {
        auto p = ref::random_problem(rng, 12, 6);
        worst = std::max(worst, ref::worst_gradient_error(p, 1e-5));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("edge gradient is the batch inner product") {
    Rng rng(8);
    auto p = ref::random_problem(rng, 10, 5);
    const auto e = select_edges(p.model.graph.store);
    auto st = forward(p.model, e, p.x, Mode::Train);
    const auto g = backward(p.model, e, st, p.y);
    const auto& cands = p.model.graph.topology.candidates();
    for (std::size_t c = 0; c < cands.size(); ++c) {
        double acc = 0.0;
        for (std::size_t b = 0; b < p.x.cols; ++b)
            acc += st.Z(static_cast<std::size_t>(cands[c].u), b) * st.dI(static_cast<std::size_t>(cands[c].v), b);
        CHECK(g.edges[c] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("update_edges applies momentum SGD to every candidate") {
    Rng rng(4);
    auto p = ref::random_problem(rng, 10, 5);
    const auto e = select_edges(p.model.graph.store);
    auto st = forward(p.model, e, p.x, Mode::Train);
    backward(p.model, e, st, p.y);
    const auto grad = edge_gradients(p.model.graph.topology, st);
    EdgeStore store = p.model.graph.store;
    store.weights.velocity.assign(store.size(), 0.25);
    const EdgeStore before = store;
    const SgdSettings s{0.1, 0.9, 1e-4};
    update_edges(store, p.model.graph.topology, st, s);
    for (std::size_t c = 0; c < store.size(); ++c) {
        const double v = 0.9 * 0.25 + grad[c] + 1e-4 * before.weights.value[c];
        CHECK(store.weights.velocity[c] == doctest::Approx(v).epsilon(1e-14));
        CHECK(store.weights.value[c] == doctest::Approx(before.weights.value[c] - 0.1 * v).epsilon(1e-14));
    }
}

TEST_CASE("a node without incoming edges still emits its node op") {
    GraphSpec s;
    s.blocks = {1, 1, 1};
    s.k = 1;
    s.seed = 2;
    Model m = build_model(s, 1, 2);
    m.graph.nodes.beta.value[1] = 0.7;
    // only (1,2): node 1 has no inputs
    const std::vector<double> w(m.graph.topology.num_candidates(), 1.0);
    const auto e = edge_set_from_indices(m.graph.topology.num_candidates(), {2}, w);
    Matrix x(1, 3);
    x.data = {0.1, 0.2, 0.3};
    const auto st = forward(m, e, x, Mode::Train);
    CHECK(st.dead[1] == 1);
    for (std::size_t b = 0; b < 3; ++b) CHECK(st.Z(1, b) == doctest::Approx(0.7));
}

TEST_CASE("training keeps exactly k edges and reports each epoch") {
    const auto data = small_spirals();
    Model m = build_model(small_spec(), 2, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 9;
    std::size_t steps = 0;
    TrainHooks hooks;
    hooks.on_step = [&](std::size_t, const EdgeSet& e, const Model&) {
        CHECK(e.size() == 20);
        ++steps;
    };
    const auto hist = train(m, data, cfg, {}, hooks);
    REQUIRE(hist.size() == 4);
    for (std::size_t i = 0; i < hist.size(); ++i) {
        CHECK(hist[i].epoch == i);
        CHECK(hist[i].active_edges == 20);
        CHECK(hist[i].k == 20);
    }
    CHECK(steps == 3 * (data.train.size() / 16));
    CHECK(m.iteration == steps);
}

TEST_CASE("zero epochs gives only the initial evaluation") {
    const auto data = small_spirals();
    Model m = build_model(small_spec(), 2, 2);
    const Model before = m;
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto hist = train(m, data, cfg);
    REQUIRE(hist.size() == 1);
    CHECK(hist[0].epoch == 0);
    CHECK(m.graph.store == before.graph.store);
}

TEST_CASE("training is deterministic") {
    const auto data = small_spirals();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 4;
    Model a = build_model(small_spec(), 2, 2);
    Model b = build_model(small_spec(), 2, 2);
    const auto ha = train(a, data, cfg);
    const auto hb = train(b, data, cfg);
    CHECK(a.graph.store == b.graph.store);
    CHECK(ha.back().train_loss == hb.back().train_loss);
}

TEST_CASE("straight-through training equals explicit training") {
    const auto data = small_spirals();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 6;
    cfg.make_plain();
    Model a = build_model(small_spec(12), 2, 2);
    Model b = a;
    train(a, data, cfg);
    st_train(b, data, cfg);
    double diff = 0.0;
    for (std::size_t c = 0; c < a.graph.store.size(); ++c)
        diff = std::max(diff, std::abs(a.graph.store.weights.value[c] - b.graph.store.weights.value[c]));
    CHECK(diff < 1e-9);
}

TEST_CASE("straight-through mask keeps ties by ascending index") {
    const std::vector<double> w{0.3, -0.5, 0.5, 0.1, 0.5};
    const auto m = straight_through_mask(w, 2);
    CHECK(m.keep == std::vector<std::uint8_t>{0, 1, 1, 0, 0});
    CHECK(m.tau == 0.5);
}

TEST_CASE("fixed rule keeps its mask and trains only those edges") {
    const auto data = small_spirals();
    Model m = build_model(small_spec(), 2, 2);
    EdgeRule rule;
    rule.selection = EdgeRule::Selection::Fixed;
    rule.fixed.assign(m.graph.topology.num_candidates(), 0);
    for (std::size_t c = 0; c < rule.fixed.size(); c += 3) rule.fixed[c] = 1;
    const auto before = m.graph.store.weights.value;
    TrainConfig cfg;
    cfg.epochs = 1;
    TrainHooks hooks;
    hooks.on_step = [&](std::size_t, const EdgeSet& e, const Model&) { CHECK(e.mask == rule.fixed); };
    train(m, data, cfg, rule, hooks);
    for (std::size_t c = 0; c < before.size(); ++c)
        if (!rule.fixed[c]) CHECK(m.graph.store.weights.value[c] == before[c]);
}

TEST_CASE("numeric blow-up names the iteration") {
    const auto data = small_spirals();
    Model m = build_model(small_spec(), 2, 2);
    TrainConfig cfg;
    cfg.lr = 1e300;
    cfg.momentum = 0.0;
    cfg.epochs = 5;
    try {
        train(m, data, cfg);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}

TEST_CASE("invalid training settings are rejected") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.lr = 0.1;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("eval mode uses running statistics") {
    Rng rng(12);
    auto p = ref::random_problem(rng, 10, 6);
    const auto e = select_edges(p.model.graph.store);
    for (std::size_t v = 0; v < p.model.graph.topology.num_nodes(); ++v) {
        p.model.graph.nodes.running_mean[v] = 0.3;
        p.model.graph.nodes.running_var[v] = 4.0;
    }
    const auto st = forward(p.model, e, p.x, Mode::Eval);
    for (std::size_t v = p.model.graph.topology.num_inputs(); v < static_cast<std::size_t>(p.model.graph.topology.first_output()); ++v)
        for (std::size_t b = 0; b < p.x.cols; ++b)
            CHECK(st.xhat(v, b) == doctest::Approx((st.I(v, b) - 0.3) / std::sqrt(4.0 + kNormEpsilon)));
}
