#include "dnw/config.hpp"
#include "dnw/error.hpp"

#include <doctest.h>

#include <array>
#include <string>

using namespace dnw;

namespace {

ExperimentConfig random_config(Rng& rng) {
    ExperimentConfig c;
    const int pick = static_cast<int>(rng.below(7));
    c.seed = rng.below(1000);
    if (pick == 6) {
        c.method = Method::Sparse;
        c.sparse.layers = {2, 1 + static_cast<int>(rng.below(50)), 2};
        c.sparse.keep_fraction = 0.05 + 0.9 * rng.next_unit();
        c.sparse.dense_first_layer = rng.below(2);
        c.sparse.policy = rng.below(2) ? MaskPolicy::Magnitude : MaskPolicy::FrozenRandom;
        c.sparse.activation = rng.below(2) ? Activation::Relu : Activation::Tanh;
    } else {
        c.method = std::array{Method::Dnw, Method::DnwSt, Method::DynamicDiscrete, Method::DynamicContinuous,
                              Method::Baseline, Method::Baseline}[static_cast<std::size_t>(pick)];
        c.graph.blocks = {1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)), 2};
        c.graph.k = 1 + rng.below(5);
        c.graph.activation = rng.below(2) ? Activation::Relu : Activation::Tanh;
        c.graph.connectivity = std::array{Connectivity::Dag, Connectivity::Layered,
                                          Connectivity::Full}[static_cast<std::size_t>(rng.below(3))];
        c.graph.normalize = rng.below(2);
        c.graph.bias = rng.below(2);
    }
    if (c.method == Method::Baseline) {
        c.baseline.kind = static_cast<BaselineKind>(rng.below(5));
        c.baseline.l1 = rng.next_unit() * 1e-3;
        c.baseline.prune_epochs = rng.below(5);
        c.baseline.finetune_lr = 0.001 + rng.next_unit();
        c.baseline.finetune_epochs = rng.below(5);
    }
    c.train.lr = 1e-3 + rng.next_unit();
    c.train.epochs = rng.below(200);
    c.train.batch_size = 1 + rng.below(64);
    c.train.cosine = rng.below(2);
    c.train.io_weight_decay = rng.below(2);
    c.train.max_steps = rng.below(3) * 100;
    if (rng.below(4) == 0) {
        c.plain = true;
        c.train.make_plain();
    } else {
        c.train.momentum = 0.99 * rng.next_unit();
        c.train.weight_decay = 1e-3 * rng.next_unit();
    }
    if (rng.below(3) == 0) {
        c.dataset.kind = "csv";
        c.dataset.path = "data/x" + std::to_string(rng.below(100)) + ".csv";
        c.dataset.classes = rng.below(4);
    } else {
        c.dataset.n_per_class = 1 + rng.below(500);
        c.dataset.classes = 2 + rng.below(3);
        c.dataset.noise = rng.next_unit();
    }
    if (rng.below(2)) c.dataset.seed = rng.below(1u << 20);
    c.dataset.test_fraction = 0.1 + 0.5 * rng.next_unit();
    c.dynamic.mode = c.method == Method::DynamicContinuous ? DynamicMode::Continuous : DynamicMode::Discrete;
    c.dynamic.steps = rng.below(6);
    c.dynamic.t1 = 0.1 + rng.next_unit();
    c.dynamic.h = 0.01 + rng.next_unit();
    c.output.dir = "runs/r" + std::to_string(rng.below(1000));
    c.output.wall_ms = rng.below(2);
    return with_seed(c, c.seed);
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

const char* kMinimal = R"({"method": "dnw", "seed": 3, "graph": {"blocks": [2, 3, 2], "k": 4}})";

}  // namespace

TEST_CASE("serialize then parse is the identity") {
    Rng rng(91);
    for (int t = 0; t < 300; ++t) {
        const auto c = random_config(rng);
        const auto text = serialize_config(c);
        const auto back = parse_config(text);
        CHECK(back == c);
        CHECK(serialize_config(back) == text);
    }
}

TEST_CASE("defaults and seed propagation") {
    const auto c = parse_config(kMinimal);
    CHECK(c.method == Method::Dnw);
    CHECK(c.graph.seed == 3);
    CHECK(c.train.seed == 3);
    CHECK(!c.dataset.seed.has_value());
    CHECK(c.graph.connectivity == Connectivity::Dag);
    CHECK(c.train.momentum == 0.9);
    CHECK(method_name(c) == "dnw");
    const auto moved = with_seed(c, 8);
    CHECK(moved.seed == 8);
    CHECK(moved.graph.seed == 8);
    CHECK(moved.train.seed == 8);
}

TEST_CASE("config errors name the key path") {
    CHECK(config_error(R"({"method": "dnw", "graph": {"blocks": [2, 2], "k": 2}})").rfind("seed:", 0) == 0);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}, "train": {"lr": -1}})")
              .rfind("train.lr:", 0) == 0);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 2], "k": 2, "kk": 1}})")
              .find("graph.kk: unknown key") != std::string::npos);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 0], "k": 2}})").rfind("graph.blocks:", 0) ==
          0);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 2], "k": "x"}})").rfind("graph.k:", 0) ==
          0);
    CHECK(config_error(R"({"method": "nope", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}})").rfind("method:", 0) == 0);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}, "train": {"plain": true, "momentum": 0.5}})")
              .rfind("train.plain:", 0) == 0);
    CHECK(config_error(R"({"method": "sparse", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}})").rfind("sparse:", 0) ==
          0);
    CHECK(config_error(R"({"method": "baseline:l1_anneal", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}, "baseline": {"engine": "dynamic_discrete"}})")
              .rfind("baseline.engine:", 0) == 0);
    CHECK(config_error(R"({"method": "dnw", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}, "dataset": {"kind": "csv"}})")
              .rfind("dataset.path:", 0) == 0);
    CHECK_THROWS_AS(parse_config("{not json"), Error);
    CHECK_THROWS_AS(load_config("missing/file.json"), Error);
}

TEST_CASE("plain flag zeroes momentum and decay") {
    const auto c = parse_config(
        R"({"method": "dnw_st", "seed": 1, "graph": {"blocks": [2, 2], "k": 2}, "train": {"plain": true}})");
    CHECK(c.plain);
    CHECK(c.train.momentum == 0.0);
    CHECK(c.train.weight_decay == 0.0);
}
