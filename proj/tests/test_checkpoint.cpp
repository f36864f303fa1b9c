#include "dnw/checkpoint.hpp"
#include "dnw/dataset.hpp"
#include "dnw/error.hpp"

#include <doctest.h>

#include <filesystem>

using namespace dnw;

TEST_CASE("checkpoint round trip is exact") {
    GraphSpec s;
    s.blocks = {3, 4, 2};
    s.k = 9;
    s.seed = 21;
    s.activation = Activation::Tanh;
    s.connectivity = Connectivity::Layered;
    Model m = build_model(s, 2, 3);
    const auto data = gen_spirals(40, 3, 0.1, 2);
    TrainConfig cfg;
    cfg.epochs = 2;
    train(m, data, cfg);

    const Model back = checkpoint_from_json(checkpoint_to_json(m));
    CHECK(back.graph.spec == m.graph.spec);
    CHECK(back.graph.store == m.graph.store);
    CHECK(back.graph.nodes == m.graph.nodes);
    CHECK(back.io == m.io);
    CHECK(back.iteration == m.iteration);
    CHECK(select_edges(back.graph.store) == select_edges(m.graph.store));

    save_checkpoint(m, "ckpt/model.json");
    CHECK(std::filesystem::exists("ckpt/model.json"));
    CHECK_FALSE(std::filesystem::exists("ckpt/model.json.tmp"));
    CHECK(load_checkpoint("ckpt/model.json").graph.store == m.graph.store);
}

TEST_CASE("malformed checkpoints are parse errors") {
    try {
        checkpoint_from_json("{\"graph\": 3}");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
    }
    CHECK_THROWS_AS(checkpoint_from_json("not json"), Error);
    CHECK_THROWS_AS(load_checkpoint("no/such/file.json"), Error);
}

TEST_CASE("atomic writes replace the previous content") {
    write_text_atomic("atomic/out.txt", "first");
    write_text_atomic("atomic/out.txt", "second");
    CHECK(read_text("atomic/out.txt") == "second");
}
