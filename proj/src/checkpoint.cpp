#include "dnw/checkpoint.hpp"

#include "dnw/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dnw {

using nlohmann::json;

namespace {

json block_json(const ParamBlock& p) {
    return json{{"value", p.value}, {"velocity", p.velocity}};
}

ParamBlock block_from(const json& j, std::size_t expected, const char* name) {
    ParamBlock p;
    p.value = j.at("value").get<std::vector<double>>();
    p.velocity = j.at("velocity").get<std::vector<double>>();
    require(p.value.size() == expected && p.velocity.size() == expected, ErrorKind::Parse,
            std::string("checkpoint: ") + name + " has the wrong length");
    return p;
}

}  // namespace

std::string checkpoint_to_json(const Model& m) {
    const auto& s = m.graph.spec;
    json j;
    j["graph"] = {{"blocks", s.blocks},
                  {"k", s.k},
                  {"activation", std::string(activation_name(s.activation))},
                  {"seed", s.seed},
                  {"normalize", s.normalize},
                  {"bias", s.bias},
                  {"connectivity", std::string(connectivity_name(s.connectivity))}};
    j["edges"] = block_json(m.graph.store.weights);
    j["nodes"] = {{"gamma", block_json(m.graph.nodes.gamma)},
                  {"beta", block_json(m.graph.nodes.beta)},
                  {"running_mean", m.graph.nodes.running_mean},
                  {"running_var", m.graph.nodes.running_var}};
    j["io"] = {{"features", m.io.features},
               {"classes", m.io.classes},
               {"in_weight", block_json(m.io.in_weight)},
               {"in_bias", block_json(m.io.in_bias)},
               {"out_weight", block_json(m.io.out_weight)},
               {"out_bias", block_json(m.io.out_bias)}};
    j["iteration"] = m.iteration;
    return j.dump(1);
}

Model checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("checkpoint: ") + e.what());
    }
    try {
        const auto& g = j.at("graph");
        GraphSpec spec;
        spec.blocks = g.at("blocks").get<std::vector<int>>();
        spec.k = g.at("k").get<std::size_t>();
        spec.activation = parse_activation(g.at("activation").get<std::string>());
        spec.seed = g.at("seed").get<std::uint64_t>();
        spec.normalize = g.at("normalize").get<bool>();
        spec.bias = g.at("bias").get<bool>();
        spec.connectivity = parse_connectivity(g.at("connectivity").get<std::string>());
        const auto& io = j.at("io");
        Model m = build_model(spec, io.at("features").get<std::size_t>(), io.at("classes").get<std::size_t>());

        const std::size_t n = m.graph.topology.num_nodes();
        m.graph.store.weights = block_from(j.at("edges"), m.graph.store.size(), "edges");
        const auto& nodes = j.at("nodes");
        m.graph.nodes.gamma = block_from(nodes.at("gamma"), n, "gamma");
        m.graph.nodes.beta = block_from(nodes.at("beta"), n, "beta");
        m.graph.nodes.running_mean = nodes.at("running_mean").get<std::vector<double>>();
        m.graph.nodes.running_var = nodes.at("running_var").get<std::vector<double>>();
        require(m.graph.nodes.running_mean.size() == n && m.graph.nodes.running_var.size() == n, ErrorKind::Parse,
                "checkpoint: running statistics have the wrong length");
        m.io.in_weight = block_from(io.at("in_weight"), m.io.in_weight.size(), "in_weight");
        m.io.in_bias = block_from(io.at("in_bias"), m.io.in_bias.size(), "in_bias");
        m.io.out_weight = block_from(io.at("out_weight"), m.io.out_weight.size(), "out_weight");
        m.io.out_bias = block_from(io.at("out_bias"), m.io.out_bias.size(), "out_bias");
        m.iteration = j.at("iteration").get<std::uint64_t>();
        return m;
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::string& path) {
    write_text_atomic(path, checkpoint_to_json(model));
}

Model load_checkpoint(const std::string& path) { return checkpoint_from_json(read_text(path)); }

void write_text_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + tmp + " for writing");
        out << content;
        out.flush();
        require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::remove(tmp.c_str());
        fail(ErrorKind::Io, "cannot rename " + tmp + " to " + path + ": " + ec.message());
    }
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace dnw
