#include "dnw/config.hpp"

#include "dnw/checkpoint.hpp"
#include "dnw/error.hpp"

#include <json.hpp>

#include <set>

namespace dnw {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Typed access to one JSON object that remembers its key path and rejects
// keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::Config, where() + ": expected an object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    T get(const char* key, const T& fallback) {
        if (!has(key)) return fallback;
        return read<T>(key);
    }

    template <typename T>
    T require_key(const char* key) {
        if (!has(key)) fail(ErrorKind::Config, at(key) + ": missing required key");
        return read<T>(key);
    }

    Section child(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, at(key));
    }

    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) fail(ErrorKind::Config, at(item.key().c_str()) + ": unknown key");
    }

    std::string at(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? std::string("config") : path_; }

    template <typename T>
    T read(const char* key) {
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::invalid_argument("expected a string");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
            }
            return v.get<T>();
        } catch (const std::exception& e) {
            fail(ErrorKind::Config, at(key) + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Method parse_method_name(const std::string& name, BaselineKind* kind, const std::string& path) {
    if (name == "dnw") return Method::Dnw;
    if (name == "dnw_st") return Method::DnwSt;
    if (name == "dynamic_discrete") return Method::DynamicDiscrete;
    if (name == "dynamic_continuous") return Method::DynamicContinuous;
    if (name == "sparse") return Method::Sparse;
    constexpr std::string_view prefix = "baseline:";
    if (kind && name.starts_with(prefix)) {
        try {
            *kind = parse_baseline(std::string_view(name).substr(prefix.size()));
        } catch (const Error& e) {
            fail(ErrorKind::Config, path + ": " + e.what());
        }
        return Method::Baseline;
    }
    fail(ErrorKind::Config, path + ": unknown method '" + name + "'");
}

std::string engine_name(Method m) {
    switch (m) {
        case Method::DynamicDiscrete: return "dynamic_discrete";
        case Method::DynamicContinuous: return "dynamic_continuous";
        default: return "dnw";
    }
}

std::vector<int> positive_ints(Section& s, const char* key) {
    const auto v = s.require_key<std::vector<int>>(key);
    if (v.empty()) fail(ErrorKind::Config, s.at(key) + ": must not be empty");
    for (int x : v)
        if (x <= 0) fail(ErrorKind::Config, s.at(key) + ": entries must be positive");
    return v;
}

void parse_graph(Section s, ExperimentConfig& c) {
    c.graph.blocks = positive_ints(s, "blocks");
    if (c.graph.blocks.size() < 2) fail(ErrorKind::Config, s.at("blocks") + ": need at least two blocks");
    c.graph.k = s.require_key<std::size_t>("k");
    try {
        c.graph.activation = parse_activation(s.get<std::string>("activation", "relu"));
        c.graph.connectivity = parse_connectivity(s.get<std::string>("connectivity", "dag"));
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("graph: ") + e.what());
    }
    c.graph.normalize = s.get<bool>("normalize", true);
    c.graph.bias = s.get<bool>("bias", true);
    s.finish();
}

void parse_train(Section s, ExperimentConfig& c) {
    auto& t = c.train;
    t.lr = s.get<double>("lr", t.lr);
    t.momentum = s.get<double>("momentum", t.momentum);
    t.weight_decay = s.get<double>("weight_decay", t.weight_decay);
    t.epochs = s.get<std::size_t>("epochs", t.epochs);
    t.batch_size = s.get<std::size_t>("batch_size", t.batch_size);
    t.cosine = s.get<bool>("cosine", t.cosine);
    t.io_weight_decay = s.get<bool>("io_weight_decay", t.io_weight_decay);
    t.max_steps = s.get<std::size_t>("max_steps", t.max_steps);
    c.plain = s.get<bool>("plain", false);
    s.finish();
    if (!(t.lr > 0.0)) fail(ErrorKind::Config, s.at("lr") + ": must be positive");
    if (!(t.momentum >= 0.0 && t.momentum < 1.0)) fail(ErrorKind::Config, s.at("momentum") + ": must lie in [0, 1)");
    if (!(t.weight_decay >= 0.0)) fail(ErrorKind::Config, s.at("weight_decay") + ": must be non-negative");
    if (t.batch_size == 0) fail(ErrorKind::Config, s.at("batch_size") + ": must be at least 1");
    if (c.plain && (t.momentum != 0.0 || t.weight_decay != 0.0)) {
        const bool explicit_terms = s.has("momentum") || s.has("weight_decay");
        if (explicit_terms) fail(ErrorKind::Config, s.at("plain") + ": conflicts with a nonzero momentum or weight_decay");
        t.make_plain();
    }
}

void parse_dataset(Section s, ExperimentConfig& c) {
    auto& d = c.dataset;
    d.kind = s.get<std::string>("kind", d.kind);
    d.test_fraction = s.get<double>("test_fraction", d.test_fraction);
    if (s.has("seed")) d.seed = s.get<std::uint64_t>("seed", 0);
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0))
        fail(ErrorKind::Config, s.at("test_fraction") + ": must lie in (0, 1)");
    if (d.kind == "spirals") {
        d.n_per_class = s.get<std::size_t>("n_per_class", d.n_per_class);
        d.classes = s.get<std::size_t>("classes", d.classes);
        d.noise = s.get<double>("noise", d.noise);
        if (d.n_per_class == 0) fail(ErrorKind::Config, s.at("n_per_class") + ": must be at least 1");
        if (d.classes < 2) fail(ErrorKind::Config, s.at("classes") + ": must be at least 2");
        if (!(d.noise >= 0.0)) fail(ErrorKind::Config, s.at("noise") + ": must be non-negative");
    } else if (d.kind == "csv") {
        d.path = s.require_key<std::string>("path");
        d.classes = s.get<std::size_t>("classes", 0);
    } else {
        fail(ErrorKind::Config, s.at("kind") + ": expected 'spirals' or 'csv'");
    }
    s.finish();
}

void parse_dynamic(Section s, ExperimentConfig& c) {
    auto& d = c.dynamic;
    const Method engine = c.method == Method::Baseline ? c.baseline.engine : c.method;
    d.mode = engine == Method::DynamicContinuous ? DynamicMode::Continuous : DynamicMode::Discrete;
    if (s.has("mode")) {
        const auto mode = s.get<std::string>("mode", "");
        if (mode == "discrete") d.mode = DynamicMode::Discrete;
        else if (mode == "continuous") d.mode = DynamicMode::Continuous;
        else fail(ErrorKind::Config, s.at("mode") + ": expected 'discrete' or 'continuous'");
    }
    d.steps = s.get<std::size_t>("steps", d.steps);
    d.t1 = s.get<double>("t1", d.t1);
    d.h = s.get<double>("h", d.h);
    s.finish();
    if (!(d.h > 0.0)) fail(ErrorKind::Config, s.at("h") + ": must be positive");
    if (!(d.t1 > 0.0)) fail(ErrorKind::Config, s.at("t1") + ": must be positive");
}

void parse_sparse(Section s, ExperimentConfig& c) {
    auto& p = c.sparse;
    p.layers = positive_ints(s, "layers");
    if (p.layers.size() < 2) fail(ErrorKind::Config, s.at("layers") + ": need input and output widths");
    p.keep_fraction = s.get<double>("keep_fraction", p.keep_fraction);
    p.dense_first_layer = s.get<bool>("dense_first_layer", p.dense_first_layer);
    const auto policy = s.get<std::string>("policy", "magnitude");
    if (policy == "magnitude") p.policy = MaskPolicy::Magnitude;
    else if (policy == "frozen_random") p.policy = MaskPolicy::FrozenRandom;
    else fail(ErrorKind::Config, s.at("policy") + ": expected 'magnitude' or 'frozen_random'");
    try {
        p.activation = parse_activation(s.get<std::string>("activation", "relu"));
    } catch (const Error& e) {
        fail(ErrorKind::Config, s.at("activation") + ": " + e.what());
    }
    s.finish();
    if (!(p.keep_fraction > 0.0 && p.keep_fraction <= 1.0))
        fail(ErrorKind::Config, s.at("keep_fraction") + ": must lie in (0, 1]");
}

void parse_baseline_section(Section s, ExperimentConfig& c) {
    auto& b = c.baseline;
    if (s.has("engine")) {
        const auto name = s.get<std::string>("engine", "");
        const Method m = parse_method_name(name, nullptr, s.at("engine"));
        if (m != Method::Dnw && m != Method::DynamicDiscrete && m != Method::DynamicContinuous)
            fail(ErrorKind::Config, s.at("engine") + ": expected dnw, dynamic_discrete or dynamic_continuous");
        b.engine = m;
    }
    b.l1 = s.get<double>("l1", b.l1);
    b.prune_epochs = s.get<std::size_t>("prune_epochs", b.prune_epochs);
    b.finetune_lr = s.get<double>("finetune_lr", b.finetune_lr);
    b.finetune_epochs = s.get<std::size_t>("finetune_epochs", b.finetune_epochs);
    s.finish();
    if (!(b.l1 >= 0.0)) fail(ErrorKind::Config, s.at("l1") + ": must be non-negative");
    if (!(b.finetune_lr > 0.0)) fail(ErrorKind::Config, s.at("finetune_lr") + ": must be positive");
}

}  // namespace

std::string method_name(const ExperimentConfig& c) {
    switch (c.method) {
        case Method::Dnw: return "dnw";
        case Method::DnwSt: return "dnw_st";
        case Method::DynamicDiscrete: return "dynamic_discrete";
        case Method::DynamicContinuous: return "dynamic_continuous";
        case Method::Sparse: return "sparse";
        case Method::Baseline: return "baseline:" + std::string(baseline_name(c.baseline.kind));
    }
    return "?";
}

ExperimentConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, std::string("config: ") + e.what());
    }
    Section top(root, "");
    ExperimentConfig c;
    c.method = parse_method_name(top.require_key<std::string>("method"), &c.baseline.kind, "method");
    c.seed = top.require_key<std::uint64_t>("seed");

    if (c.method == Method::Sparse) {
        if (!top.has("sparse")) fail(ErrorKind::Config, "sparse: missing required section for method 'sparse'");
        parse_sparse(top.child("sparse"), c);
        if (top.has("graph")) fail(ErrorKind::Config, "graph: not used by method 'sparse'");
    } else {
        if (!top.has("graph")) fail(ErrorKind::Config, "graph: missing required section");
        parse_graph(top.child("graph"), c);
        if (top.has("sparse")) fail(ErrorKind::Config, "sparse: only used by method 'sparse'");
    }
    parse_train(top.child("train"), c);
    parse_dataset(top.child("dataset"), c);
    parse_baseline_section(top.child("baseline"), c);
    if (c.method == Method::Baseline && c.baseline.engine != Method::Dnw &&
        c.baseline.kind != BaselineKind::RandomGraph && c.baseline.kind != BaselineKind::NoUpdateRule)
        fail(ErrorKind::Config, "baseline.engine: only random_graph and no_update_rule run under dynamic training");
    parse_dynamic(top.child("dynamic"), c);
    {
        Section out = top.child("output");
        c.output.dir = out.get<std::string>("dir", c.output.dir);
        c.output.wall_ms = out.get<bool>("wall_ms", c.output.wall_ms);
        out.finish();
    }
    top.finish();
    return with_seed(c, c.seed);
}

ExperimentConfig load_config(const std::string& path) {
    try {
        return parse_config(read_text(path));
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

std::string serialize_config(const ExperimentConfig& c) {
    ojson j;
    j["method"] = method_name(c);
    j["seed"] = c.seed;
    if (c.method == Method::Sparse) {
        j["sparse"] = {{"layers", c.sparse.layers},
                       {"keep_fraction", c.sparse.keep_fraction},
                       {"dense_first_layer", c.sparse.dense_first_layer},
                       {"policy", c.sparse.policy == MaskPolicy::Magnitude ? "magnitude" : "frozen_random"},
                       {"activation", std::string(activation_name(c.sparse.activation))}};
    } else {
        j["graph"] = {{"blocks", c.graph.blocks},
                      {"k", c.graph.k},
                      {"activation", std::string(activation_name(c.graph.activation))},
                      {"connectivity", std::string(connectivity_name(c.graph.connectivity))},
                      {"normalize", c.graph.normalize},
                      {"bias", c.graph.bias}};
    }
    j["train"] = {{"lr", c.train.lr},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"cosine", c.train.cosine},
                  {"io_weight_decay", c.train.io_weight_decay},
                  {"max_steps", c.train.max_steps},
                  {"plain", c.plain}};
    ojson d;
    d["kind"] = c.dataset.kind;
    if (c.dataset.kind == "spirals") {
        d["n_per_class"] = c.dataset.n_per_class;
        d["classes"] = c.dataset.classes;
        d["noise"] = c.dataset.noise;
    } else {
        d["path"] = c.dataset.path;
        d["classes"] = c.dataset.classes;
    }
    if (c.dataset.seed) d["seed"] = *c.dataset.seed;
    d["test_fraction"] = c.dataset.test_fraction;
    j["dataset"] = d;
    j["dynamic"] = {{"mode", c.dynamic.mode == DynamicMode::Discrete ? "discrete" : "continuous"},
                    {"steps", c.dynamic.steps},
                    {"t1", c.dynamic.t1},
                    {"h", c.dynamic.h}};
    j["baseline"] = {{"engine", engine_name(c.baseline.engine)},
                     {"l1", c.baseline.l1},
                     {"prune_epochs", c.baseline.prune_epochs},
                     {"finetune_lr", c.baseline.finetune_lr},
                     {"finetune_epochs", c.baseline.finetune_epochs}};
    j["output"] = {{"dir", c.output.dir}, {"wall_ms", c.output.wall_ms}};
    return j.dump(2);
}

ExperimentConfig with_seed(const ExperimentConfig& config, std::uint64_t seed) {
    ExperimentConfig c = config;
    c.seed = seed;
    c.graph.seed = seed;
    c.train.seed = seed;
    c.sparse.seed = seed;
    return c;
}

}  // namespace dnw
