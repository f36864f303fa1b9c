#include "dnw/harness.hpp"

#include "dnw/baselines.hpp"
#include "dnw/checkpoint.hpp"
#include "dnw/dynamic.hpp"
#include "dnw/error.hpp"
#include "dnw/sparse.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <sstream>

namespace dnw {

using ojson = nlohmann::ordered_json;

Dataset make_dataset(const ExperimentConfig& config) {
    const auto& d = config.dataset;
    const std::uint64_t seed = d.seed.value_or(config.seed);
    if (d.kind == "csv") return load_csv(d.path, d.test_fraction, seed, d.classes);
    return gen_spirals(d.n_per_class, d.classes, d.noise, seed, d.test_fraction);
}

namespace {

std::string sparse_checkpoint(const SparseNet& net) {
    ojson layers = ojson::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"in", layer.in},
                          {"out", layer.out},
                          {"keep_fraction", layer.keep_fraction},
                          {"weight", layer.weight.value},
                          {"bias", layer.bias.value},
                          {"mask", layer.mask}});
    }
    ojson j;
    j["layers"] = layers;
    return j.dump(1);
}

bool is_dynamic(Method m) { return m == Method::DynamicDiscrete || m == Method::DynamicContinuous; }

std::vector<EpochMetrics> train_graph(Model& model, const Dataset& data, const ExperimentConfig& config,
                                      Method engine, const EdgeRule& rule, const TrainHooks& hooks) {
    if (is_dynamic(engine)) return train_dynamic(model, data, config.train, config.dynamic, rule, hooks);
    return train(model, data, config.train, rule, hooks);
}

std::vector<EpochMetrics> run_baseline(Model& model, const Dataset& data, const ExperimentConfig& config,
                                       const TrainHooks& hooks) {
    const auto& b = config.baseline;
    switch (b.kind) {
        case BaselineKind::RandomGraph:
            return train_graph(model, data, config, b.engine, random_graph_rule(model), hooks);
        case BaselineKind::NoUpdateRule:
            return train_graph(model, data, config, b.engine, no_update_rule(), hooks);
        case BaselineKind::L1Anneal: {
            L1Anneal schedule;
            schedule.l1 = b.l1;
            schedule.prune_epochs = b.prune_epochs == 0 ? config.train.epochs : b.prune_epochs;
            return train(model, data, config.train, l1_anneal_rule(model, schedule, config.train.epochs), hooks);
        }
        case BaselineKind::OneShotPruneReinit:
        case BaselineKind::OneShotPruneFinetune: break;
    }

    // Train the complete graph first, then prune to k and retrain.
    GraphSpec full_spec = config.graph;
    full_spec.k = candidate_count(full_spec.blocks, full_spec.connectivity);
    Model full = build_model(full_spec, data.num_features(), data.classes);
    const Model initial = full;
    std::vector<EpochMetrics> records;
    TrainHooks first = hooks;
    auto history = train(full, data, config.train, {}, first);
    records = history;

    TrainConfig finetune = config.train;
    finetune.lr = b.finetune_lr;
    if (b.finetune_epochs != 0) finetune.epochs = b.finetune_epochs;
    const std::size_t offset = config.train.epochs;
    TrainHooks second;
    if (hooks.on_epoch) {
        second.on_epoch = [&](const EpochMetrics& m) {
            if (m.epoch == 0) return;
            EpochMetrics shifted = m;
            shifted.epoch += offset;
            hooks.on_epoch(shifted);
        };
    }
    second.on_step = hooks.on_step;
    const PruneMode mode = b.kind == BaselineKind::OneShotPruneReinit ? PruneMode::Reinit : PruneMode::Finetune;
    auto retrained = one_shot_prune(full, &initial, config.graph.k, mode, data, finetune, second);
    for (auto m : retrained) {
        if (m.epoch == 0) continue;
        m.epoch += offset;
        records.push_back(m);
    }
    model = std::move(full);
    return records;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const Dataset& data,
                         const std::function<void(const EpochMetrics&)>& on_epoch) {
    RunResult result;
    result.method = method_name(config);
    result.seed = config.seed;
    const auto start = std::chrono::steady_clock::now();
    auto record = [&](const EpochMetrics& m) {
        result.wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
        if (on_epoch) on_epoch(m);
    };

    if (config.method == Method::Sparse) {
        SparseConfig sc = config.sparse;
        require(!sc.layers.empty(), ErrorKind::Config, "sparse.layers: missing");
        require(static_cast<std::size_t>(sc.layers.front()) == data.num_features(), ErrorKind::Config,
                "sparse.layers: first width must equal the feature count " + std::to_string(data.num_features()));
        require(static_cast<std::size_t>(sc.layers.back()) == data.classes, ErrorKind::Config,
                "sparse.layers: last width must equal the class count " + std::to_string(data.classes));
        SparseNet net = build_sparse_net(sc);
        SparseHooks hooks;
        hooks.on_epoch = record;
        result.metrics = train_sparse(net, data, config.train, hooks);
        result.checkpoint = sparse_checkpoint(net);
        return result;
    }

    Model model = build_model(config.graph, data.num_features(), data.classes);
    TrainHooks hooks;
    hooks.on_epoch = record;
    switch (config.method) {
        case Method::Dnw: result.metrics = train(model, data, config.train, {}, hooks); break;
        case Method::DnwSt: result.metrics = st_train(model, data, config.train, hooks); break;
        case Method::DynamicDiscrete:
        case Method::DynamicContinuous:
            result.metrics = train_dynamic(model, data, config.train, config.dynamic, {}, hooks);
            break;
        case Method::Baseline: result.metrics = run_baseline(model, data, config, hooks); break;
        case Method::Sparse: break;
    }
    result.checkpoint = checkpoint_to_json(model);
    return result;
}

std::string metrics_jsonl(const RunResult& run, bool with_wall_ms) {
    std::string out;
    for (std::size_t i = 0; i < run.metrics.size(); ++i) {
        const auto& m = run.metrics[i];
        ojson j;
        j["epoch"] = m.epoch;
        j["train_loss"] = m.train_loss;
        j["train_acc"] = m.train_acc;
        j["test_acc"] = m.test_acc;
        j["active_edges"] = m.active_edges;
        j["live_nodes"] = m.live_nodes;
        j["k"] = m.k;
        j["method"] = run.method;
        j["seed"] = run.seed;
        if (with_wall_ms && i < run.wall_ms.size()) j["wall_ms"] = std::round(run.wall_ms[i] * 1000.0) / 1000.0;
        out += j.dump();
        out += '\n';
    }
    return out;
}

RunResult cmd_run(const ExperimentConfig& config) {
    const Dataset data = make_dataset(config);
    RunResult run = run_experiment(config, data);
    write_text_atomic(config.output.dir + "/metrics.jsonl", metrics_jsonl(run, config.output.wall_ms));
    write_text_atomic(config.output.dir + "/checkpoint.json", run.checkpoint);
    return run;
}

ExperimentConfig reference_config(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    if (c.method == Method::Baseline) c.method = c.baseline.engine;
    if (c.method == Method::Sparse) c.sparse.policy = MaskPolicy::Magnitude;
    return c;
}

ExperimentConfig baseline_config(const ExperimentConfig& config, const std::string& baseline) {
    ExperimentConfig c = reference_config(config);
    if (c.method == Method::Sparse) {
        if (baseline == "frozen_random") c.sparse.policy = MaskPolicy::FrozenRandom;
        else if (baseline == "magnitude") c.sparse.policy = MaskPolicy::Magnitude;
        else fail(ErrorKind::Config, "baseline: sparse runs compare against 'frozen_random' or 'magnitude'");
        return c;
    }
    BaselineKind kind;
    try {
        kind = parse_baseline(baseline);
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("baseline: ") + e.what());
    }
    c.baseline.kind = kind;
    c.baseline.engine = is_dynamic(c.method) ? c.method : Method::Dnw;
    if (is_dynamic(c.method))
        require(kind == BaselineKind::RandomGraph || kind == BaselineKind::NoUpdateRule, ErrorKind::Config,
                "baseline: only random_graph and no_update_rule run under dynamic training");
    c.method = Method::Baseline;
    return c;
}

namespace {

void finish_stats(MethodStats& s) {
    const double n = static_cast<double>(s.accuracy.size());
    if (s.accuracy.empty()) return;
    double sum = 0.0;
    for (double a : s.accuracy) sum += a;
    s.mean = sum / n;
    double sq = 0.0;
    for (double a : s.accuracy) sq += (a - s.mean) * (a - s.mean);
    s.sd = s.accuracy.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
}

std::string run_label(const ExperimentConfig& c) {
    if (c.method == Method::Sparse) return c.sparse.policy == MaskPolicy::Magnitude ? "sparse" : "sparse_frozen_random";
    if (c.method == Method::Baseline) return std::string(baseline_name(c.baseline.kind));
    return method_name(c);
}

ojson stats_json(const MethodStats& s) {
    ojson j;
    j["method"] = s.method;
    j["accuracy"] = s.accuracy;
    j["mean"] = s.mean;
    j["sd"] = s.sd;
    return j;
}

}  // namespace

std::string CompareSummary::to_json() const {
    ojson j;
    j["seeds"] = seeds;
    j["reference"] = stats_json(reference);
    j["baseline"] = stats_json(baseline);
    j["differences"] = differences;
    j["mean_difference"] = mean_difference;
    j["positive"] = positive;
    return j.dump(2);
}

CompareSummary cmd_compare(const ExperimentConfig& config, const std::string& baseline, std::size_t seeds,
                           bool write) {
    require(seeds >= 1, ErrorKind::Config, "seeds: must be at least 1");
    const ExperimentConfig ref = reference_config(config);
    const ExperimentConfig base = baseline_config(config, baseline);
    CompareSummary summary;
    summary.reference.method = run_label(ref);
    summary.baseline.method = run_label(base);
    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = config.seed + i;
        summary.seeds.push_back(seed);
        const ExperimentConfig r = with_seed(ref, seed);
        const ExperimentConfig b = with_seed(base, seed);
        const Dataset data = make_dataset(r);
        const RunResult rr = run_experiment(r, data);
        const RunResult br = run_experiment(b, data);
        const double ra = rr.metrics.back().test_acc;
        const double ba = br.metrics.back().test_acc;
        summary.reference.accuracy.push_back(ra);
        summary.baseline.accuracy.push_back(ba);
        summary.differences.push_back(ra - ba);
        if (ra - ba > 0.0) ++summary.positive;
        if (write) {
            const std::string seed_dir = "/seed_" + std::to_string(seed);
            write_text_atomic(config.output.dir + "/" + summary.reference.method + seed_dir + "/metrics.jsonl",
                              metrics_jsonl(rr, config.output.wall_ms));
            write_text_atomic(config.output.dir + "/" + summary.baseline.method + seed_dir + "/metrics.jsonl",
                              metrics_jsonl(br, config.output.wall_ms));
        }
    }
    finish_stats(summary.reference);
    finish_stats(summary.baseline);
    double sum = 0.0;
    for (double d : summary.differences) sum += d;
    summary.mean_difference = sum / static_cast<double>(summary.differences.size());
    if (write) write_text_atomic(config.output.dir + "/summary.json", summary.to_json() + "\n");
    return summary;
}

VerifyReport cmd_verify(const VerifyOptions& options) { return run_verification(options); }

BudgetTable parse_budget_table(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, std::string("budget table: ") + e.what());
    }
    BudgetTable table;
    try {
        require(j.is_object(), ErrorKind::Config, "budget table: expected an object");
        table.width_mult = j.value("width_mult", 1.0);
        require(table.width_mult > 0.0, ErrorKind::Config, "width_mult: must be positive");
        const auto stages = j.value("stages", nlohmann::json::array());
        require(stages.is_array(), ErrorKind::Config, "stages: expected an array");
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const auto& st = stages[s];
            const std::string path = "stages[" + std::to_string(s) + "]";
            BudgetStage stage;
            stage.name = st.value("name", "stage" + std::to_string(s));
            const auto layers = st.value("layers", nlohmann::json::array());
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const auto& ly = layers[l];
                const std::string lp = path + ".layers[" + std::to_string(l) + "]";
                require(ly.contains("c_in") && ly.contains("c_out"), ErrorKind::Config, lp + ": needs c_in and c_out");
                BudgetLayer layer;
                layer.c_in = ly.at("c_in").get<long long>();
                layer.c_out = ly.at("c_out").get<long long>();
                layer.repeat = ly.value("repeat", 1LL);
                layer.scale_in = ly.value("scale_in", true);
                layer.scale_out = ly.value("scale_out", true);
                require(layer.c_in > 0 && layer.c_out > 0, ErrorKind::Config, lp + ": channel counts must be positive");
                require(layer.repeat >= 0, ErrorKind::Config, lp + ".repeat: must be non-negative");
                stage.layers.push_back(layer);
            }
            table.stages.push_back(std::move(stage));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("budget table: ") + e.what());
    }
    return table;
}

BudgetReport compute_budget(const BudgetTable& table) {
    BudgetReport report;
    for (const auto& stage : table.stages) {
        long long edges = 0;
        for (const auto& l : stage.layers)
            edges += l.repeat * edge_budget(l.c_in, l.c_out, l.scale_in ? table.width_mult : 1.0,
                                            l.scale_out ? table.width_mult : 1.0);
        report.stages.emplace_back(stage.name, edges);
        report.total += edges;
    }
    return report;
}

std::string BudgetReport::to_json() const {
    ojson j;
    ojson s = ojson::array();
    for (const auto& [name, edges] : stages) s.push_back({{"name", name}, {"edges", edges}});
    j["stages"] = s;
    j["total"] = total;
    return j.dump(2);
}

std::string BudgetReport::to_text() const {
    std::ostringstream out;
    for (const auto& [name, edges] : stages) out << name << '\t' << edges << '\n';
    out << "total\t" << total << '\n';
    return out.str();
}

}  // namespace dnw
