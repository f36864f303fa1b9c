#include "dnw/dnw.h"

#include "dnw/checkpoint.hpp"
#include "dnw/config.hpp"
#include "dnw/dataset.hpp"
#include "dnw/error.hpp"
#include "dnw/graph.hpp"
#include "dnw/harness.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

struct dnw_graph {
    dnw::Graph graph;
};

struct dnw_dataset {
    dnw::Dataset data;
};

namespace {

thread_local std::string last_error;

dnw_status status_of(dnw::ErrorKind kind) {
    switch (kind) {
        case dnw::ErrorKind::InvalidRange: return DNW_ERR_INVALID_RANGE;
        case dnw::ErrorKind::Numeric: return DNW_ERR_NUMERIC;
        case dnw::ErrorKind::Budget: return DNW_ERR_BUDGET;
        case dnw::ErrorKind::Contract: return DNW_ERR_CONTRACT;
        case dnw::ErrorKind::Parse: return DNW_ERR_PARSE;
        case dnw::ErrorKind::Config: return DNW_ERR_CONFIG;
        case dnw::ErrorKind::Io: return DNW_ERR_IO;
    }
    return DNW_ERR_INTERNAL;
}

template <typename F>
dnw_status guarded(F&& body) {
    last_error.clear();
    try {
        body();
        return DNW_OK;
    } catch (const dnw::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown failure";
    }
    return DNW_ERR_INTERNAL;
}

dnw_status null_argument(const char* name) {
    last_error = std::string(name) + " must not be NULL";
    return DNW_ERR_NULL_ARGUMENT;
}

char* duplicate(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void hand_out(char** out, const std::string& s) {
    if (out) *out = duplicate(s);
}

}  // namespace

extern "C" {

const char* dnw_status_name(dnw_status status) {
    switch (status) {
        case DNW_OK: return "ok";
        case DNW_ERR_INVALID_RANGE: return "invalid range";
        case DNW_ERR_NUMERIC: return "numeric error";
        case DNW_ERR_BUDGET: return "budget error";
        case DNW_ERR_CONTRACT: return "contract violation";
        case DNW_ERR_PARSE: return "parse error";
        case DNW_ERR_CONFIG: return "config error";
        case DNW_ERR_IO: return "i/o error";
        case DNW_ERR_NULL_ARGUMENT: return "null argument";
        case DNW_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* dnw_last_error(void) { return last_error.c_str(); }

void dnw_string_free(char* text) { std::free(text); }

dnw_status dnw_graph_create(const int* blocks, size_t num_blocks, size_t k, uint64_t seed, dnw_graph** out) {
    if (!out) return null_argument("out");
    if (!blocks && num_blocks) return null_argument("blocks");
    *out = nullptr;
    return guarded([&] {
        dnw::GraphSpec spec;
        spec.blocks.assign(blocks, blocks + num_blocks);
        spec.k = k;
        spec.seed = seed;
        auto handle = std::make_unique<dnw_graph>();
        handle->graph = dnw::build_graph(spec);
        *out = handle.release();
    });
}

void dnw_graph_free(dnw_graph* graph) { delete graph; }

dnw_status dnw_graph_counts(const dnw_graph* graph, size_t* nodes, size_t* candidates, size_t* k) {
    if (!graph) return null_argument("graph");
    return guarded([&] {
        if (nodes) *nodes = graph->graph.topology.num_nodes();
        if (candidates) *candidates = graph->graph.topology.num_candidates();
        if (k) *k = graph->graph.store.k;
    });
}

dnw_status dnw_graph_real_edges(const dnw_graph* graph, int* u, int* v, size_t capacity, size_t* count) {
    if (!graph) return null_argument("graph");
    if (capacity && (!u || !v)) return null_argument("u/v");
    return guarded([&] {
        const auto edges = dnw::select_edges(graph->graph.store);
        const auto& cand = graph->graph.topology.candidates();
        for (std::size_t i = 0; i < edges.indices.size() && i < capacity; ++i) {
            u[i] = cand[edges.indices[i]].u;
            v[i] = cand[edges.indices[i]].v;
        }
        if (count) *count = edges.indices.size();
    });
}

dnw_status dnw_graph_dead_nodes(const dnw_graph* graph, int* nodes, size_t capacity, size_t* count) {
    if (!graph) return null_argument("graph");
    if (capacity && !nodes) return null_argument("nodes");
    return guarded([&] {
        const auto dead = dnw::dead_nodes(graph->graph.topology, dnw::select_edges(graph->graph.store));
        for (std::size_t i = 0; i < dead.size() && i < capacity; ++i) nodes[i] = dead[i];
        if (count) *count = dead.size();
    });
}

dnw_status dnw_dataset_spirals(size_t n_per_class, size_t classes, double noise, uint64_t seed, dnw_dataset** out) {
    if (!out) return null_argument("out");
    *out = nullptr;
    return guarded([&] {
        auto handle = std::make_unique<dnw_dataset>();
        handle->data = dnw::gen_spirals(n_per_class, classes, noise, seed);
        *out = handle.release();
    });
}

dnw_status dnw_dataset_load_csv(const char* path, double test_fraction, uint64_t seed, dnw_dataset** out) {
    if (!out) return null_argument("out");
    if (!path) return null_argument("path");
    *out = nullptr;
    return guarded([&] {
        auto handle = std::make_unique<dnw_dataset>();
        handle->data = dnw::load_csv(path, test_fraction, seed);
        *out = handle.release();
    });
}

dnw_status dnw_dataset_save_csv(const dnw_dataset* data, const char* path) {
    if (!data) return null_argument("data");
    if (!path) return null_argument("path");
    return guarded([&] { dnw::save_csv(data->data, path); });
}

dnw_status dnw_dataset_shape(const dnw_dataset* data, size_t* samples, size_t* features, size_t* classes) {
    if (!data) return null_argument("data");
    return guarded([&] {
        if (samples) *samples = data->data.size();
        if (features) *features = data->data.num_features();
        if (classes) *classes = data->data.classes;
    });
}

void dnw_dataset_free(dnw_dataset* data) { delete data; }

dnw_status dnw_run(const char* config_path, char** metrics) {
    if (!config_path) return null_argument("config_path");
    if (metrics) *metrics = nullptr;
    return guarded([&] {
        const auto config = dnw::load_config(config_path);
        const auto run = dnw::cmd_run(config);
        hand_out(metrics, dnw::metrics_jsonl(run, config.output.wall_ms));
    });
}

dnw_status dnw_compare(const char* config_path, const char* baseline, size_t seeds, char** summary) {
    if (!config_path) return null_argument("config_path");
    if (!baseline) return null_argument("baseline");
    if (summary) *summary = nullptr;
    return guarded([&] {
        const auto config = dnw::load_config(config_path);
        hand_out(summary, dnw::cmd_compare(config, baseline, seeds).to_json());
    });
}

dnw_status dnw_verify(size_t swap_scenarios, size_t general_scenarios, size_t descent_trials, uint64_t seed,
                      char** report, int* passed) {
    if (report) *report = nullptr;
    return guarded([&] {
        dnw::VerifyOptions options;
        if (swap_scenarios) options.swap_scenarios = swap_scenarios;
        if (general_scenarios) options.general_scenarios = general_scenarios;
        if (descent_trials) options.descent_trials = descent_trials;
        options.seed = seed;
        const auto result = dnw::cmd_verify(options);
        if (passed) *passed = result.ok() ? 1 : 0;
        hand_out(report, result.to_json());
    });
}

dnw_status dnw_budget(const char* table_path, char** report_json, char** report_text) {
    if (!table_path) return null_argument("table_path");
    if (report_json) *report_json = nullptr;
    if (report_text) *report_text = nullptr;
    return guarded([&] {
        const auto report = dnw::compute_budget(dnw::parse_budget_table(dnw::read_text(table_path)));
        hand_out(report_json, report.to_json());
        hand_out(report_text, report.to_text());
    });
}

dnw_status dnw_edge_budget(long long channels_in, long long channels_out, double width_mult, long long* out) {
    if (!out) return null_argument("out");
    return guarded([&] {
        dnw::require(channels_in > 0 && channels_out > 0 && width_mult > 0.0, dnw::ErrorKind::InvalidRange,
                     "channel counts and width multiplier must be positive");
        *out = dnw::edge_budget(channels_in, channels_out, width_mult);
    });
}

}  // extern "C"
