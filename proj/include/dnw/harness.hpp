#pragma once

#include "dnw/config.hpp"
#include "dnw/dataset.hpp"
#include "dnw/engine.hpp"
#include "dnw/verify.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dnw {

/// Spirals drawn with dataset.seed (falling back to the run seed) or the CSV
/// file split with the same seed.
Dataset make_dataset(const ExperimentConfig& config);

struct RunResult {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> metrics;
    /// Wall-clock milliseconds since the start of the run, per record.
    std::vector<double> wall_ms;
    /// Final trained state as JSON (graph checkpoint or sparse layers).
    std::string checkpoint;
};

/// Trains the configured method in memory. `on_epoch` sees each record as it
/// is produced.
RunResult run_experiment(const ExperimentConfig& config, const Dataset& data,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// One JSON object per record, keys in schema order; wall_ms only when enabled.
std::string metrics_jsonl(const RunResult& run, bool with_wall_ms);

/// Runs, then writes metrics.jsonl and checkpoint.json under output.dir
/// atomically. Returns the run.
RunResult cmd_run(const ExperimentConfig& config);

struct MethodStats {
    std::string method;
    std::vector<double> accuracy;  // final test accuracy per seed
    double mean = 0.0;
    double sd = 0.0;               // sample standard deviation
};

struct CompareSummary {
    std::vector<std::uint64_t> seeds;
    MethodStats reference;
    MethodStats baseline;
    std::vector<double> differences;  // reference - baseline, per seed
    double mean_difference = 0.0;
    std::size_t positive = 0;

    std::string to_json() const;
};

/// The configuration a named comparison partner runs with. For graph methods
/// the name is a baseline kind; for sparse runs it is a mask policy.
ExperimentConfig baseline_config(const ExperimentConfig& config, const std::string& baseline);
/// The reference side of a comparison (baseline configs compare against dnw).
ExperimentConfig reference_config(const ExperimentConfig& config);

/// Paired runs with seeds seed, seed+1, ...: both methods share the dataset
/// realization and the initial weights of each seed. Writes per-run metrics
/// and summary.json under output.dir when `write` is set.
CompareSummary cmd_compare(const ExperimentConfig& config, const std::string& baseline, std::size_t seeds,
                           bool write = true);

VerifyReport cmd_verify(const VerifyOptions& options);

struct BudgetLayer {
    long long c_in = 0;
    long long c_out = 0;
    long long repeat = 1;
    bool scale_in = true;
    bool scale_out = true;
};

struct BudgetStage {
    std::string name;
    std::vector<BudgetLayer> layers;
};

struct BudgetTable {
    double width_mult = 1.0;
    std::vector<BudgetStage> stages;
};

struct BudgetReport {
    std::vector<std::pair<std::string, long long>> stages;
    long long total = 0;

    std::string to_json() const;
    std::string to_text() const;
};

BudgetTable parse_budget_table(std::string_view json_text);
BudgetReport compute_budget(const BudgetTable& table);

}  // namespace dnw
