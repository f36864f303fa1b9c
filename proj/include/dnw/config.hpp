#pragma once

#include "dnw/baselines.hpp"
#include "dnw/dynamic.hpp"
#include "dnw/engine.hpp"
#include "dnw/graph.hpp"
#include "dnw/sparse.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dnw {

enum class Method { Dnw, DnwSt, DynamicDiscrete, DynamicContinuous, Sparse, Baseline };

struct DatasetSpec {
    std::string kind = "spirals";  // spirals | csv
    std::size_t n_per_class = 500;
    std::size_t classes = 2;
    double noise = 0.1;
    /// Absent: the run seed is used, so paired runs share one realization.
    std::optional<std::uint64_t> seed;
    double test_fraction = 0.3;
    std::string path;

    bool operator==(const DatasetSpec&) const = default;
};

struct BaselineSpec {
    BaselineKind kind = BaselineKind::RandomGraph;
    /// Trainer the baseline rule runs under: dnw | dynamic_discrete | dynamic_continuous.
    Method engine = Method::Dnw;
    double l1 = 1e-4;
    /// 0 means "all training epochs".
    std::size_t prune_epochs = 0;
    double finetune_lr = 0.01;
    /// 0 means "same as train.epochs".
    std::size_t finetune_epochs = 0;

    bool operator==(const BaselineSpec&) const = default;
};

struct OutputSpec {
    std::string dir = "runs/default";
    bool wall_ms = false;

    bool operator==(const OutputSpec&) const = default;
};

struct ExperimentConfig {
    Method method = Method::Dnw;
    std::uint64_t seed = 0;
    GraphSpec graph;
    TrainConfig train;
    bool plain = false;
    DatasetSpec dataset;
    DynamicConfig dynamic;
    SparseConfig sparse;
    BaselineSpec baseline;
    OutputSpec output;

    bool operator==(const ExperimentConfig&) const = default;
};

/// dnw, dnw_st, dynamic_discrete, dynamic_continuous, sparse, baseline:<name>.
std::string method_name(const ExperimentConfig& config);

/// Parses and validates. Errors are Config errors whose message starts with
/// the offending key path (for example "train.lr: must be positive").
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);

/// Every field written explicitly; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// Same experiment with every seed-dependent piece moved to `seed`.
ExperimentConfig with_seed(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace dnw
