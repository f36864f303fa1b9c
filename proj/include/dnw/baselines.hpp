#pragma once

#include "dnw/engine.hpp"

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace dnw {

enum class BaselineKind { RandomGraph, NoUpdateRule, L1Anneal, OneShotPruneReinit, OneShotPruneFinetune };

BaselineKind parse_baseline(std::string_view name);
std::string_view baseline_name(BaselineKind kind);

/// The k largest-|w| pairs of the initial weights, frozen for all of training.
/// Throws Budget when k exceeds the candidate count.
EdgeSet random_graph(const GraphSpec& spec);

/// Fixed edge set taken from the model's current store; only real edges train.
EdgeRule random_graph_rule(const Model& model);

/// Top-k re-selected every step, but only real edges are updated, so a
/// hallucinated weight never changes.
EdgeRule no_update_rule();

struct L1Anneal {
    double l1 = 1e-4;
    /// Epochs over which the count falls linearly from all candidates to k.
    std::size_t prune_epochs = 1;
    /// Optional explicit survivor count after each epoch (overrides the
    /// linear schedule). Must be non-increasing and end at k.
    std::vector<std::size_t> counts;
};

/// Survivor count after `epoch` (1-based) under the schedule.
std::size_t l1_anneal_count(const L1Anneal& schedule, std::size_t total, std::size_t k, std::size_t epoch);

/// Starts from the complete graph and permanently prunes the smallest-|w|
/// survivors after each epoch. Throws Contract when the schedule would go
/// below k or cannot reach k within `epochs`.
EdgeRule l1_anneal_rule(const Model& model, const L1Anneal& schedule, std::size_t epochs);

enum class PruneMode { Reinit, Finetune };

/// Keeps the k largest-|w| edges of a trained model and retrains with that
/// set fixed using `config` (whose lr plays the role of the fine-tune rate).
/// Reinit restores every parameter from `initial` bitwise; Finetune keeps the
/// trained values. Momentum buffers start from zero. Throws Contract when
/// `initial` is missing or belongs to another graph.
std::vector<EpochMetrics> one_shot_prune(Model& trained, const Model* initial, std::size_t k, PruneMode mode,
                                         const Dataset& data, const TrainConfig& config,
                                         const TrainHooks& hooks = {});

}  // namespace dnw
