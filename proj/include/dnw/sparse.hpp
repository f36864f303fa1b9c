#pragma once

#include "dnw/dataset.hpp"
#include "dnw/engine.hpp"
#include "dnw/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dnw {

/// ceil(fraction * n), with a small slack so 0.1 * 200 keeps 20 and not 21.
std::size_t keep_count(std::size_t n, double fraction);

/// True for the keep_count(n, fraction) largest-|w| entries; ties by
/// ascending flat index. Throws Contract unless 0 < fraction <= 1.
std::vector<std::uint8_t> mask_topk_fraction(std::span<const double> weights, double fraction);

/// Fully connected layer whose forward pass sees only masked weights. The
/// bias is always dense.
struct MaskedLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    ParamBlock weight;  // out x in, row-major
    ParamBlock bias;
    double keep_fraction = 1.0;
    /// Current forward mask.
    std::vector<std::uint8_t> mask;

    std::size_t active() const;
};

enum class MaskPolicy {
    /// Re-select the top-k% by magnitude every step, dense straight-through
    /// gradients, every entry updated.
    Magnitude,
    /// Control: a random mask drawn once; only its entries train.
    FrozenRandom,
};

struct SparseConfig {
    /// Layer widths including the input features and the class count.
    std::vector<int> layers;
    double keep_fraction = 0.1;
    bool dense_first_layer = false;
    MaskPolicy policy = MaskPolicy::Magnitude;
    Activation activation = Activation::Relu;
    std::uint64_t seed = 0;

    bool operator==(const SparseConfig&) const = default;
};

struct SparseNet {
    SparseConfig config;
    std::vector<MaskedLayer> layers;
};

SparseNet build_sparse_net(const SparseConfig& config);

struct SparseStep {
    double loss = 0.0;
    /// Active forward weights per layer on this step.
    std::vector<std::size_t> active;
};

/// One minibatch: recompute masks (Magnitude policy), masked forward, dense
/// straight-through backward, momentum SGD.
SparseStep sparse_step(SparseNet& net, const Matrix& features, std::span<const int> labels, const SgdSettings& sgd);

/// Logits (classes x batch) with the current masks.
Matrix sparse_forward(const SparseNet& net, const Matrix& features);

Evaluation evaluate_sparse(const SparseNet& net, const Dataset& data, std::span<const std::size_t> indices);

struct SparseHooks {
    std::function<void(const EpochMetrics&)> on_epoch;
    std::function<void(std::size_t iteration, const SparseStep&)> on_step;
};

/// Same batching and schedule as the graph trainer. active_edges in the
/// records is the total number of active weights.
std::vector<EpochMetrics> train_sparse(SparseNet& net, const Dataset& data, const TrainConfig& config,
                                       const SparseHooks& hooks = {});

}  // namespace dnw
