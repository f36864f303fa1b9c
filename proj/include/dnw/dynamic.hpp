#pragma once

#include "dnw/engine.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dnw {

/// N x N weighted adjacency in the column-vector convention: entry (v, u)
/// holds w_uv for real edges, so a state matrix Z (N x B) advances as A * Z.
using AdjacencyMatrix = Matrix;

AdjacencyMatrix adjacency(const Topology& topology, const EdgeSet& edges, std::span<const double> weights);

/// Node function applied row-wise to the node inputs (N x B) at step or time t.
using NodeFn = std::function<Matrix(const Matrix& inputs, double t)>;

/// Z(l+1) = f(A Z(l), l). Throws Numeric on a non-finite result.
Matrix step_discrete(const Matrix& state, const AdjacencyMatrix& a, const NodeFn& f, std::size_t step);

/// Block matrix for an MLP with layer matrices W_i (d_{i+1} x d_i). W_i sits in
/// block row i+1, block column i, so G * (x0, 0, ..., 0) = (0, W_1 x0, 0, ...).
AdjacencyMatrix embed_mlp(std::span<const Matrix> layers);

struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix> states;

    const Matrix& final_state() const { return states.back(); }
};

/// Classical RK4 for dZ/dt = f(A Z, t) with n = ceil((t1 - t0) / h) equal
/// steps. Every step's state is kept.
Trajectory integrate(const Matrix& state0, const AdjacencyMatrix& a, const NodeFn& f, double t0, double t1, double h);

/// The model's node op with batch statistics, applied to every node: dead
/// nodes give 0, output nodes are the identity.
NodeFn node_function(const Model& model, std::span<const std::uint8_t> dead);

enum class DynamicMode { Discrete, Continuous };

struct DynamicConfig {
    DynamicMode mode = DynamicMode::Discrete;
    /// Discrete steps; 0 means one per block transition (num_blocks - 1).
    std::size_t steps = 0;
    double t1 = 1.0;
    double h = 0.25;

    bool operator==(const DynamicConfig&) const = default;
};

void validate(const DynamicConfig& config);

/// One evaluation of F(x) = f(A x) with what its vector-Jacobian product needs.
struct StageCache {
    double time = 0.0;
    Matrix x;
    Matrix I;
    Matrix xhat;
    Matrix pre;
    Matrix out;
    std::vector<double> inv_std;
};

struct DynamicPass {
    DynamicConfig config;
    Matrix features;
    Matrix final_state;
    Matrix logits;
    std::vector<StageCache> stages;
    std::vector<std::uint8_t> dead;
    std::vector<std::uint8_t> edge_mask;
    std::vector<double> weights;
    double h = 0.0;
    std::size_t steps = 0;
};

/// Z(0) holds g_phi(X) on the input nodes and 0 elsewhere. Node statistics are
/// always taken over the batch.
DynamicPass dynamic_forward(const Model& model, const EdgeSet& edges, const Matrix& features,
                            const DynamicConfig& config, std::span<const double> weights = {});

/// Backprop through time (discrete) or through every RK4 stage (continuous).
/// Edge gradients are summed over all evaluations of f.
Gradients dynamic_backward(const Model& model, const EdgeSet& edges, const DynamicPass& pass,
                           std::span<const int> labels);

/// Evaluates the whole index set as one batch.
Evaluation evaluate_dynamic(const Model& model, const EdgeSet& edges, const Dataset& data,
                            std::span<const std::size_t> indices, const DynamicConfig& config);

std::vector<EpochMetrics> train_dynamic(Model& model, const Dataset& data, const TrainConfig& train,
                                        const DynamicConfig& config, const EdgeRule& rule = {},
                                        const TrainHooks& hooks = {});

}  // namespace dnw
