#pragma once

#include "dnw/dataset.hpp"
#include "dnw/graph.hpp"
#include "dnw/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dnw {

/// g_phi (affine map from raw features to the input block) and h_psi (affine
/// map from the output block to class logits).
struct IoMaps {
    std::size_t features = 0;
    std::size_t classes = 0;
    ParamBlock in_weight;   // |V0| x F, row-major
    ParamBlock in_bias;     // |V0|
    ParamBlock out_weight;  // C x |V_E|, row-major
    ParamBlock out_bias;    // C

    bool operator==(const IoMaps&) const = default;
};

struct Model {
    Graph graph;
    IoMaps io;
    std::uint64_t iteration = 0;
};

Model build_model(const GraphSpec& spec, std::size_t features, std::size_t classes);

enum class Mode { Train, Eval };

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kRunningMomentum = 0.9;

/// Replaces (or adds to) the computed input I_v of one node.
struct InputOverride {
    NodeId node = 0;
    std::vector<double> values;
    bool add = false;
};

struct ForwardOptions {
    /// Per-candidate weights to use instead of the store (empty = store).
    std::span<const double> weights;
    /// Nodes forced to Z = 0 with their node op skipped (empty = none).
    std::span<const std::uint8_t> skip;
    std::span<const InputOverride> overrides;
};

/// Everything the backward pass and the edge update need from one minibatch.
struct BatchState {
    Mode mode = Mode::Train;
    std::size_t batch = 0;
    Matrix features;  // F x B
    Matrix Z;         // N x B post-activation node states
    Matrix I;         // N x B node inputs (sum over real edges)
    Matrix xhat;      // N x B standardized inputs
    Matrix pre;       // N x B pre-activation (gamma * xhat + beta)
    Matrix dZ;        // N x B dL/dZ
    Matrix dI;        // N x B dL/dI
    Matrix logits;    // C x B
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;
    /// Dead nodes under the edge set (reporting only; their states are
    /// still computed so hallucinated edges out of them see real values).
    std::vector<std::uint8_t> dead;
    std::vector<std::uint8_t> skip;
    std::vector<std::uint8_t> edge_mask;  // edges the state was computed with
    std::size_t weight_reads = 0;
};

struct Gradients {
    double loss = 0.0;
    std::vector<double> edges;  // <Z_u, dL/dI_v> for every candidate pair
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> in_weight;
    std::vector<double> in_bias;
    std::vector<double> out_weight;
    std::vector<double> out_bias;
};

/// Evaluates the graph over real edges only, in topological order. Output
/// nodes are the identity.
BatchState forward(const Model& model, const EdgeSet& edges, const Matrix& features, Mode mode,
                   const ForwardOptions& options = {});

/// Reverse-mode pass over real edges. Fills state.dZ / state.dI for every
/// node and returns parameter gradients, including <Z_u, dL/dI_v> for every
/// candidate (real or hallucinated).
Gradients backward(const Model& model, const EdgeSet& edges, BatchState& state, std::span<const int> labels,
                   std::span<const double> weights = {});

/// <Z_u, dL/dI_v> summed over the batch in ascending sample order.
std::vector<double> edge_gradients(const Topology& topology, const BatchState& state);

/// Momentum SGD on every candidate pair (or only where `active` is set):
/// g = <Z_u, dL/dI_v> + decay * w; v <- mu v + g; w <- w - lr v.
void update_edges(EdgeStore& store, const Topology& topology, const BatchState& state, const SgdSettings& sgd,
                  std::span<const std::uint8_t> active = {});
void update_edges(EdgeStore& store, std::span<const double> edge_grad, const SgdSettings& sgd,
                  std::span<const std::uint8_t> active = {});

void update_running_stats(NodeParams& nodes, const Topology& topology, const BatchState& state);

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool cosine = false;
    /// Apply weight decay to g_phi / h_psi as well as to edges.
    bool io_weight_decay = true;
    /// Stop after this many iterations (0 = run all epochs).
    std::size_t max_steps = 0;

    /// The bare update rule: no momentum, no weight decay.
    void make_plain() {
        momentum = 0.0;
        weight_decay = 0.0;
    }
    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& config);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    std::size_t active_edges = 0;
    std::size_t live_nodes = 0;
    std::size_t k = 0;
};

/// How the real edge set is chosen each iteration and which candidates the
/// edge update touches. The default is the full DNW rule.
struct EdgeRule {
    enum class Selection { TopK, Fixed };
    enum class Updates { All, RealOnly };

    Selection selection = Selection::TopK;
    Updates updates = Updates::All;
    /// L1 coefficient applied to real edges.
    double l1 = 0.0;
    /// Candidate mask for Selection::Fixed.
    std::vector<std::uint8_t> fixed;
    /// Called after each epoch (1-based) before evaluation; may edit `fixed`.
    std::function<void(std::size_t epoch, std::vector<std::uint8_t>& fixed, const EdgeStore& store)> after_epoch;
};

struct TrainHooks {
    std::function<void(const EpochMetrics&)> on_epoch;
    /// Called after every iteration with the edge set that iteration used.
    std::function<void(std::size_t iteration, const EdgeSet& edges, const Model& model)> on_step;
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const Model& model, const EdgeSet& edges, const Dataset& data,
                    std::span<const std::size_t> indices);

/// The edge set a trained model uses under `rule` (top-k or the fixed mask).
EdgeSet current_edges(const Model& model, const EdgeRule& rule = {});

/// DNW training. Returns one record per epoch, starting with the epoch-0
/// evaluation of the initial model. Numeric failures are rethrown with the
/// iteration index.
std::vector<EpochMetrics> train(Model& model, const Dataset& data, const TrainConfig& config,
                                const EdgeRule& rule = {}, const TrainHooks& hooks = {});

/// Building blocks shared by the static, straight-through and dynamic trainers.
struct StepResult {
    EdgeSet used;
    Gradients grads;
};
/// Runs one forward/backward pass on a minibatch with the rule-selected edges
/// and returns the edges it actually used plus the gradients.
using StepFn = std::function<StepResult(Model&, const Matrix&, std::span<const int>, const EdgeSet&)>;
using EvalFn = std::function<Evaluation(const Model&, const EdgeSet&, const Dataset&, std::span<const std::size_t>)>;

/// Epoch/minibatch loop: seeded shuffling, optional cosine schedule, momentum
/// SGD on every parameter group and the edge update under `rule`.
std::vector<EpochMetrics> train_loop(Model& model, const Dataset& data, const TrainConfig& config,
                                     const EdgeRule& rule, const TrainHooks& hooks, const StepFn& step,
                                     const EvalFn& eval);

/// Magnitude mask computed by sorting |w|: tau is the k-th largest magnitude,
/// entries with |w| > tau are kept and ties at tau fill the remaining slots by
/// ascending index.
struct StraightThroughMask {
    std::vector<std::uint8_t> keep;
    double tau = 0.0;
};
StraightThroughMask straight_through_mask(std::span<const double> weights, std::size_t k);

/// Same algorithm expressed as a straight-through estimator: the forward pass
/// uses h(w) = w * 1{|w| >= tau} over every candidate and the backward pass
/// treats h as the identity.
std::vector<EpochMetrics> st_train(Model& model, const Dataset& data, const TrainConfig& config,
                                   const TrainHooks& hooks = {});

}  // namespace dnw
