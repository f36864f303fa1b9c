#pragma once

#include "dnw/numerics.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace dnw {

using NodeId = int;

/// Which ordered pairs (u, v) are candidate edges.
enum class Connectivity {
    Dag,      // block(u) < block(v)
    Layered,  // block(v) == block(u) + 1
    Full,     // every u != v; dynamic graphs only (cycles allowed)
};

Connectivity parse_connectivity(std::string_view name);
std::string_view connectivity_name(Connectivity c);

struct Edge {
    NodeId u = 0;
    NodeId v = 0;
    auto operator<=>(const Edge&) const = default;
};

/// Immutable node/block structure and the candidate-edge universe. Nodes are
/// numbered block by block, candidates are sorted lexicographically by (u, v).
class Topology {
public:
    Topology() = default;
    Topology(std::vector<int> block_sizes, Connectivity connectivity);

    std::size_t num_nodes() const { return block_of_.size(); }
    std::size_t num_blocks() const { return block_sizes_.size(); }
    std::span<const int> block_sizes() const { return block_sizes_; }
    int block_of(NodeId v) const { return block_of_[static_cast<std::size_t>(v)]; }
    NodeId block_begin(std::size_t b) const { return block_begin_[b]; }

    std::size_t num_inputs() const { return static_cast<std::size_t>(block_sizes_.front()); }
    std::size_t num_outputs() const { return static_cast<std::size_t>(block_sizes_.back()); }
    NodeId first_output() const { return block_begin_.back(); }
    bool is_input(NodeId v) const { return block_of(v) == 0; }
    bool is_output(NodeId v) const { return static_cast<std::size_t>(block_of(v)) + 1 == num_blocks(); }

    Connectivity connectivity() const { return connectivity_; }
    bool acyclic() const { return connectivity_ != Connectivity::Full; }

    const std::vector<Edge>& candidates() const { return candidates_; }
    std::size_t num_candidates() const { return candidates_.size(); }
    /// Candidate indices (u, v) into v, ascending in u.
    std::span<const std::size_t> in_candidates(NodeId v) const { return in_[static_cast<std::size_t>(v)]; }
    /// Candidate indices (u, v) out of u, ascending in v.
    std::span<const std::size_t> out_candidates(NodeId u) const { return out_[static_cast<std::size_t>(u)]; }

private:
    std::vector<int> block_sizes_;
    std::vector<NodeId> block_begin_;
    std::vector<int> block_of_;
    Connectivity connectivity_ = Connectivity::Dag;
    std::vector<Edge> candidates_;
    std::vector<std::vector<std::size_t>> in_;
    std::vector<std::vector<std::size_t>> out_;
};

/// Number of candidate pairs for the given blocks without building the graph.
std::size_t candidate_count(std::span<const int> block_sizes, Connectivity connectivity);

/// All candidate weights plus momentum state. The real edge set is derived
/// from it on demand (select_edges), never stored.
struct EdgeStore {
    ParamBlock weights;
    std::size_t k = 0;

    std::size_t size() const { return weights.size(); }
    bool operator==(const EdgeStore&) const = default;
};

/// Scale/shift of the per-node standardize-affine-activation op plus running
/// statistics for evaluation mode.
struct NodeParams {
    ParamBlock gamma;
    ParamBlock beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;

    bool operator==(const NodeParams&) const = default;
};

struct GraphSpec {
    std::vector<int> blocks;
    std::size_t k = 0;
    Activation activation = Activation::Relu;
    std::uint64_t seed = 0;
    bool normalize = true;
    bool bias = true;
    Connectivity connectivity = Connectivity::Dag;

    bool operator==(const GraphSpec&) const = default;
};

struct Graph {
    GraphSpec spec;
    Topology topology;
    EdgeStore store;
    NodeParams nodes;
};

/// Real edges: sorted candidate indices plus a per-candidate membership mask.
struct EdgeSet {
    std::vector<std::size_t> indices;
    std::vector<std::uint8_t> mask;
    /// Smallest |w| among the selected edges (0 when empty).
    double threshold = 0.0;

    std::size_t size() const { return indices.size(); }
    bool contains(std::size_t candidate) const { return mask[candidate] != 0; }
    bool operator==(const EdgeSet&) const = default;
};

/// Throws Budget when k exceeds the candidate count, Contract on malformed blocks.
Graph build_graph(const GraphSpec& spec);

/// The k largest-|w| candidates; ties broken by ascending candidate index,
/// which is ascending lexicographic (u, v).
EdgeSet select_edges(const EdgeStore& store);

/// Edge set given explicitly by candidate indices (any order, no duplicates).
EdgeSet edge_set_from_indices(std::size_t num_candidates, std::vector<std::size_t> indices,
                              std::span<const double> weights);

/// Nodes sorted by (block, index). Throws Contract for cyclic connectivity.
std::vector<NodeId> topo_order(const Topology& topology);

/// Non-input, non-output nodes without a path from an input node or without a
/// path to an output node, using only the edges in `edges`.
std::vector<NodeId> dead_nodes(const Topology& topology, const EdgeSet& edges);
std::vector<std::uint8_t> dead_mask(const Topology& topology, const EdgeSet& edges);

/// round(c_in * d) * round(c_out * d): the edge count of a complete bipartite
/// (pointwise) layer.
long long edge_budget(long long channels_in, long long channels_out, double width_mult);
/// Separate multipliers for each side, e.g. a classifier whose class count is not scaled.
long long edge_budget(long long channels_in, long long channels_out, double in_mult, double out_mult);

}  // namespace dnw
