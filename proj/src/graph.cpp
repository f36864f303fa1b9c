#include "dnw/graph.hpp"

#include "dnw/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dnw {

Connectivity parse_connectivity(std::string_view name) {
    if (name == "dag") return Connectivity::Dag;
    if (name == "layered") return Connectivity::Layered;
    if (name == "full") return Connectivity::Full;
    fail(ErrorKind::Config, "unknown connectivity '" + std::string(name) + "' (expected dag|layered|full)");
}

std::string_view connectivity_name(Connectivity c) {
    switch (c) {
        case Connectivity::Dag: return "dag";
        case Connectivity::Layered: return "layered";
        case Connectivity::Full: return "full";
    }
    return "dag";
}

namespace {

bool is_candidate(Connectivity c, int block_u, int block_v, NodeId u, NodeId v) {
    switch (c) {
        case Connectivity::Dag: return block_u < block_v;
        case Connectivity::Layered: return block_v == block_u + 1;
        case Connectivity::Full: return u != v;
    }
    return false;
}

void check_blocks(std::span<const int> block_sizes) {
    require(block_sizes.size() >= 2, ErrorKind::Contract, "graph needs at least 2 blocks");
    for (std::size_t b = 0; b < block_sizes.size(); ++b) {
        require(block_sizes[b] > 0, ErrorKind::Contract, "block " + std::to_string(b) + " is empty");
    }
}

}  // namespace

Topology::Topology(std::vector<int> block_sizes, Connectivity connectivity)
    : block_sizes_(std::move(block_sizes)), connectivity_(connectivity) {
    check_blocks(block_sizes_);
    NodeId next = 0;
    for (std::size_t b = 0; b < block_sizes_.size(); ++b) {
        block_begin_.push_back(next);
        for (int i = 0; i < block_sizes_[b]; ++i) block_of_.push_back(static_cast<int>(b));
        next += block_sizes_[b];
    }
    const auto n = static_cast<NodeId>(block_of_.size());
    in_.resize(block_of_.size());
    out_.resize(block_of_.size());
    for (NodeId u = 0; u < n; ++u) {
        for (NodeId v = 0; v < n; ++v) {
            if (!is_candidate(connectivity_, block_of(u), block_of(v), u, v)) continue;
            const std::size_t idx = candidates_.size();
            candidates_.push_back({u, v});
            in_[static_cast<std::size_t>(v)].push_back(idx);
            out_[static_cast<std::size_t>(u)].push_back(idx);
        }
    }
}

std::size_t candidate_count(std::span<const int> block_sizes, Connectivity connectivity) {
    check_blocks(block_sizes);
    std::size_t total = 0;
    std::size_t n = 0;
    for (int s : block_sizes) n += static_cast<std::size_t>(s);
    switch (connectivity) {
        case Connectivity::Dag:
            for (std::size_t i = 0; i < block_sizes.size(); ++i)
                for (std::size_t j = i + 1; j < block_sizes.size(); ++j)
                    total += static_cast<std::size_t>(block_sizes[i]) * static_cast<std::size_t>(block_sizes[j]);
            break;
        case Connectivity::Layered:
            for (std::size_t i = 0; i + 1 < block_sizes.size(); ++i)
                total += static_cast<std::size_t>(block_sizes[i]) * static_cast<std::size_t>(block_sizes[i + 1]);
            break;
        case Connectivity::Full: total = n * (n - 1); break;
    }
    return total;
}

Graph build_graph(const GraphSpec& spec) {
    Graph g;
    g.spec = spec;
    g.topology = Topology(spec.blocks, spec.connectivity);
    const std::size_t pairs = g.topology.num_candidates();
    if (spec.k > pairs) {
        fail(ErrorKind::Budget, "edge budget k=" + std::to_string(spec.k) + " exceeds the " +
                                    std::to_string(pairs) + " candidate pairs");
    }

    Rng rng(spec.seed);
    g.store.k = spec.k;
    g.store.weights = ParamBlock(pairs);
    const auto& cands = g.topology.candidates();
    for (std::size_t c = 0; c < pairs; ++c) {
        const double fan_in = static_cast<double>(g.topology.in_candidates(cands[c].v).size());
        const double sigma = std::sqrt(1.0 / fan_in);
        g.store.weights.value[c] = uniform(rng, -sigma, sigma);
    }

    const std::size_t n = g.topology.num_nodes();
    g.nodes.gamma = ParamBlock(n, 1.0);
    g.nodes.beta = ParamBlock(n, 0.0);
    g.nodes.running_mean.assign(n, 0.0);
    g.nodes.running_var.assign(n, 1.0);
    return g;
}

namespace {

double threshold_of(std::span<const std::size_t> indices, std::span<const double> weights) {
    if (indices.empty()) return 0.0;
    double t = std::abs(weights[indices.front()]);
    for (std::size_t i : indices) t = std::min(t, std::abs(weights[i]));
    return t;
}

}  // namespace

EdgeSet select_edges(const EdgeStore& store) {
    const auto& w = store.weights.value;
    const std::size_t n = w.size();
    const std::size_t k = std::min(store.k, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Strict total order: larger magnitude first, lower index on ties.
    const auto stronger = [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(w[a]);
        const double mb = std::abs(w[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    };
    if (k > 0 && k < n) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), stronger);
    order.resize(k);
    std::sort(order.begin(), order.end());

    EdgeSet set;
    set.mask.assign(n, 0);
    for (std::size_t i : order) set.mask[i] = 1;
    set.threshold = threshold_of(order, w);
    set.indices = std::move(order);
    return set;
}

EdgeSet edge_set_from_indices(std::size_t num_candidates, std::vector<std::size_t> indices,
                              std::span<const double> weights) {
    EdgeSet set;
    set.mask.assign(num_candidates, 0);
    std::sort(indices.begin(), indices.end());
    for (std::size_t i : indices) {
        require(i < num_candidates, ErrorKind::Contract, "edge index out of range");
        require(set.mask[i] == 0, ErrorKind::Contract, "duplicate edge index");
        set.mask[i] = 1;
    }
    set.threshold = threshold_of(indices, weights);
    set.indices = std::move(indices);
    return set;
}

std::vector<NodeId> topo_order(const Topology& topology) {
    require(topology.acyclic(), ErrorKind::Contract, "topo_order: graph with full connectivity may contain cycles");
    std::vector<NodeId> order(topology.num_nodes());
    std::iota(order.begin(), order.end(), NodeId{0});
    return order;
}

std::vector<std::uint8_t> dead_mask(const Topology& topology, const EdgeSet& edges) {
    const std::size_t n = topology.num_nodes();
    const auto& cands = topology.candidates();

    auto reach = [&](bool forward) {
        std::vector<std::uint8_t> seen(n, 0);
        std::vector<NodeId> stack;
        for (std::size_t v = 0; v < n; ++v) {
            const auto id = static_cast<NodeId>(v);
            if (forward ? topology.is_input(id) : topology.is_output(id)) {
                seen[v] = 1;
                stack.push_back(id);
            }
        }
        while (!stack.empty()) {
            const NodeId x = stack.back();
            stack.pop_back();
            const auto adj = forward ? topology.out_candidates(x) : topology.in_candidates(x);
            for (std::size_t c : adj) {
                if (!edges.contains(c)) continue;
                const NodeId y = forward ? cands[c].v : cands[c].u;
                if (!seen[static_cast<std::size_t>(y)]) {
                    seen[static_cast<std::size_t>(y)] = 1;
                    stack.push_back(y);
                }
            }
        }
        return seen;
    };

    const auto from_inputs = reach(true);
    const auto to_outputs = reach(false);
    std::vector<std::uint8_t> dead(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        const auto id = static_cast<NodeId>(v);
        if (topology.is_input(id) || topology.is_output(id)) continue;
        dead[v] = (!from_inputs[v] || !to_outputs[v]) ? 1 : 0;
    }
    return dead;
}

std::vector<NodeId> dead_nodes(const Topology& topology, const EdgeSet& edges) {
    const auto mask = dead_mask(topology, edges);
    std::vector<NodeId> out;
    for (std::size_t v = 0; v < mask.size(); ++v)
        if (mask[v]) out.push_back(static_cast<NodeId>(v));
    return out;
}

long long edge_budget(long long channels_in, long long channels_out, double width_mult) {
    return edge_budget(channels_in, channels_out, width_mult, width_mult);
}

long long edge_budget(long long channels_in, long long channels_out, double in_mult, double out_mult) {
    require(channels_in > 0 && channels_out > 0, ErrorKind::InvalidRange, "edge_budget: channel counts must be positive");
    require(in_mult > 0.0 && out_mult > 0.0, ErrorKind::InvalidRange, "edge_budget: width multiplier must be positive");
    const long long c1 = std::llround(static_cast<double>(channels_in) * in_mult);
    const long long c2 = std::llround(static_cast<double>(channels_out) * out_mult);
    return c1 * c2;
}

}  // namespace dnw
