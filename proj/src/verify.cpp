#include "dnw/verify.hpp"

#include "dnw/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>

namespace dnw {

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

bool reachable(std::size_t n, const std::vector<std::vector<std::size_t>>& adj, std::size_t from, std::size_t to) {
    std::vector<std::uint8_t> seen(n, 0);
    std::deque<std::size_t> queue{from};
    seen[from] = 1;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (u == to) return true;
        for (std::size_t v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                queue.push_back(v);
            }
        }
    }
    return false;
}

std::vector<std::vector<std::size_t>> adjacency_lists(const Topology& topo, std::span<const std::uint8_t> mask) {
    std::vector<std::vector<std::size_t>> adj(topo.num_nodes());
    const auto& cands = topo.candidates();
    for (std::size_t c = 0; c < cands.size(); ++c)
        if (mask.empty() || mask[c])
            adj[static_cast<std::size_t>(cands[c].u)].push_back(static_cast<std::size_t>(cands[c].v));
    return adj;
}

double loss_with_overrides(const Model& model, const EdgeSet& edges, const SwapScenario& s,
                           std::span<const InputOverride> overrides) {
    ForwardOptions opt;
    opt.overrides = overrides;
    const auto st = forward(model, edges, s.features, Mode::Train, opt);
    return softmax_ce(st.logits, s.labels).loss;
}

// Post-update input of node t when the real set is `mask`: sum over real
// in-edges in ascending u of w~_ut Z_u.
std::vector<double> updated_input(const Topology& topo, const BatchState& st, std::span<const std::uint8_t> mask,
                                  std::span<const double> w_new, NodeId t) {
    std::vector<double> out(st.batch, 0.0);
    const auto& cands = topo.candidates();
    for (std::size_t c : topo.in_candidates(t)) {
        if (!mask[c]) continue;
        const auto zu = st.Z.row(static_cast<std::size_t>(cands[c].u));
        for (std::size_t b = 0; b < st.batch; ++b) out[b] += w_new[c] * zu[b];
    }
    return out;
}

SwapReport run_swap(const SwapScenario& s, bool general) {
    SwapReport r;
    const auto& model = s.model;
    const auto& topo = model.graph.topology;
    const auto& cands = topo.candidates();
    require(s.hallucinated < cands.size() && s.real < cands.size(), ErrorKind::Contract,
            "swap scenario: pair index out of range");
    const Edge hal = cands[s.hallucinated];
    const Edge real = cands[s.real];
    if (!general)
        require(hal.v == real.v, ErrorKind::Contract, "check_swap: both pairs must end in the same node");

    const EdgeSet edges = select_edges(model.graph.store);
    if (!edges.contains(s.real)) {
        r.reason = "designated real pair is not in the edge set";
        return r;
    }
    if (edges.contains(s.hallucinated)) {
        r.reason = "designated hallucinated pair is in the edge set";
        return r;
    }
    const auto dead = dead_mask(topo, edges);
    if (dead[static_cast<std::size_t>(real.v)] || dead[static_cast<std::size_t>(hal.v)]) {
        r.reason = "target node is dead";
        return r;
    }
    if (general) {
        const std::size_t n = topo.num_nodes();
        if (hal.u == real.u || reachable(n, adjacency_lists(topo, {}), static_cast<std::size_t>(hal.u),
                                         static_cast<std::size_t>(real.u))) {
            r.reason = "path from i to j";
            return r;
        }
        if (hal.v != real.v) {
            const auto real_adj = adjacency_lists(topo, edges.mask);
            const auto k = static_cast<std::size_t>(real.v);
            const auto l = static_cast<std::size_t>(hal.v);
            if (reachable(n, real_adj, k, l) || reachable(n, real_adj, l, k)) {
                r.reason = "real-edge path between k and l";
                return r;
            }
        }
    }

    const auto& w = model.graph.store.weights.value;
    const double wi = w[s.hallucinated];
    const double wj = w[s.real];
    if (!(std::abs(wi) < std::abs(wj))) {
        r.reason = "|w_i| < |w_j| fails";
        return r;
    }
    if (wi == 0.0) {
        r.reason = "hallucinated weight is zero";
        return r;
    }

    auto st = forward(model, edges, s.features, Mode::Train);
    const auto grads = backward(model, edges, st, s.labels);
    const double eps = std::abs(wj) - std::abs(wi);
    std::vector<double> w_new(w.size());
    bool found = false;
    for (int m = 0; m < kSwapAlphaSteps && !found; ++m) {
        const double alpha = std::ldexp(kSwapAlphaStart, -m);
        const double ti = wi - alpha * grads.edges[s.hallucinated];
        const double tj = wj - alpha * grads.edges[s.real];
        const bool ok = std::abs(ti) > std::abs(tj) && sign_of(ti) == sign_of(wi) && sign_of(tj) == sign_of(wj) &&
                        std::abs(ti) <= std::abs(tj) + eps * std::abs(tj) / std::abs(wi);
        if (ok) {
            found = true;
            r.alpha = alpha;
        }
    }
    if (!found) {
        r.reason = "no feasible alpha on the grid";
        return r;
    }
    for (std::size_t c = 0; c < w.size(); ++c) w_new[c] = w[c] - r.alpha * grads.edges[c];

    std::vector<std::uint8_t> swapped = edges.mask;
    swapped[s.real] = 0;
    swapped[s.hallucinated] = 1;
    std::vector<InputOverride> with_swap;
    std::vector<InputOverride> without_swap;
    for (NodeId t : {real.v, hal.v}) {
        if (!with_swap.empty() && with_swap.front().node == t) continue;
        with_swap.push_back({t, updated_input(topo, st, swapped, w_new, t), false});
        without_swap.push_back({t, updated_input(topo, st, edges.mask, w_new, t), false});
    }
    r.loss_swap = loss_with_overrides(model, edges, s, with_swap);
    r.loss_noswap = loss_with_overrides(model, edges, s, without_swap);
    const double ti = w_new[s.hallucinated];
    const double tj = w_new[s.real];
    r.lhs = ti * (ti - wi);
    r.rhs = tj * (tj - wj);
    r.accepted = true;
    r.loss_decreased = r.loss_swap <= r.loss_noswap + kSwapTolerance;
    r.inequality = r.lhs >= r.rhs;
    r.agree = r.inequality == r.loss_decreased;
    return r;
}

}  // namespace

SwapReport check_swap(const SwapScenario& scenario) { return run_swap(scenario, false); }

SwapReport check_swap_general(const SwapScenario& scenario) { return run_swap(scenario, true); }

SwapScenario random_swap_scenario(Rng& rng, bool general, double weight_scale, double output_scale) {
    require(weight_scale > 0.0, ErrorKind::InvalidRange, "weight scale must be positive");
    require(output_scale > 0.0, ErrorKind::InvalidRange, "output scale must be positive");
    GraphSpec spec;
    std::size_t total = 0;
    const std::size_t nblocks = 3 + rng.below(2);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const int size = 1 + static_cast<int>(rng.below(3));
        spec.blocks.push_back(size);
        total += static_cast<std::size_t>(size);
    }
    while (total > 8) {
        auto it = std::max_element(spec.blocks.begin(), spec.blocks.end());
        --*it;
        --total;
    }
    const std::size_t ncand = candidate_count(spec.blocks, Connectivity::Dag);
    spec.k = 1 + rng.below(ncand - 1);
    spec.activation = Activation::Tanh;
    spec.normalize = false;
    spec.seed = rng.next_u64();
    const std::size_t features = 2 + rng.below(2);
    const std::size_t classes = 2 + rng.below(2);

    SwapScenario s;
    s.model = build_model(spec, features, classes);
    auto& m = s.model;
    for (double& w : m.graph.store.weights.value) w = uniform(rng, -weight_scale, weight_scale);
    for (double& g : m.graph.nodes.gamma.value) g = uniform(rng, 0.5, 1.5);
    for (double& b : m.graph.nodes.beta.value) b = uniform(rng, -1.0, 1.0);
    for (double& w : m.io.in_weight.value) w = uniform(rng, -1.0, 1.0);
    for (double& w : m.io.in_bias.value) w = uniform(rng, -0.5, 0.5);
    for (double& w : m.io.out_weight.value) w = uniform(rng, -output_scale, output_scale);

    const std::size_t batch = 2 + rng.below(7);
    s.features = Matrix(features, batch);
    for (double& x : s.features.data) x = rng.normal();
    for (std::size_t b = 0; b < batch; ++b) s.labels.push_back(static_cast<int>(rng.below(classes)));

    const auto& topo = m.graph.topology;
    const auto& cands = topo.candidates();
    const auto& w = m.graph.store.weights.value;
    const EdgeSet edges = select_edges(m.graph.store);
    const auto dead = dead_mask(topo, edges);
    auto weaker = [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(w[a]);
        const double mb = std::abs(w[b]);
        return ma != mb ? ma < mb : a > b;
    };

    if (!general) {
        // Target: a random live node with both a real and a hallucinated in-edge.
        std::vector<NodeId> targets;
        for (std::size_t v = topo.num_inputs(); v < topo.num_nodes(); ++v) {
            if (dead[v]) continue;
            bool has_real = false;
            bool has_hal = false;
            for (std::size_t c : topo.in_candidates(static_cast<NodeId>(v))) (edges.mask[c] ? has_real : has_hal) = true;
            if (has_real && has_hal) targets.push_back(static_cast<NodeId>(v));
        }
        if (targets.empty()) {
            s.real = edges.indices.front();
            s.hallucinated = s.real;
            return s;
        }
        const NodeId k = targets[rng.below(targets.size())];
        std::size_t weakest_real = cands.size();
        std::size_t strongest_hal = cands.size();
        for (std::size_t c : topo.in_candidates(k)) {
            if (edges.mask[c]) {
                if (weakest_real == cands.size() || weaker(c, weakest_real)) weakest_real = c;
            } else if (strongest_hal == cands.size() || weaker(strongest_hal, c)) {
                strongest_hal = c;
            }
        }
        s.real = weakest_real;
        s.hallucinated = strongest_hal;
        return s;
    }

    // General form: the globally weakest real pair (j, k) against the
    // strongest hallucinated (i, l) ending elsewhere with i not upstream of j.
    s.real = *std::min_element(edges.indices.begin(), edges.indices.end(), weaker);
    const NodeId j = cands[s.real].u;
    const NodeId k = cands[s.real].v;
    std::size_t best = cands.size();
    for (std::size_t c = 0; c < cands.size(); ++c) {
        if (edges.mask[c] || cands[c].v == k || dead[static_cast<std::size_t>(cands[c].v)]) continue;
        if (cands[c].u == j || topo.block_of(cands[c].u) < topo.block_of(j)) continue;
        if (best == cands.size() || weaker(best, c)) best = c;
    }
    s.hallucinated = best == cands.size() ? s.real : best;
    return s;
}

DescentReport check_descent(const ScalarFn& loss, std::span<const double> point, std::span<const double> g1,
                          std::span<const double> g2, double alpha0, std::span<const double> grad) {
    require(g1.size() == point.size() && g2.size() == point.size(), ErrorKind::Contract,
            "check_descent: direction length mismatch");
    require(alpha0 > 0.0, ErrorKind::InvalidRange, "check_descent: alpha0 must be positive");
    std::vector<double> gradient;
    if (grad.empty()) {
        gradient = finite_diff(loss, point, 1e-6);
        grad = gradient;
    }
    require(grad.size() == point.size(), ErrorKind::Contract, "check_descent: gradient length mismatch");

    DescentReport r;
    const double d1 = -dot(g1, grad);
    const double d2 = -dot(g2, grad);
    r.margin = d1 - d2;
    if (!(d1 > d2)) {
        r.reason = "hypothesis fails: <g1, -grad> is not strictly larger than <g2, -grad>";
        return r;
    }
    r.accepted = true;

    std::vector<double> x1(point.size());
    std::vector<double> x2(point.size());
    auto holds = [&](double a) {
        for (std::size_t i = 0; i < point.size(); ++i) {
            x1[i] = point[i] + a * g1[i];
            x2[i] = point[i] + a * g2[i];
        }
        const double l1 = loss(x1);
        const double l2 = loss(x2);
        return std::isfinite(l1) && std::isfinite(l2) && l1 < l2;
    };

    constexpr int kScan = 2000;
    const double lo = alpha0 * 1e-6;
    const double ratio = std::pow(alpha0 / lo, 1.0 / (kScan - 1));
    double good = 0.0;
    double a = lo;
    for (int s = 0; s < kScan; ++s, a *= ratio) {
        const double at = s + 1 == kScan ? alpha0 : a;
        if (!holds(at)) {
            if (good == 0.0) {
                r.alpha_star = 0.0;
                r.reason = "implication fails at the smallest scanned alpha";
                return r;
            }
            double bad = at;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (good + bad);
                if (holds(mid)) good = mid;
                else bad = mid;
            }
            r.alpha_star = good;
            return r;
        }
        good = at;
    }
    r.alpha_star = alpha0;
    return r;
}

bool VerifyReport::ok() const {
    return swap.failed == 0 && swap.disagreements == 0 && swap.accepted >= options.swap_scenarios &&
           swap_general.failed == 0 && swap_general.disagreements == 0 &&
           swap_general.accepted >= options.general_scenarios && descent.failed == 0 &&
           descent.accepted >= options.descent_trials;
}

std::string VerifyReport::to_json() const {
    auto tally = [](const CheckTally& t) {
        nlohmann::ordered_json j;
        j["attempted"] = t.attempted;
        j["accepted"] = t.accepted;
        j["rejected"] = t.rejected;
        j["passed"] = t.passed;
        j["failed"] = t.failed;
        j["disagreements"] = t.disagreements;
        if (t.accepted > 0) j["worst_margin"] = t.worst_margin;
        return j;
    };
    nlohmann::ordered_json j;
    j["seed"] = options.seed;
    j["weight_scale"] = options.weight_scale;
    j["output_scale"] = options.output_scale;
    j["swap"] = tally(swap);
    j["swap_general"] = tally(swap_general);
    j["descent"] = tally(descent);
    j["ok"] = ok();
    return j.dump(2);
}

VerifyReport run_verification(const VerifyOptions& options) {
    VerifyReport report;
    report.options = options;
    Rng rng(options.seed);

    auto run_swaps = [&](bool general, std::size_t target, CheckTally& t) {
        const std::size_t cap = target * options.attempts_per_scenario;
        while (t.accepted < target && t.attempted < cap) {
            ++t.attempted;
            const SwapScenario s = random_swap_scenario(rng, general, options.weight_scale, options.output_scale);
            const SwapReport r = general ? check_swap_general(s) : check_swap(s);
            if (!r.accepted) {
                ++t.rejected;
                continue;
            }
            ++t.accepted;
            (r.loss_decreased ? t.passed : t.failed) += 1;
            if (!r.agree) ++t.disagreements;
            t.worst_margin = std::max(t.worst_margin, r.loss_swap - r.loss_noswap);
        }
    };
    run_swaps(false, options.swap_scenarios, report.swap);
    run_swaps(true, options.general_scenarios, report.swap_general);

    auto& t = report.descent;
    while (t.accepted < options.descent_trials && t.attempted < options.descent_trials * options.attempts_per_scenario) {
        ++t.attempted;
        const std::size_t classes = 2 + rng.below(3);
        const std::size_t batch = 1 + rng.below(6);
        std::vector<int> labels(batch);
        for (auto& y : labels) y = static_cast<int>(rng.below(classes));
        std::vector<double> point(classes * batch);
        for (double& x : point) x = 2.0 * rng.normal();
        std::vector<double> g1(point.size());
        std::vector<double> g2(point.size());
        for (double& x : g1) x = rng.normal();
        for (double& x : g2) x = rng.normal();
        auto loss = [&](std::span<const double> v) {
            Matrix logits(classes, batch);
            std::copy(v.begin(), v.end(), logits.data.begin());
            return softmax_ce(logits, labels).loss;
        };
        Matrix logits(classes, batch);
        std::copy(point.begin(), point.end(), logits.data.begin());
        const auto lg = softmax_ce(logits, labels);
        if (dot(g1, lg.grad.data) > dot(g2, lg.grad.data)) std::swap(g1, g2);
        const auto r = check_descent(loss, point, g1, g2, 1.0, lg.grad.data);
        if (!r.accepted) {
            ++t.rejected;
            continue;
        }
        ++t.accepted;
        // Spot-check the certified range at evenly spaced points.
        bool ok = true;
        double worst = -1e300;
        std::vector<double> x1(point.size());
        std::vector<double> x2(point.size());
        for (int s = 1; s <= 16; ++s) {
            const double a = r.alpha_star * s / 16.0;
            for (std::size_t i = 0; i < point.size(); ++i) {
                x1[i] = point[i] + a * g1[i];
                x2[i] = point[i] + a * g2[i];
            }
            const double diff = loss(x1) - loss(x2);
            worst = std::max(worst, diff);
            if (!(diff < 0.0)) ok = false;
        }
        if (r.alpha_star <= 0.0) ok = false;
        (ok ? t.passed : t.failed) += 1;
        t.worst_margin = std::max(t.worst_margin, worst);
    }
    return report;
}

}  // namespace dnw
