#include "dnw/engine.hpp"

#include "dnw/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace dnw {

Model build_model(const GraphSpec& spec, std::size_t features, std::size_t classes) {
    require(features > 0, ErrorKind::Contract, "model needs at least one input feature");
    require(classes >= 2, ErrorKind::Contract, "model needs at least two classes");
    Model m;
    m.graph = build_graph(spec);
    const auto& topo = m.graph.topology;
    const std::size_t inputs = topo.num_inputs();
    const std::size_t outputs = topo.num_outputs();

    m.io.features = features;
    m.io.classes = classes;
    m.io.in_weight = ParamBlock(inputs * features);
    m.io.in_bias = ParamBlock(inputs);
    m.io.out_weight = ParamBlock(classes * outputs);
    m.io.out_bias = ParamBlock(classes);

    Rng rng(spec.seed ^ 0xD1B54A32D192ED03ULL);
    const double in_scale = std::sqrt(1.0 / static_cast<double>(features));
    for (double& w : m.io.in_weight.value) w = uniform(rng, -in_scale, in_scale);
    const double out_scale = std::sqrt(1.0 / static_cast<double>(outputs));
    for (double& w : m.io.out_weight.value) w = uniform(rng, -out_scale, out_scale);
    return m;
}

namespace {

void node_op_forward(const Model& model, NodeId v, BatchState& st) {
    const auto& spec = model.graph.spec;
    const auto& nodes = model.graph.nodes;
    const std::size_t row = static_cast<std::size_t>(v);
    const std::size_t batch = st.batch;
    auto in = st.I.row(row);
    auto xhat = st.xhat.row(row);
    auto pre = st.pre.row(row);
    auto z = st.Z.row(row);

    if (spec.normalize) {
        double mean = 0.0;
        double var = 0.0;
        if (st.mode == Mode::Train) {
            for (double x : in) mean += x;
            mean /= static_cast<double>(batch);
            for (double x : in) var += (x - mean) * (x - mean);
            var /= static_cast<double>(batch);
        } else {
            mean = nodes.running_mean[row];
            var = nodes.running_var[row];
        }
        st.mean[row] = mean;
        st.var[row] = var;
        st.inv_std[row] = 1.0 / std::sqrt(var + kNormEpsilon);
        for (std::size_t b = 0; b < batch; ++b) xhat[b] = (in[b] - mean) * st.inv_std[row];
    } else {
        st.inv_std[row] = 1.0;
        std::copy(in.begin(), in.end(), xhat.begin());
    }
    const double gamma = nodes.gamma.value[row];
    const double beta = spec.bias ? nodes.beta.value[row] : 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        pre[b] = gamma * xhat[b] + beta;
        z[b] = activate(spec.activation, pre[b]);
    }
}

}  // namespace

BatchState forward(const Model& model, const EdgeSet& edges, const Matrix& features, Mode mode,
                   const ForwardOptions& options) {
    const auto& topo = model.graph.topology;
    const auto& io = model.io;
    require(topo.acyclic(), ErrorKind::Contract, "forward: static evaluation needs an acyclic candidate set");
    require(features.rows == io.features, ErrorKind::Contract, "forward: feature dimension mismatch");
    require(features.cols > 0, ErrorKind::Contract, "forward: empty batch");
    require(edges.mask.size() == topo.num_candidates(), ErrorKind::Contract, "forward: edge set does not match graph");
    const std::span<const double> weights =
        options.weights.empty() ? std::span<const double>(model.graph.store.weights.value) : options.weights;
    require(weights.size() == topo.num_candidates(), ErrorKind::Contract, "forward: weight vector size mismatch");

    const std::size_t n = topo.num_nodes();
    const std::size_t batch = features.cols;
    BatchState st;
    st.mode = mode;
    st.batch = batch;
    st.features = features;
    st.Z = Matrix(n, batch);
    st.I = Matrix(n, batch);
    st.xhat = Matrix(n, batch);
    st.pre = Matrix(n, batch);
    st.dZ = Matrix(n, batch);
    st.dI = Matrix(n, batch);
    st.mean.assign(n, 0.0);
    st.var.assign(n, 0.0);
    st.inv_std.assign(n, 1.0);
    st.edge_mask = edges.mask;
    st.dead = dead_mask(topo, edges);
    if (options.skip.empty()) {
        st.skip.assign(n, 0);
    } else {
        require(options.skip.size() == n, ErrorKind::Contract, "forward: skip mask size mismatch");
        st.skip.assign(options.skip.begin(), options.skip.end());
    }

    const std::size_t inputs = topo.num_inputs();
    const std::size_t nf = io.features;
    for (std::size_t r = 0; r < inputs; ++r) {
        auto z = st.Z.row(r);
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t f = 0; f < nf; ++f) acc += io.in_weight.value[r * nf + f] * features(f, b);
            z[b] = acc + io.in_bias.value[r];
        }
        if (!all_finite(z)) fail(ErrorKind::Numeric, "forward: non-finite state at input node " + std::to_string(r));
    }

    const auto& cands = topo.candidates();
    for (std::size_t v = inputs; v < n; ++v) {
        const auto id = static_cast<NodeId>(v);
        if (st.skip[v]) continue;
        auto in = st.I.row(v);
        for (std::size_t c : topo.in_candidates(id)) {
            if (!edges.mask[c]) continue;
            const double w = weights[c];
            ++st.weight_reads;
            const auto zu = st.Z.row(static_cast<std::size_t>(cands[c].u));
            for (std::size_t b = 0; b < batch; ++b) in[b] += w * zu[b];
        }
        for (const auto& ov : options.overrides) {
            if (ov.node != id) continue;
            require(ov.values.size() == batch, ErrorKind::Contract, "forward: override length mismatch");
            for (std::size_t b = 0; b < batch; ++b) in[b] = ov.add ? in[b] + ov.values[b] : ov.values[b];
        }
        if (topo.is_output(id)) {
            std::copy(in.begin(), in.end(), st.Z.row(v).begin());
            std::copy(in.begin(), in.end(), st.xhat.row(v).begin());
            std::copy(in.begin(), in.end(), st.pre.row(v).begin());
        } else {
            node_op_forward(model, id, st);
        }
        if (!all_finite(st.Z.row(v))) fail(ErrorKind::Numeric, "forward: non-finite state at node " + std::to_string(v));
    }

    const std::size_t outputs = topo.num_outputs();
    const auto first_out = static_cast<std::size_t>(topo.first_output());
    st.logits = Matrix(io.classes, batch);
    for (std::size_t c = 0; c < io.classes; ++c) {
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < outputs; ++j) acc += io.out_weight.value[c * outputs + j] * st.Z(first_out + j, b);
            st.logits(c, b) = acc + io.out_bias.value[c];
        }
    }
    if (!all_finite(st.logits.data)) fail(ErrorKind::Numeric, "forward: non-finite logits");
    return st;
}

Gradients backward(const Model& model, const EdgeSet& edges, BatchState& st, std::span<const int> labels,
                   std::span<const double> weights_override) {
    const auto& topo = model.graph.topology;
    const auto& spec = model.graph.spec;
    const auto& nodes = model.graph.nodes;
    const auto& io = model.io;
    require(st.edge_mask == edges.mask, ErrorKind::Contract, "backward: state was computed with a different edge set");
    require(labels.size() == st.batch, ErrorKind::Contract, "backward: label count differs from the batch size");
    const std::span<const double> weights = weights_override.empty()
                                                ? std::span<const double>(model.graph.store.weights.value)
                                                : weights_override;

    const std::size_t n = topo.num_nodes();
    const std::size_t batch = st.batch;
    const std::size_t outputs = topo.num_outputs();
    const std::size_t inputs = topo.num_inputs();
    const auto first_out = static_cast<std::size_t>(topo.first_output());

    Gradients g;
    auto lg = softmax_ce(st.logits, labels);
    g.loss = lg.loss;
    const Matrix& dlogits = lg.grad;

    g.out_weight.assign(io.out_weight.size(), 0.0);
    g.out_bias.assign(io.out_bias.size(), 0.0);
    for (std::size_t c = 0; c < io.classes; ++c) {
        double bias_acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) bias_acc += dlogits(c, b);
        g.out_bias[c] = bias_acc;
        for (std::size_t j = 0; j < outputs; ++j) g.out_weight[c * outputs + j] = dot(dlogits.row(c), st.Z.row(first_out + j));
    }

    st.dZ.fill(0.0);
    st.dI.fill(0.0);
    for (std::size_t j = 0; j < outputs; ++j) {
        auto dz = st.dZ.row(first_out + j);
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t c = 0; c < io.classes; ++c) acc += io.out_weight.value[c * outputs + j] * dlogits(c, b);
            dz[b] = acc;
        }
    }

    g.gamma.assign(n, 0.0);
    g.beta.assign(n, 0.0);
    const auto& cands = topo.candidates();
    std::vector<double> dxhat(batch);
    for (std::size_t vi = n; vi-- > 0;) {
        const auto v = static_cast<NodeId>(vi);
        auto dz = st.dZ.row(vi);
        if (!topo.is_output(v)) {
            // Pull from children in ascending order.
            for (std::size_t c : topo.out_candidates(v)) {
                if (!edges.mask[c]) continue;
                const double w = weights[c];
                const auto dchild = st.dI.row(static_cast<std::size_t>(cands[c].v));
                for (std::size_t b = 0; b < batch; ++b) dz[b] += w * dchild[b];
            }
        }
        if (topo.is_input(v) || st.skip[vi]) continue;
        auto di = st.dI.row(vi);
        if (topo.is_output(v)) {
            std::copy(dz.begin(), dz.end(), di.begin());
            continue;
        }
        const auto pre = st.pre.row(vi);
        const auto xhat = st.xhat.row(vi);
        const double gamma = nodes.gamma.value[vi];
        double dbeta = 0.0;
        double dgamma = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double dpre = dz[b] * activate_derivative(spec.activation, pre[b]);
            dbeta += dpre;
            dgamma += dpre * xhat[b];
            dxhat[b] = dpre * gamma;
        }
        g.beta[vi] = spec.bias ? dbeta : 0.0;
        g.gamma[vi] = dgamma;
        if (spec.normalize && st.mode == Mode::Train) {
            double s1 = 0.0;
            double s2 = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                s1 += dxhat[b];
                s2 += dxhat[b] * xhat[b];
            }
            const double scale = st.inv_std[vi] / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b)
                di[b] = scale * (static_cast<double>(batch) * dxhat[b] - s1 - xhat[b] * s2);
        } else {
            for (std::size_t b = 0; b < batch; ++b) di[b] = dxhat[b] * st.inv_std[vi];
        }
    }

    const std::size_t nf = io.features;
    g.in_weight.assign(io.in_weight.size(), 0.0);
    g.in_bias.assign(io.in_bias.size(), 0.0);
    for (std::size_t r = 0; r < inputs; ++r) {
        const auto dz = st.dZ.row(r);
        double acc = 0.0;
        for (double x : dz) acc += x;
        g.in_bias[r] = acc;
        for (std::size_t f = 0; f < nf; ++f) g.in_weight[r * nf + f] = dot(dz, st.features.row(f));
    }

    g.edges = edge_gradients(topo, st);
    return g;
}

std::vector<double> edge_gradients(const Topology& topology, const BatchState& st) {
    const auto& cands = topology.candidates();
    std::vector<double> grad(cands.size());
    for (std::size_t c = 0; c < cands.size(); ++c)
        grad[c] = dot(st.Z.row(static_cast<std::size_t>(cands[c].u)), st.dI.row(static_cast<std::size_t>(cands[c].v)));
    return grad;
}

void update_edges(EdgeStore& store, std::span<const double> edge_grad, const SgdSettings& sgd,
                  std::span<const std::uint8_t> active) {
    sgd_update(store.weights, edge_grad, sgd, active);
}

void update_edges(EdgeStore& store, const Topology& topology, const BatchState& state, const SgdSettings& sgd,
                  std::span<const std::uint8_t> active) {
    const auto grad = edge_gradients(topology, state);
    update_edges(store, grad, sgd, active);
}

void update_running_stats(NodeParams& nodes, const Topology& topology, const BatchState& st) {
    if (st.mode != Mode::Train) return;
    for (std::size_t v = 0; v < topology.num_nodes(); ++v) {
        const auto id = static_cast<NodeId>(v);
        if (topology.is_input(id) || topology.is_output(id) || st.skip[v]) continue;
        nodes.running_mean[v] = kRunningMomentum * nodes.running_mean[v] + (1.0 - kRunningMomentum) * st.mean[v];
        nodes.running_var[v] = kRunningMomentum * nodes.running_var[v] + (1.0 - kRunningMomentum) * st.var[v];
    }
}

void validate(const TrainConfig& c) {
    require(c.lr > 0.0, ErrorKind::Config, "train.lr: must be positive");
    require(c.momentum >= 0.0 && c.momentum < 1.0, ErrorKind::Config, "train.momentum: must lie in [0, 1)");
    require(c.weight_decay >= 0.0, ErrorKind::Config, "train.weight_decay: must be non-negative");
    require(c.batch_size >= 1, ErrorKind::Config, "train.batch_size: must be at least 1");
}

Evaluation evaluate(const Model& model, const EdgeSet& edges, const Dataset& data,
                    std::span<const std::size_t> indices) {
    Evaluation e;
    if (indices.empty()) return e;
    constexpr std::size_t chunk = 512;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        const auto part = indices.subspan(start, std::min(chunk, indices.size() - start));
        const Matrix x = gather_features(data, part);
        const auto y = gather_labels(data, part);
        const auto st = forward(model, edges, x, Mode::Eval);
        loss_sum += softmax_ce(st.logits, y).loss * static_cast<double>(part.size());
        for (std::size_t b = 0; b < part.size(); ++b) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < st.logits.rows; ++c)
                if (st.logits(c, b) > st.logits(best, b)) best = c;
            if (static_cast<int>(best) == y[b]) ++correct;
        }
    }
    e.loss = loss_sum / static_cast<double>(indices.size());
    e.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return e;
}

EdgeSet current_edges(const Model& model, const EdgeRule& rule) {
    if (rule.selection == EdgeRule::Selection::Fixed) {
        const auto& w = model.graph.store.weights.value;
        require(rule.fixed.size() == w.size(), ErrorKind::Contract, "fixed edge mask does not match the graph");
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < rule.fixed.size(); ++c)
            if (rule.fixed[c]) idx.push_back(c);
        return edge_set_from_indices(w.size(), std::move(idx), w);
    }
    return select_edges(model.graph.store);
}

StraightThroughMask straight_through_mask(std::span<const double> weights, std::size_t k) {
    StraightThroughMask m;
    const std::size_t n = weights.size();
    m.keep.assign(n, 0);
    k = std::min(k, n);
    if (k == 0) return m;
    std::vector<double> mags(n);
    for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(weights[i]);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    m.tau = mags[k - 1];
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(weights[i]) > m.tau) {
            m.keep[i] = 1;
            ++kept;
        }
    }
    for (std::size_t i = 0; i < n && kept < k; ++i) {
        if (!m.keep[i] && std::abs(weights[i]) == m.tau) {
            m.keep[i] = 1;
            ++kept;
        }
    }
    return m;
}

namespace {

EdgeSet mask_to_set(const std::vector<std::uint8_t>& mask, std::span<const double> weights) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < mask.size(); ++c)
        if (mask[c]) idx.push_back(c);
    return edge_set_from_indices(mask.size(), std::move(idx), weights);
}

double schedule_lr(const TrainConfig& cfg, std::size_t step, std::size_t total) {
    if (!cfg.cosine || total == 0) return cfg.lr;
    const double t = static_cast<double>(step) / static_cast<double>(total);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) {
    return n < batch ? 1 : n / batch;
}

void apply_param_updates(Model& model, const Gradients& g, const TrainConfig& cfg, double lr) {
    SgdSettings io_sgd{lr, cfg.momentum, cfg.io_weight_decay ? cfg.weight_decay : 0.0};
    sgd_update(model.io.in_weight, g.in_weight, io_sgd);
    sgd_update(model.io.in_bias, g.in_bias, io_sgd);
    sgd_update(model.io.out_weight, g.out_weight, io_sgd);
    sgd_update(model.io.out_bias, g.out_bias, io_sgd);
    SgdSettings node_sgd{lr, cfg.momentum, 0.0};
    sgd_update(model.graph.nodes.gamma, g.gamma, node_sgd);
    if (model.graph.spec.bias) sgd_update(model.graph.nodes.beta, g.beta, node_sgd);
}

}  // namespace

std::vector<EpochMetrics> train_loop(Model& model, const Dataset& data, const TrainConfig& cfg, const EdgeRule& rule,
                                     const TrainHooks& hooks, const StepFn& step_fn, const EvalFn& eval_fn) {
    validate(cfg);
    require(!data.train.empty(), ErrorKind::Contract, "train: empty training split");
    require(data.num_features() == model.io.features, ErrorKind::Contract, "train: dataset feature count differs from the model");
    require(data.classes <= model.io.classes, ErrorKind::Contract, "train: dataset has more classes than the model");

    const auto& topo = model.graph.topology;
    EdgeRule active_rule = rule;
    auto edges_now = [&]() { return current_edges(model, active_rule); };

    std::vector<EpochMetrics> records;
    auto record = [&](std::size_t epoch, double train_loss, bool use_eval_loss) {
        const EdgeSet edges = edges_now();
        const auto tr = eval_fn(model, edges, data, data.train);
        const auto te = eval_fn(model, edges, data, data.test);
        const auto dead = dead_mask(topo, edges);
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = use_eval_loss ? tr.loss : train_loss;
        m.train_acc = tr.accuracy;
        m.test_acc = te.accuracy;
        m.active_edges = edges.size();
        m.live_nodes = topo.num_nodes() - static_cast<std::size_t>(std::count(dead.begin(), dead.end(), 1));
        m.k = model.graph.store.k;
        records.push_back(m);
        if (hooks.on_epoch) hooks.on_epoch(m);
    };
    record(0, 0.0, true);

    const std::size_t per_epoch = batches_per_epoch(data.train.size(), cfg.batch_size);
    std::size_t total = cfg.epochs * per_epoch;
    if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
    const std::size_t bsz = std::min(cfg.batch_size, data.train.size());
    const bool real_only =
        rule.selection == EdgeRule::Selection::Fixed || rule.updates == EdgeRule::Updates::RealOnly;

    Rng rng(cfg.seed ^ 0x2545F4914F6CDD1DULL);
    std::vector<std::size_t> order = data.train;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && step < total; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t bi = 0; bi < per_epoch && step < total; ++bi) {
            const std::span<const std::size_t> idx(order.data() + bi * bsz, bsz);
            const Matrix x = gather_features(data, idx);
            const auto y = gather_labels(data, idx);
            const double lr = schedule_lr(cfg, step, total);
            try {
                StepResult r = step_fn(model, x, y, edges_now());
                if (rule.l1 > 0.0) {
                    const auto& w = model.graph.store.weights.value;
                    for (std::size_t c : r.used.indices)
                        r.grads.edges[c] += rule.l1 * (w[c] > 0.0 ? 1.0 : (w[c] < 0.0 ? -1.0 : 0.0));
                }
                apply_param_updates(model, r.grads, cfg, lr);
                const std::span<const std::uint8_t> update_mask =
                    real_only ? std::span<const std::uint8_t>(r.used.mask) : std::span<const std::uint8_t>{};
                update_edges(model.graph.store, r.grads.edges, SgdSettings{lr, cfg.momentum, cfg.weight_decay},
                             update_mask);
                loss_sum += r.grads.loss;
                ++batches;
                ++step;
                ++model.iteration;
                if (hooks.on_step) hooks.on_step(model.iteration, r.used, model);
            } catch (const Error& e) {
                throw Error(e.kind(), "iteration " + std::to_string(model.iteration) + ": " + e.what());
            }
        }
        if (rule.after_epoch) rule.after_epoch(epoch, active_rule.fixed, model.graph.store);
        record(epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, false);
    }
    return records;
}

namespace {

StepResult explicit_step(Model& model, const Matrix& x, std::span<const int> y, const EdgeSet& edges) {
    StepResult r;
    r.used = edges;
    auto state = forward(model, r.used, x, Mode::Train);
    r.grads = backward(model, r.used, state, y);
    update_running_stats(model.graph.nodes, model.graph.topology, state);
    return r;
}

StepResult straight_through_step(Model& model, const Matrix& x, std::span<const int> y, const EdgeSet&) {
    const auto& topo = model.graph.topology;
    const auto& w = model.graph.store.weights.value;
    const auto st_mask = straight_through_mask(w, model.graph.store.k);
    std::vector<double> masked(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) masked[c] = st_mask.keep[c] ? w[c] : 0.0;

    StepResult r;
    r.used = mask_to_set(st_mask.keep, w);
    const EdgeSet every = mask_to_set(std::vector<std::uint8_t>(w.size(), 1), masked);
    ForwardOptions opt;
    opt.weights = masked;
    auto state = forward(model, every, x, Mode::Train, opt);
    // h is the identity on the way back, so dL/dw = dL/dh(w) = <Z_u, dL/dI_v>.
    r.grads = backward(model, every, state, y, masked);
    update_running_stats(model.graph.nodes, topo, state);
    return r;
}

}  // namespace

std::vector<EpochMetrics> train(Model& model, const Dataset& data, const TrainConfig& config, const EdgeRule& rule,
                                const TrainHooks& hooks) {
    return train_loop(model, data, config, rule, hooks, explicit_step, evaluate);
}

std::vector<EpochMetrics> st_train(Model& model, const Dataset& data, const TrainConfig& config,
                                   const TrainHooks& hooks) {
    return train_loop(model, data, config, EdgeRule{}, hooks, straight_through_step, evaluate);
}

}  // namespace dnw
