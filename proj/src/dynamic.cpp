#include "dnw/dynamic.hpp"

#include "dnw/error.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace dnw {

namespace {

void add_scaled(Matrix& y, double s, const Matrix& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += s * x.data[i];
}

Matrix plus_scaled(const Matrix& y, double s, const Matrix& x) {
    Matrix r = y;
    add_scaled(r, s, x);
    return r;
}

std::string time_label(double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "t=%.6g", t);
    return buf;
}

std::size_t rk4_steps(double t0, double t1, double h) {
    return static_cast<std::size_t>(std::ceil((t1 - t0) / h - 1e-9));
}

// One classical RK4 step; `f(x, t)` is evaluated four times in stage order.
template <typename F>
Matrix rk4_step(const Matrix& y, double t, double h, F&& f) {
    const Matrix k1 = f(y, t);
    const Matrix k2 = f(plus_scaled(y, h / 2, k1), t + h / 2);
    const Matrix k3 = f(plus_scaled(y, h / 2, k2), t + h / 2);
    const Matrix k4 = f(plus_scaled(y, h, k3), t + h);
    Matrix next = y;
    for (std::size_t i = 0; i < next.data.size(); ++i)
        next.data[i] += h / 6 * (k1.data[i] + 2 * k2.data[i] + 2 * k3.data[i] + k4.data[i]);
    return next;
}

struct StageContext {
    const Model& model;
    std::span<const std::uint8_t> mask;
    std::span<const double> weights;
    std::span<const std::uint8_t> dead;
};

// Applies f row-wise to s.I (already filled), writing xhat, pre, out, inv_std.
void apply_node_op(const Model& model, std::span<const std::uint8_t> dead, StageCache& s, const std::string& when) {
    const auto& topo = model.graph.topology;
    const auto& spec = model.graph.spec;
    const auto& nodes = model.graph.nodes;
    const std::size_t n = topo.num_nodes();
    const std::size_t batch = s.I.cols;
    s.xhat = Matrix(n, batch);
    s.pre = Matrix(n, batch);
    s.out = Matrix(n, batch);
    s.inv_std.assign(n, 1.0);
    for (std::size_t v = 0; v < n; ++v) {
        if (dead[v]) continue;
        const auto in = s.I.row(v);
        auto out = s.out.row(v);
        if (topo.is_output(static_cast<NodeId>(v))) {
            std::copy(in.begin(), in.end(), out.begin());
        } else {
            auto xhat = s.xhat.row(v);
            auto pre = s.pre.row(v);
            if (spec.normalize) {
                double mean = 0.0;
                double var = 0.0;
                for (double x : in) mean += x;
                mean /= static_cast<double>(batch);
                for (double x : in) var += (x - mean) * (x - mean);
                var /= static_cast<double>(batch);
                s.inv_std[v] = 1.0 / std::sqrt(var + kNormEpsilon);
                for (std::size_t b = 0; b < batch; ++b) xhat[b] = (in[b] - mean) * s.inv_std[v];
            } else {
                std::copy(in.begin(), in.end(), xhat.begin());
            }
            const double gamma = nodes.gamma.value[v];
            const double beta = spec.bias ? nodes.beta.value[v] : 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                pre[b] = gamma * xhat[b] + beta;
                out[b] = activate(spec.activation, pre[b]);
            }
        }
        if (!all_finite(out)) fail(ErrorKind::Numeric, "dynamic: non-finite state at node " + std::to_string(v) + " (" + when + ")");
    }
}

// F(x) = f(A x) with I_v summed over real in-edges in ascending u.
void eval_stage(const StageContext& ctx, StageCache& s, const std::string& when) {
    const auto& topo = ctx.model.graph.topology;
    const auto& cands = topo.candidates();
    const std::size_t n = topo.num_nodes();
    const std::size_t batch = s.x.cols;
    s.I = Matrix(n, batch);
    for (std::size_t v = 0; v < n; ++v) {
        if (ctx.dead[v]) continue;
        auto in = s.I.row(v);
        for (std::size_t c : topo.in_candidates(static_cast<NodeId>(v))) {
            if (!ctx.mask[c]) continue;
            const double w = ctx.weights[c];
            const auto xu = s.x.row(static_cast<std::size_t>(cands[c].u));
            for (std::size_t b = 0; b < batch; ++b) in[b] += w * xu[b];
        }
    }
    apply_node_op(ctx.model, ctx.dead, s, when);
}

// Vector-Jacobian product of one stage. Accumulates edge and node-parameter
// gradients and returns dL/dx.
Matrix stage_vjp(const StageContext& ctx, const StageCache& s, const Matrix& dout, Gradients& g) {
    const auto& topo = ctx.model.graph.topology;
    const auto& spec = ctx.model.graph.spec;
    const auto& nodes = ctx.model.graph.nodes;
    const auto& cands = topo.candidates();
    const std::size_t n = topo.num_nodes();
    const std::size_t batch = s.x.cols;
    Matrix dI(n, batch);
    std::vector<double> dxhat(batch);
    for (std::size_t v = 0; v < n; ++v) {
        if (ctx.dead[v]) continue;
        const auto dz = dout.row(v);
        auto di = dI.row(v);
        if (topo.is_output(static_cast<NodeId>(v))) {
            std::copy(dz.begin(), dz.end(), di.begin());
            continue;
        }
        const auto pre = s.pre.row(v);
        const auto xhat = s.xhat.row(v);
        const double gamma = nodes.gamma.value[v];
        double dbeta = 0.0;
        double dgamma = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double dpre = dz[b] * activate_derivative(spec.activation, pre[b]);
            dbeta += dpre;
            dgamma += dpre * xhat[b];
            dxhat[b] = dpre * gamma;
        }
        if (spec.bias) g.beta[v] += dbeta;
        g.gamma[v] += dgamma;
        if (spec.normalize) {
            double s1 = 0.0;
            double s2 = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                s1 += dxhat[b];
                s2 += dxhat[b] * xhat[b];
            }
            const double scale = s.inv_std[v] / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b)
                di[b] = scale * (static_cast<double>(batch) * dxhat[b] - s1 - xhat[b] * s2);
        } else {
            for (std::size_t b = 0; b < batch; ++b) di[b] = dxhat[b] * s.inv_std[v];
        }
    }
    for (std::size_t c = 0; c < cands.size(); ++c)
        g.edges[c] += dot(s.x.row(static_cast<std::size_t>(cands[c].u)), dI.row(static_cast<std::size_t>(cands[c].v)));

    Matrix dx(n, batch);
    for (std::size_t u = 0; u < n; ++u) {
        auto du = dx.row(u);
        for (std::size_t c : topo.out_candidates(static_cast<NodeId>(u))) {
            if (!ctx.mask[c]) continue;
            const double w = ctx.weights[c];
            const auto dchild = dI.row(static_cast<std::size_t>(cands[c].v));
            for (std::size_t b = 0; b < batch; ++b) du[b] += w * dchild[b];
        }
    }
    return dx;
}

}  // namespace

AdjacencyMatrix adjacency(const Topology& topology, const EdgeSet& edges, std::span<const double> weights) {
    require(edges.mask.size() == topology.num_candidates() && weights.size() == topology.num_candidates(),
            ErrorKind::Contract, "adjacency: edge set does not match the graph");
    const std::size_t n = topology.num_nodes();
    AdjacencyMatrix a(n, n);
    for (std::size_t c : edges.indices) {
        const auto& e = topology.candidates()[c];
        a(static_cast<std::size_t>(e.v), static_cast<std::size_t>(e.u)) = weights[c];
    }
    return a;
}

Matrix step_discrete(const Matrix& state, const AdjacencyMatrix& a, const NodeFn& f, std::size_t step) {
    require(a.rows == a.cols && a.cols == state.rows, ErrorKind::Contract, "step_discrete: shape mismatch");
    Matrix next = f(matmul(a, state), static_cast<double>(step));
    require(next.rows == state.rows && next.cols == state.cols, ErrorKind::Contract,
            "step_discrete: node function changed the state shape");
    if (!all_finite(next.data))
        fail(ErrorKind::Numeric, "step_discrete: non-finite state after step " + std::to_string(step + 1));
    return next;
}

AdjacencyMatrix embed_mlp(std::span<const Matrix> layers) {
    require(!layers.empty(), ErrorKind::Contract, "embed_mlp: no layers");
    std::vector<std::size_t> dims{layers.front().cols};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        require(layers[i].cols == dims.back(), ErrorKind::Contract,
                "embed_mlp: layer " + std::to_string(i) + " expects input dimension " + std::to_string(layers[i].cols) +
                    " but the previous layer produces " + std::to_string(dims.back()));
        dims.push_back(layers[i].rows);
    }
    std::vector<std::size_t> offset{0};
    for (std::size_t d : dims) offset.push_back(offset.back() + d);
    AdjacencyMatrix g(offset.back(), offset.back());
    for (std::size_t i = 0; i < layers.size(); ++i)
        for (std::size_t r = 0; r < layers[i].rows; ++r)
            for (std::size_t c = 0; c < layers[i].cols; ++c) g(offset[i + 1] + r, offset[i] + c) = layers[i](r, c);
    return g;
}

Trajectory integrate(const Matrix& state0, const AdjacencyMatrix& a, const NodeFn& f, double t0, double t1, double h) {
    require(h > 0.0, ErrorKind::InvalidRange, "integrate: step size must be positive");
    require(t1 > t0, ErrorKind::InvalidRange, "integrate: t1 must exceed t0");
    require(a.rows == a.cols && a.cols == state0.rows, ErrorKind::Contract, "integrate: shape mismatch");
    const std::size_t n = rk4_steps(t0, t1, h);
    const double step = (t1 - t0) / static_cast<double>(n);
    Trajectory tr;
    tr.times.push_back(t0);
    tr.states.push_back(state0);
    auto rhs = [&](const Matrix& x, double t) {
        Matrix d = f(matmul(a, x), t);
        if (!all_finite(d.data)) fail(ErrorKind::Numeric, "integrate: non-finite derivative at " + time_label(t));
        return d;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) * step;
        Matrix next = rk4_step(tr.states.back(), t, step, rhs);
        const double t_next = t0 + static_cast<double>(i + 1) * step;
        if (!all_finite(next.data)) fail(ErrorKind::Numeric, "integrate: non-finite state at " + time_label(t_next));
        tr.times.push_back(t_next);
        tr.states.push_back(std::move(next));
    }
    return tr;
}

NodeFn node_function(const Model& model, std::span<const std::uint8_t> dead) {
    require(dead.size() == model.graph.topology.num_nodes(), ErrorKind::Contract,
            "node_function: dead mask size mismatch");
    std::vector<std::uint8_t> dead_copy(dead.begin(), dead.end());
    return [&model, dead_copy](const Matrix& inputs, double t) {
        require(inputs.rows == dead_copy.size(), ErrorKind::Contract, "node_function: input row count mismatch");
        StageCache s;
        s.I = inputs;
        apply_node_op(model, dead_copy, s, time_label(t));
        return std::move(s.out);
    };
}

void validate(const DynamicConfig& c) {
    require(c.h > 0.0, ErrorKind::Config, "dynamic.h: must be positive");
    require(c.t1 > 0.0, ErrorKind::Config, "dynamic.t1: must be positive");
}

DynamicPass dynamic_forward(const Model& model, const EdgeSet& edges, const Matrix& features,
                            const DynamicConfig& config, std::span<const double> weights) {
    validate(config);
    const auto& topo = model.graph.topology;
    const auto& io = model.io;
    require(features.rows == io.features, ErrorKind::Contract, "dynamic: feature dimension mismatch");
    require(features.cols > 0, ErrorKind::Contract, "dynamic: empty batch");
    require(edges.mask.size() == topo.num_candidates(), ErrorKind::Contract, "dynamic: edge set does not match graph");
    if (weights.empty()) weights = model.graph.store.weights.value;
    require(weights.size() == topo.num_candidates(), ErrorKind::Contract, "dynamic: weight vector size mismatch");

    DynamicPass p;
    p.config = config;
    p.features = features;
    p.dead = dead_mask(topo, edges);
    p.edge_mask = edges.mask;
    p.weights.assign(weights.begin(), weights.end());
    const std::size_t n = topo.num_nodes();
    const std::size_t batch = features.cols;
    const std::vector<std::uint8_t> none(n, 0);
    const StageContext ctx{model, p.edge_mask, p.weights, none};

    Matrix y(n, batch);
    const std::size_t nf = io.features;
    for (std::size_t r = 0; r < topo.num_inputs(); ++r) {
        auto z = y.row(r);
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t f = 0; f < nf; ++f) acc += io.in_weight.value[r * nf + f] * features(f, b);
            z[b] = acc + io.in_bias.value[r];
        }
        if (!all_finite(z)) fail(ErrorKind::Numeric, "dynamic: non-finite state at input node " + std::to_string(r));
    }

    auto evaluate_f = [&](const Matrix& x, double t, const std::string& when) {
        StageCache s;
        s.time = t;
        s.x = x;
        eval_stage(ctx, s, when);
        Matrix out = s.out;
        p.stages.push_back(std::move(s));
        return out;
    };

    if (config.mode == DynamicMode::Discrete) {
        p.steps = config.steps == 0 ? topo.num_blocks() - 1 : config.steps;
        for (std::size_t l = 0; l < p.steps; ++l)
            y = evaluate_f(y, static_cast<double>(l), "step " + std::to_string(l + 1));
    } else {
        p.steps = rk4_steps(0.0, config.t1, config.h);
        p.h = config.t1 / static_cast<double>(p.steps);
        for (std::size_t i = 0; i < p.steps; ++i) {
            const double t = static_cast<double>(i) * p.h;
            y = rk4_step(y, t, p.h, [&](const Matrix& x, double ts) { return evaluate_f(x, ts, time_label(ts)); });
            if (!all_finite(y.data))
                fail(ErrorKind::Numeric, "dynamic: non-finite state at " + time_label(static_cast<double>(i + 1) * p.h));
        }
    }
    p.final_state = std::move(y);

    const std::size_t outputs = topo.num_outputs();
    const auto first_out = static_cast<std::size_t>(topo.first_output());
    p.logits = Matrix(io.classes, batch);
    for (std::size_t c = 0; c < io.classes; ++c) {
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < outputs; ++j)
                acc += io.out_weight.value[c * outputs + j] * p.final_state(first_out + j, b);
            p.logits(c, b) = acc + io.out_bias.value[c];
        }
    }
    if (!all_finite(p.logits.data)) fail(ErrorKind::Numeric, "dynamic: non-finite logits");
    return p;
}

Gradients dynamic_backward(const Model& model, const EdgeSet& edges, const DynamicPass& p,
                           std::span<const int> labels) {
    const auto& topo = model.graph.topology;
    const auto& io = model.io;
    require(p.edge_mask == edges.mask, ErrorKind::Contract, "dynamic_backward: pass was computed with a different edge set");
    const std::size_t batch = p.features.cols;
    require(labels.size() == batch, ErrorKind::Contract, "dynamic_backward: label count differs from the batch size");
    const std::size_t n = topo.num_nodes();
    const std::size_t outputs = topo.num_outputs();
    const auto first_out = static_cast<std::size_t>(topo.first_output());
    const std::vector<std::uint8_t> none(n, 0);
    const StageContext ctx{model, p.edge_mask, p.weights, none};

    Gradients g;
    auto lg = softmax_ce(p.logits, labels);
    g.loss = lg.loss;
    const Matrix& dlogits = lg.grad;
    g.edges.assign(topo.num_candidates(), 0.0);
    g.gamma.assign(n, 0.0);
    g.beta.assign(n, 0.0);
    g.out_weight.assign(io.out_weight.size(), 0.0);
    g.out_bias.assign(io.out_bias.size(), 0.0);
    for (std::size_t c = 0; c < io.classes; ++c) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) acc += dlogits(c, b);
        g.out_bias[c] = acc;
        for (std::size_t j = 0; j < outputs; ++j)
            g.out_weight[c * outputs + j] = dot(dlogits.row(c), p.final_state.row(first_out + j));
    }

    Matrix ybar(n, batch);
    for (std::size_t j = 0; j < outputs; ++j) {
        auto dz = ybar.row(first_out + j);
        for (std::size_t b = 0; b < batch; ++b) {
            double acc = 0.0;
            for (std::size_t c = 0; c < io.classes; ++c) acc += io.out_weight.value[c * outputs + j] * dlogits(c, b);
            dz[b] = acc;
        }
    }

    if (p.config.mode == DynamicMode::Discrete) {
        for (std::size_t l = p.steps; l-- > 0;) ybar = stage_vjp(ctx, p.stages[l], ybar, g);
    } else {
        const double h = p.h;
        for (std::size_t i = p.steps; i-- > 0;) {
            const StageCache* st = &p.stages[4 * i];
            Matrix k1 = ybar, k2 = ybar, k3 = ybar, k4 = ybar;
            for (auto& x : k1.data) x *= h / 6;
            for (auto& x : k2.data) x *= h / 3;
            for (auto& x : k3.data) x *= h / 3;
            for (auto& x : k4.data) x *= h / 6;
            Matrix next = ybar;
            const Matrix x4 = stage_vjp(ctx, st[3], k4, g);
            add_scaled(next, 1.0, x4);
            add_scaled(k3, h, x4);
            const Matrix x3 = stage_vjp(ctx, st[2], k3, g);
            add_scaled(next, 1.0, x3);
            add_scaled(k2, h / 2, x3);
            const Matrix x2 = stage_vjp(ctx, st[1], k2, g);
            add_scaled(next, 1.0, x2);
            add_scaled(k1, h / 2, x2);
            const Matrix x1 = stage_vjp(ctx, st[0], k1, g);
            add_scaled(next, 1.0, x1);
            ybar = std::move(next);
        }
    }

    const std::size_t nf = io.features;
    g.in_weight.assign(io.in_weight.size(), 0.0);
    g.in_bias.assign(io.in_bias.size(), 0.0);
    for (std::size_t r = 0; r < topo.num_inputs(); ++r) {
        const auto dz = ybar.row(r);
        double acc = 0.0;
        for (double x : dz) acc += x;
        g.in_bias[r] = acc;
        for (std::size_t f = 0; f < nf; ++f) g.in_weight[r * nf + f] = dot(dz, p.features.row(f));
    }
    return g;
}

Evaluation evaluate_dynamic(const Model& model, const EdgeSet& edges, const Dataset& data,
                            std::span<const std::size_t> indices, const DynamicConfig& config) {
    Evaluation e;
    if (indices.empty()) return e;
    const Matrix x = gather_features(data, indices);
    const auto y = gather_labels(data, indices);
    const auto p = dynamic_forward(model, edges, x, config);
    e.loss = softmax_ce(p.logits, y).loss;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.logits.rows; ++c)
            if (p.logits(c, b) > p.logits(best, b)) best = c;
        if (static_cast<int>(best) == y[b]) ++correct;
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return e;
}

std::vector<EpochMetrics> train_dynamic(Model& model, const Dataset& data, const TrainConfig& train,
                                        const DynamicConfig& config, const EdgeRule& rule, const TrainHooks& hooks) {
    validate(config);
    auto step = [&config](Model& m, const Matrix& x, std::span<const int> y, const EdgeSet& edges) {
        StepResult r;
        r.used = edges;
        const auto pass = dynamic_forward(m, edges, x, config);
        r.grads = dynamic_backward(m, edges, pass, y);
        return r;
    };
    auto eval = [&config](const Model& m, const EdgeSet& edges, const Dataset& d, std::span<const std::size_t> idx) {
        return evaluate_dynamic(m, edges, d, idx, config);
    };
    return train_loop(model, data, train, rule, hooks, step, eval);
}

}  // namespace dnw
