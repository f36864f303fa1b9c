#include "dnw/sparse.hpp"

#include "dnw/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace dnw {

std::size_t keep_count(std::size_t n, double fraction) {
    require(fraction > 0.0 && fraction <= 1.0, ErrorKind::Contract, "keep fraction must lie in (0, 1]");
    const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
    return std::min(n, static_cast<std::size_t>(std::max(raw, 0.0)));
}

std::vector<std::uint8_t> mask_topk_fraction(std::span<const double> weights, double fraction) {
    const std::size_t keep = keep_count(weights.size(), fraction);
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        const double ma = std::abs(weights[a]);
        const double mb = std::abs(weights[b]);
        return ma != mb ? ma > mb : a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);
    std::vector<std::uint8_t> mask(weights.size(), 0);
    for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = 1;
    return mask;
}

std::size_t MaskedLayer::active() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

SparseNet build_sparse_net(const SparseConfig& config) {
    require(config.layers.size() >= 2, ErrorKind::Config, "sparse.layers: need at least input and output widths");
    for (int w : config.layers) require(w > 0, ErrorKind::Config, "sparse.layers: widths must be positive");
    require(config.keep_fraction > 0.0 && config.keep_fraction <= 1.0, ErrorKind::Config,
            "sparse.keep_fraction: must lie in (0, 1]");
    SparseNet net;
    net.config = config;
    Rng rng(config.seed ^ 0x9FB21C651E98DF25ULL);
    for (std::size_t l = 0; l + 1 < config.layers.size(); ++l) {
        MaskedLayer layer;
        layer.in = static_cast<std::size_t>(config.layers[l]);
        layer.out = static_cast<std::size_t>(config.layers[l + 1]);
        layer.keep_fraction = (l == 0 && config.dense_first_layer) ? 1.0 : config.keep_fraction;
        layer.weight = ParamBlock(layer.in * layer.out);
        layer.bias = ParamBlock(layer.out);
        const double scale = std::sqrt(1.0 / static_cast<double>(layer.in));
        for (double& w : layer.weight.value) w = uniform(rng, -scale, scale);
        if (config.policy == MaskPolicy::FrozenRandom) {
            std::vector<std::size_t> order(layer.weight.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            shuffle(order, rng);
            layer.mask.assign(order.size(), 0);
            const std::size_t keep = keep_count(order.size(), layer.keep_fraction);
            for (std::size_t i = 0; i < keep; ++i) layer.mask[order[i]] = 1;
        } else {
            layer.mask = mask_topk_fraction(layer.weight.value, layer.keep_fraction);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

// Activations per layer: acts[0] = input, acts[l + 1] = output of layer l
// (post-activation for hidden layers, logits for the last).
struct Trace {
    std::vector<Matrix> acts;
    std::vector<Matrix> pre;
};

Trace run_forward(const SparseNet& net, const Matrix& x) {
    Trace t;
    t.acts.push_back(x);
    const std::size_t batch = x.cols;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const Matrix& h = t.acts.back();
        require(h.rows == layer.in, ErrorKind::Contract, "sparse: input width mismatch at layer " + std::to_string(l));
        Matrix pre(layer.out, batch);
        for (std::size_t o = 0; o < layer.out; ++o) {
            auto row = pre.row(o);
            for (std::size_t i = 0; i < layer.in; ++i) {
                const std::size_t idx = o * layer.in + i;
                if (!layer.mask[idx]) continue;
                const double w = layer.weight.value[idx];
                const auto hi = h.row(i);
                for (std::size_t b = 0; b < batch; ++b) row[b] += w * hi[b];
            }
            for (std::size_t b = 0; b < batch; ++b) row[b] += layer.bias.value[o];
        }
        const bool last = l + 1 == net.layers.size();
        Matrix act = pre;
        if (!last)
            for (double& v : act.data) v = activate(net.config.activation, v);
        if (!all_finite(act.data)) fail(ErrorKind::Numeric, "sparse: non-finite activation in layer " + std::to_string(l));
        t.pre.push_back(std::move(pre));
        t.acts.push_back(std::move(act));
    }
    return t;
}

}  // namespace

Matrix sparse_forward(const SparseNet& net, const Matrix& features) { return run_forward(net, features).acts.back(); }

SparseStep sparse_step(SparseNet& net, const Matrix& features, std::span<const int> labels, const SgdSettings& sgd) {
    SparseStep out;
    if (net.config.policy == MaskPolicy::Magnitude)
        for (auto& layer : net.layers) layer.mask = mask_topk_fraction(layer.weight.value, layer.keep_fraction);
    for (const auto& layer : net.layers) out.active.push_back(layer.active());

    const Trace t = run_forward(net, features);
    auto lg = softmax_ce(t.acts.back(), labels);
    out.loss = lg.loss;
    const std::size_t batch = features.cols;
    Matrix delta = std::move(lg.grad);  // dL/dpre of the current layer
    std::vector<std::vector<double>> wgrad(net.layers.size());
    std::vector<std::vector<double>> bgrad(net.layers.size());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const Matrix& h = t.acts[l];
        // Dense gradient for every entry, as if all weights were present.
        wgrad[l].assign(layer.weight.size(), 0.0);
        bgrad[l].assign(layer.out, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const auto d = delta.row(o);
            double acc = 0.0;
            for (double v : d) acc += v;
            bgrad[l][o] = acc;
            for (std::size_t i = 0; i < layer.in; ++i) wgrad[l][o * layer.in + i] = dot(d, h.row(i));
        }
        if (l == 0) break;
        // Propagate only through the weights used in the forward pass.
        Matrix prev(layer.in, batch);
        for (std::size_t i = 0; i < layer.in; ++i) {
            auto row = prev.row(i);
            for (std::size_t o = 0; o < layer.out; ++o) {
                const std::size_t idx = o * layer.in + i;
                if (!layer.mask[idx]) continue;
                const double w = layer.weight.value[idx];
                const auto d = delta.row(o);
                for (std::size_t b = 0; b < batch; ++b) row[b] += w * d[b];
            }
            const auto pre = t.pre[l - 1].row(i);
            for (std::size_t b = 0; b < batch; ++b) row[b] *= activate_derivative(net.config.activation, pre[b]);
        }
        delta = std::move(prev);
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        const std::span<const std::uint8_t> active = net.config.policy == MaskPolicy::FrozenRandom
                                                         ? std::span<const std::uint8_t>(layer.mask)
                                                         : std::span<const std::uint8_t>{};
        sgd_update(layer.weight, wgrad[l], sgd, active);
        sgd_update(layer.bias, bgrad[l], SgdSettings{sgd.lr, sgd.momentum, 0.0});
    }
    return out;
}

Evaluation evaluate_sparse(const SparseNet& net, const Dataset& data, std::span<const std::size_t> indices) {
    Evaluation e;
    if (indices.empty()) return e;
    const Matrix x = gather_features(data, indices);
    const auto y = gather_labels(data, indices);
    const Matrix logits = sparse_forward(net, x);
    e.loss = softmax_ce(logits, y).loss;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.rows; ++c)
            if (logits(c, b) > logits(best, b)) best = c;
        if (static_cast<int>(best) == y[b]) ++correct;
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return e;
}

std::vector<EpochMetrics> train_sparse(SparseNet& net, const Dataset& data, const TrainConfig& cfg,
                                       const SparseHooks& hooks) {
    validate(cfg);
    require(!data.train.empty(), ErrorKind::Contract, "train: empty training split");
    require(static_cast<std::size_t>(net.config.layers.front()) == data.num_features(), ErrorKind::Contract,
            "sparse: first layer width differs from the feature count");
    require(static_cast<std::size_t>(net.config.layers.back()) >= data.classes, ErrorKind::Contract,
            "sparse: last layer narrower than the class count");

    std::vector<EpochMetrics> records;
    auto record = [&](std::size_t epoch, double train_loss, bool use_eval_loss) {
        const auto tr = evaluate_sparse(net, data, data.train);
        const auto te = evaluate_sparse(net, data, data.test);
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = use_eval_loss ? tr.loss : train_loss;
        m.train_acc = tr.accuracy;
        m.test_acc = te.accuracy;
        for (const auto& layer : net.layers) {
            m.active_edges += layer.active();
            m.k += keep_count(layer.weight.size(), layer.keep_fraction);
        }
        for (std::size_t l = 1; l + 1 < net.config.layers.size(); ++l)
            m.live_nodes += static_cast<std::size_t>(net.config.layers[l]);
        records.push_back(m);
        if (hooks.on_epoch) hooks.on_epoch(m);
    };
    record(0, 0.0, true);

    const std::size_t per_epoch = data.train.size() < cfg.batch_size ? 1 : data.train.size() / cfg.batch_size;
    std::size_t total = cfg.epochs * per_epoch;
    if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
    const std::size_t bsz = std::min(cfg.batch_size, data.train.size());
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
            double lr = cfg.lr;
            if (cfg.cosine && total > 0)
                lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
            try {
                const auto s = sparse_step(net, x, y, SgdSettings{lr, cfg.momentum, cfg.weight_decay});
                loss_sum += s.loss;
                ++batches;
                ++step;
                if (hooks.on_step) hooks.on_step(step, s);
            } catch (const Error& e) {
                throw Error(e.kind(), "iteration " + std::to_string(step) + ": " + e.what());
            }
        }
        if (net.config.policy == MaskPolicy::Magnitude)
            for (auto& layer : net.layers) layer.mask = mask_topk_fraction(layer.weight.value, layer.keep_fraction);
        record(epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, false);
    }
    return records;
}

}  // namespace dnw
