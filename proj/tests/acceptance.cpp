// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include "dnw/checkpoint.hpp"
#include "dnw/dynamic.hpp"
#include "dnw/harness.hpp"
#include "dnw/sparse.hpp"
#include "dnw/verify.hpp"

#include "reference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

using namespace dnw;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string config_path(const char* name) { return std::string(DNW_CONFIG_DIR) + "/" + name; }

Outcome edge_conservation() {
    const auto t0 = Clock::now();
    Rng rng(101);
    const auto data = gen_spirals(100, 2, 0.1, 7);
    std::size_t violations = 0, iterations = 0;
    for (int g = 0; g < 20; ++g) {
        GraphSpec s;
        std::size_t total = 0;
        while (s.blocks.size() < 2 || (total < 28 && rng.below(4) != 0)) {
            const int b = 1 + static_cast<int>(rng.below(std::min<std::size_t>(8, 32 - total - 1)));
            if (total + static_cast<std::size_t>(b) > 31) break;
            s.blocks.push_back(b);
            total += static_cast<std::size_t>(b);
        }
        if (s.blocks.size() < 2) s.blocks.push_back(1);
        s.connectivity = g % 2 ? Connectivity::Layered : Connectivity::Dag;
        s.k = 1 + rng.below(candidate_count(s.blocks, s.connectivity));
        s.seed = rng.next_u64();
        s.activation = g % 3 ? Activation::Relu : Activation::Tanh;
        Model m = build_model(s, 2, 2);
        TrainConfig t;
        t.lr = 0.05;
        t.batch_size = 16;
        t.epochs = 1000;
        t.max_steps = 200;
        t.seed = static_cast<std::uint64_t>(g);
        TrainHooks hooks;
        hooks.on_step = [&](std::size_t, const EdgeSet& e, const Model& mm) {
            ++iterations;
            std::size_t ones = 0;
            for (auto f : e.mask) ones += f;
            if (e.size() != s.k || ones != s.k || select_edges(mm.graph.store).size() != s.k) ++violations;
        };
        train(m, data, t, {}, hooks);
    }
    const double secs = seconds_since(t0);
    return {violations == 0 && iterations == 20 * 200 && secs < 30.0,
            fmt("%.0f iterations, %.0f violations, %.2f s", static_cast<double>(iterations),
                static_cast<double>(violations), secs)};
}

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    Rng rng(202);
    double worst = 0.0;
    for (int g = 0; g < 50; ++g) {
        auto p = ref::random_problem(rng, 20, 8, g % 3 == 2 ? Activation::Relu : Activation::Tanh, g % 5 != 4);
        worst = std::max(worst, ref::worst_gradient_error(p, 1e-5));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-5 && secs < 120.0, fmt("max rel err %.3g over 50 graphs, %.2f s", worst, secs)};
}

Outcome straight_through() {
    const auto data = gen_spirals(200, 2, 0.1, 3);
    GraphSpec s;
    s.blocks = {4, 8, 8, 4};
    s.k = 40;
    s.seed = 3;
    TrainConfig t;
    t.lr = 0.05;
    t.batch_size = 16;
    t.epochs = 100;
    t.max_steps = 50;
    t.seed = 3;
    t.make_plain();
    Model a = build_model(s, 2, 2);
    Model b = a;
    train(a, data, t);
    st_train(b, data, t);
    double diff = 0.0;
    for (std::size_t c = 0; c < a.graph.store.size(); ++c)
        diff = std::max(diff, std::abs(a.graph.store.weights.value[c] - b.graph.store.weights.value[c]));
    const bool moved = a.graph.store.weights.value != build_model(s, 2, 2).graph.store.weights.value;
    return {diff < 1e-9 && moved && a.iteration == 50, fmt("max weight discrepancy %.3g after %.0f steps", diff,
                                                            static_cast<double>(a.iteration))};
}

Outcome swap_claim() {
    const auto t0 = Clock::now();
    VerifyOptions o;
    o.swap_scenarios = 1000;
    o.general_scenarios = 500;
    o.descent_trials = 0;
    o.seed = 999;
    const auto r = run_verification(o);
    const double secs = seconds_since(t0);
    const bool pass = r.swap.accepted >= 1000 && r.swap_general.accepted >= 500 && r.swap.failed == 0 &&
                      r.swap_general.failed == 0 && r.swap.disagreements == 0 && r.swap_general.disagreements == 0 &&
                      secs < 120.0;
    return {pass, fmt("simple %.0f accepted / %.0f failed, general %.0f accepted / %.0f failed", static_cast<double>(r.swap.accepted),
                      static_cast<double>(r.swap.failed + r.swap.disagreements), static_cast<double>(r.swap_general.accepted),
                      static_cast<double>(r.swap_general.failed + r.swap_general.disagreements)) +
                      fmt(", %.2f s", secs)};
}

// Random softmax cross-entropy losses over a logit block; the implication is
// re-checked independently on a grid below the reported alpha*.
Outcome descent() {
    Rng rng(303);
    std::size_t trials = 0, accepted = 0, violated = 0;
    while (accepted < 1000) {
        ++trials;
        const std::size_t classes = 2 + rng.below(3), batch = 1 + rng.below(6);
        std::vector<int> labels(batch);
        for (auto& y : labels) y = static_cast<int>(rng.below(classes));
        const ScalarFn loss = [&](std::span<const double> v) {
            Matrix z(classes, batch);
            std::copy(v.begin(), v.end(), z.data.begin());
            return softmax_ce(z, labels).loss;
        };
        std::vector<double> x(classes * batch), g1(x.size()), g2(x.size());
        for (auto& v : x) v = 2.0 * rng.normal();
        for (auto& v : g1) v = rng.normal();
        for (auto& v : g2) v = rng.normal();
        Matrix z(classes, batch);
        z.data = x;
        const auto grad = softmax_ce(z, labels).grad.data;
        const auto r = check_descent(loss, x, g1, g2, 1.0, grad);
        if (!r.accepted) continue;
        ++accepted;
        if (!(r.alpha_star > 0.0)) {
            ++violated;
            continue;
        }
        std::vector<double> a(x.size()), b(x.size());
        for (int i = 1; i <= 200; ++i) {
            const double scale = i <= 100 ? i / 100.0 : std::pow(10.0, -(i - 100) * 0.06);
            const double alpha = std::min(r.alpha_star, r.alpha_star * scale);
            for (std::size_t j = 0; j < x.size(); ++j) {
                a[j] = x[j] + alpha * g1[j];
                b[j] = x[j] + alpha * g2[j];
            }
            if (!(loss(a) < loss(b))) {
                ++violated;
                break;
            }
        }
    }
    return {violated == 0, fmt("%.0f accepted of %.0f drawn, %.0f violations", static_cast<double>(accepted),
                               static_cast<double>(trials), static_cast<double>(violated))};
}

Outcome mlp_embedding() {
    Rng rng(404);
    double worst_step = 0.0, worst_dyn = 0.0;
    bool nilpotent = true;
    for (int t = 0; t < 50; ++t) {
        const std::size_t d0 = 1 + rng.below(6), d1 = 1 + rng.below(6), d2 = 1 + rng.below(6);
        std::vector<Matrix> w{Matrix(d1, d0), Matrix(d2, d1)};
        for (auto& m : w)
            for (auto& v : m.data) v = rng.normal();
        const auto g = embed_mlp(w);
        const std::size_t n = d0 + d1 + d2;
        Matrix x0(n, 1), x1(n, 1), x2(n, 1);
        for (std::size_t i = 0; i < d0; ++i) x0(i, 0) = rng.normal();
        for (std::size_t i = 0; i < d1; ++i)
            for (std::size_t j = 0; j < d0; ++j) x1(d0 + i, 0) += w[0](i, j) * x0(j, 0);
        for (std::size_t i = 0; i < d2; ++i)
            for (std::size_t j = 0; j < d1; ++j) x2(d0 + d1 + i, 0) += w[1](i, j) * x1(d0 + j, 0);
        const Matrix y1 = matmul(g, x0), y2 = matmul(g, x1);
        for (std::size_t i = 0; i < n; ++i) {
            worst_step = std::max(worst_step, ref::rel_err(y1(i, 0), x1(i, 0), 1.0));
            worst_step = std::max(worst_step, ref::rel_err(y2(i, 0), x2(i, 0), 1.0));
        }
        const Matrix g3 = matmul(matmul(g, g), g);
        for (double v : g3.data) nilpotent = nilpotent && v == 0.0;
    }
    for (int t = 0; t < 20; ++t) {
        GraphSpec s;
        s.blocks = {3, 5, 5, 2};
        s.connectivity = Connectivity::Layered;
        s.bias = false;
        s.k = 5 + rng.below(30);
        s.seed = 500 + static_cast<std::uint64_t>(t);
        s.activation = t % 2 ? Activation::Relu : Activation::Tanh;
        const Model m = build_model(s, 2, 3);
        Matrix x(2, 6);
        for (auto& v : x.data) v = rng.normal();
        const auto e = select_edges(m.graph.store);
        const auto st = forward(m, e, x, Mode::Train);
        const auto dyn = dynamic_forward(m, e, x, {});
        for (std::size_t i = 0; i < st.logits.data.size(); ++i)
            worst_dyn = std::max(worst_dyn, std::abs(dyn.logits.data[i] - st.logits.data[i]));
    }
    const double eps = 4.0 * std::numeric_limits<double>::epsilon() * 8.0;
    return {worst_step <= eps && nilpotent && worst_dyn < 1e-12,
            fmt("max step error %.3g, G^3 zero: %.0f, dynamics vs static %.3g", worst_step, nilpotent ? 1.0 : 0.0, worst_dyn)};
}

Outcome rk4() {
    const NodeFn decay = [](const Matrix& in, double) {
        Matrix out = in;
        for (auto& v : out.data) v = -v;
        return out;
    };
    const Matrix a(1, 1, 1.0);
    auto err = [&](double h) {
        return std::abs(integrate(Matrix(1, 1, 1.0), a, decay, 0.0, 1.0, h).final_state()(0, 0) - std::exp(-1.0));
    };
    const double fine = err(1e-3);
    const double e1 = err(0.1), e2 = err(0.05), e3 = err(0.025);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    const bool pass = fine < 1e-6 && p1 >= 3.7 && p1 <= 4.3 && p2 >= 3.7 && p2 <= 4.3;
    return {pass, fmt("error at h=1e-3 %.3g, observed order %.3f / %.3f", fine, p1, p2)};
}

struct PairedRuns {
    CompareSummary rg;
    CompareSummary no_update;
    double seconds = 0.0;
};

Outcome dnw_vs_rg(const CompareSummary& s, double secs) {
    const double gap = s.mean_difference;
    return {gap >= 0.02 && s.positive >= 4 && secs < 300.0,
            fmt("DNW %.4f vs RG %.4f, gap %.2f points, ", s.reference.mean, s.baseline.mean, 100.0 * gap) +
                fmt("%.0f/5 positive, %.1f s", static_cast<double>(s.positive), secs)};
}

Outcome ablation(const CompareSummary& s) {
    return {s.baseline.mean <= s.reference.mean,
            fmt("no_update_rule %.4f vs DNW %.4f", s.baseline.mean, s.reference.mean)};
}

Outcome sparse_training() {
    const auto base = load_config(config_path("spirals_sparse.json"));
    double mag = 0.0, frozen = 0.0;
    std::size_t steps = 0, off_budget = 0;
    for (std::uint64_t seed = base.seed; seed < base.seed + 5; ++seed) {
        const auto data = make_dataset(with_seed(base, seed));
        for (const bool control : {false, true}) {
            const auto c = with_seed(control ? baseline_config(base, "frozen_random") : base, seed);
            SparseNet net = build_sparse_net(c.sparse);
            SparseHooks hooks;
            hooks.on_step = [&](std::size_t, const SparseStep& st) {
                ++steps;
                for (std::size_t l = 0; l < st.active.size(); ++l) {
                    const std::size_t total = net.layers[l].weight.size();
                    if (st.active[l] * 10 != total) ++off_budget;
                }
            };
            const auto hist = train_sparse(net, data, c.train, hooks);
            (control ? frozen : mag) += hist.back().test_acc / 5.0;
        }
    }
    return {mag > frozen && off_budget == 0 && steps > 0,
            fmt("magnitude %.4f vs frozen random %.4f, %.0f steps, %.0f off-budget", mag, frozen,
                static_cast<double>(steps), static_cast<double>(off_budget))};
}

Outcome determinism(const ExperimentConfig& c8) {
    namespace fs = std::filesystem;
    auto a = c8, b = c8;
    a.output.dir = "acceptance_out/repeat_a";
    b.output.dir = "acceptance_out/repeat_b";
    fs::remove_all(a.output.dir);
    fs::remove_all(b.output.dir);
    cmd_compare(a, "random_graph", 5);
    cmd_compare(b, "random_graph", 5);
    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a.output.dir)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(entry.path(), a.output.dir);
        const auto other = fs::path(b.output.dir) / rel;
        if (!fs::exists(other) || read_text(entry.path().string()) != read_text(other.string())) ++differing;
    }
    return {files == 11 && differing == 0,
            fmt("%.0f files compared, %.0f differ", static_cast<double>(files), static_cast<double>(differing))};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int n, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "edge-count conservation", edge_conservation);
    report(2, "gradient correctness", gradient_correctness);
    report(3, "straight-through equivalence", straight_through);
    report(4, "swap claim", swap_claim);
    report(5, "descent comparison", descent);
    report(6, "MLP embedding", mlp_embedding);
    report(7, "RK4 integrator", rk4);

    ExperimentConfig c8;
    PairedRuns runs;
    try {
        c8 = load_config(config_path("spirals_dnw.json"));
        c8.output.dir = "acceptance_out/dnw_vs_rg";
        const auto t0 = Clock::now();
        runs.rg = cmd_compare(c8, "random_graph", 5);
        runs.seconds = seconds_since(t0);
        auto c9 = c8;
        c9.output.dir = "acceptance_out/dnw_vs_no_update";
        runs.no_update = cmd_compare(c9, "no_update_rule", 5);
    } catch (const std::exception& e) {
        std::printf("paired runs failed: %s\n", e.what());
    }
    report(8, "DNW vs random graph", [&] { return dnw_vs_rg(runs.rg, runs.seconds); });
    report(9, "ablation ordering", [&] { return ablation(runs.no_update); });
    report(10, "sparse training", sparse_training);
    report(11, "determinism", [&] { return determinism(c8); });

    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
