#include "dnw/baselines.hpp"

#include "dnw/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dnw {

BaselineKind parse_baseline(std::string_view name) {
    if (name == "random_graph") return BaselineKind::RandomGraph;
    if (name == "no_update_rule") return BaselineKind::NoUpdateRule;
    if (name == "l1_anneal") return BaselineKind::L1Anneal;
    if (name == "one_shot_prune_reinit") return BaselineKind::OneShotPruneReinit;
    if (name == "one_shot_prune_finetune") return BaselineKind::OneShotPruneFinetune;
    fail(ErrorKind::Config, "unknown baseline '" + std::string(name) + "'");
}

std::string_view baseline_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::RandomGraph: return "random_graph";
        case BaselineKind::NoUpdateRule: return "no_update_rule";
        case BaselineKind::L1Anneal: return "l1_anneal";
        case BaselineKind::OneShotPruneReinit: return "one_shot_prune_reinit";
        case BaselineKind::OneShotPruneFinetune: return "one_shot_prune_finetune";
    }
    return "?";
}

EdgeSet random_graph(const GraphSpec& spec) { return select_edges(build_graph(spec).store); }

EdgeRule random_graph_rule(const Model& model) {
    EdgeRule rule;
    rule.selection = EdgeRule::Selection::Fixed;
    rule.fixed = select_edges(model.graph.store).mask;
    return rule;
}

EdgeRule no_update_rule() {
    EdgeRule rule;
    rule.updates = EdgeRule::Updates::RealOnly;
    return rule;
}

std::size_t l1_anneal_count(const L1Anneal& s, std::size_t total, std::size_t k, std::size_t epoch) {
    if (!s.counts.empty()) return s.counts[std::min(epoch, s.counts.size()) - 1];
    if (s.prune_epochs == 0 || epoch >= s.prune_epochs) return k;
    const std::size_t removed = (total - k) * epoch / s.prune_epochs;
    return total - removed;
}

EdgeRule l1_anneal_rule(const Model& model, const L1Anneal& s, std::size_t epochs) {
    const std::size_t total = model.graph.store.size();
    const std::size_t k = model.graph.store.k;
    require(s.l1 >= 0.0, ErrorKind::Config, "baseline.l1: must be non-negative");
    if (!s.counts.empty()) {
        std::size_t prev = total;
        for (std::size_t i = 0; i < s.counts.size(); ++i) {
            require(s.counts[i] >= k, ErrorKind::Contract,
                    "l1_anneal: schedule drops to " + std::to_string(s.counts[i]) + " edges after epoch " +
                        std::to_string(i + 1) + ", below k = " + std::to_string(k));
            require(s.counts[i] <= prev, ErrorKind::Contract, "l1_anneal: schedule must be non-increasing");
            prev = s.counts[i];
        }
        require(s.counts.size() <= epochs && s.counts.back() == k, ErrorKind::Contract,
                "l1_anneal: schedule must end at k within the training epochs");
    } else if (k < total) {
        require(s.prune_epochs >= 1 && s.prune_epochs <= epochs, ErrorKind::Contract,
                "l1_anneal: pruning must finish within the training epochs (prune_epochs = " +
                    std::to_string(s.prune_epochs) + ", epochs = " + std::to_string(epochs) + ")");
    }

    EdgeRule rule;
    rule.selection = EdgeRule::Selection::Fixed;
    rule.l1 = s.l1;
    rule.fixed.assign(total, 1);
    rule.after_epoch = [s, total, k](std::size_t epoch, std::vector<std::uint8_t>& fixed, const EdgeStore& store) {
        const std::size_t target = l1_anneal_count(s, total, k, epoch);
        std::vector<std::size_t> alive;
        for (std::size_t c = 0; c < fixed.size(); ++c)
            if (fixed[c]) alive.push_back(c);
        if (alive.size() <= target) return;
        // Drop the smallest magnitudes; among equals the larger index goes first.
        const auto& w = store.weights.value;
        std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
            const double ma = std::abs(w[a]);
            const double mb = std::abs(w[b]);
            return ma != mb ? ma > mb : a < b;
        });
        for (std::size_t i = target; i < alive.size(); ++i) fixed[alive[i]] = 0;
    };
    return rule;
}

std::vector<EpochMetrics> one_shot_prune(Model& trained, const Model* initial, std::size_t k, PruneMode mode,
                                         const Dataset& data, const TrainConfig& config, const TrainHooks& hooks) {
    require(initial != nullptr, ErrorKind::Contract, "one_shot_prune: the stored initialization is missing");
    require(initial->graph.spec.blocks == trained.graph.spec.blocks &&
                initial->graph.spec.connectivity == trained.graph.spec.connectivity &&
                initial->io.features == trained.io.features && initial->io.classes == trained.io.classes,
            ErrorKind::Contract, "one_shot_prune: the stored initialization belongs to a different graph");
    require(k <= trained.graph.store.size(), ErrorKind::Budget,
            "one_shot_prune: k = " + std::to_string(k) + " exceeds the candidate count");

    EdgeStore ranking = trained.graph.store;
    ranking.k = k;
    EdgeRule rule;
    rule.selection = EdgeRule::Selection::Fixed;
    rule.fixed = select_edges(ranking).mask;

    if (mode == PruneMode::Reinit) {
        const std::uint64_t iteration = trained.iteration;
        trained = *initial;
        trained.iteration = iteration;
    }
    trained.graph.store.k = k;
    for (ParamBlock* p : {&trained.graph.store.weights, &trained.graph.nodes.gamma, &trained.graph.nodes.beta,
                          &trained.io.in_weight, &trained.io.in_bias, &trained.io.out_weight, &trained.io.out_bias})
        std::fill(p->velocity.begin(), p->velocity.end(), 0.0);
    return train(trained, data, config, rule, hooks);
}

}  // namespace dnw
