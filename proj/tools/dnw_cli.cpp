#include "dnw/dnw.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

int report_failure(dnw_status status) {
    std::fprintf(stderr, "dnw: %s: %s\n", dnw_status_name(status), dnw_last_error());
    return 1;
}

void print_and_free(char* text) {
    if (!text) return;
    std::fputs(text, stdout);
    const std::size_t n = std::char_traits<char>::length(text);
    if (n == 0 || text[n - 1] != '\n') std::fputc('\n', stdout);
    dnw_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train neural graphs with learned wiring"};
    app.require_subcommand(1);

    std::string config_path;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Train one configuration and write metrics and a checkpoint");
    run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_flag("-q,--quiet", quiet, "Do not echo the metrics");

    std::string baseline;
    std::size_t seeds = 5;
    auto* compare = app.add_subcommand("compare", "Paired-seed comparison against a baseline");
    compare->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("--baseline", baseline, "Baseline name (random_graph, no_update_rule, l1_anneal, "
                                                "one_shot_prune_reinit, one_shot_prune_finetune; "
                                                "frozen_random for sparse configs)")
        ->required();
    compare->add_option("--seeds", seeds, "Number of seeds, starting at the config seed")
        ->check(CLI::PositiveNumber);

    std::size_t scenarios = 0;
    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "Randomized checks of the swap and descent claims");
    verify->add_option("--scenarios", scenarios,
                       "Accepted simple swap scenarios; general swaps and descent trials scale with it")
        ->check(CLI::PositiveNumber);
    verify->add_option("--seed", verify_seed, "Scenario generator seed");

    std::string table_path;
    bool budget_json = false;
    auto* budget = app.add_subcommand("budget", "Per-stage edge budgets for a channel plan");
    budget->add_option("table", table_path, "Budget table (JSON)")->required()->check(CLI::ExistingFile);
    budget->add_flag("--json", budget_json, "Print JSON instead of a table");

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        char* metrics = nullptr;
        const dnw_status st = dnw_run(config_path.c_str(), quiet ? nullptr : &metrics);
        if (st != DNW_OK) return report_failure(st);
        print_and_free(metrics);
        return 0;
    }
    if (*compare) {
        char* summary = nullptr;
        const dnw_status st = dnw_compare(config_path.c_str(), baseline.c_str(), seeds, &summary);
        if (st != DNW_OK) return report_failure(st);
        print_and_free(summary);
        return 0;
    }
    if (*verify) {
        char* report = nullptr;
        int passed = 0;
        const std::size_t general = scenarios ? (scenarios + 1) / 2 : 0;
        const dnw_status st = dnw_verify(scenarios, general, scenarios, verify_seed, &report, &passed);
        if (st != DNW_OK) return report_failure(st);
        print_and_free(report);
        return passed ? 0 : 1;
    }
    if (*budget) {
        char* json = nullptr;
        char* text = nullptr;
        const dnw_status st = dnw_budget(table_path.c_str(), &json, &text);
        if (st != DNW_OK) return report_failure(st);
        if (budget_json) {
            print_and_free(json);
            dnw_string_free(text);
        } else {
            print_and_free(text);
            dnw_string_free(json);
        }
        return 0;
    }
    return 0;
}
