#pragma once

#include "dnw/engine.hpp"
#include "dnw/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dnw {

/// A small graph, a minibatch and two designated candidate pairs: a
/// hallucinated (i, l) and a real (j, k). l == k is the simple form.
struct SwapScenario {
    Model model;
    Matrix features;
    std::vector<int> labels;
    std::size_t hallucinated = 0;
    std::size_t real = 0;
};

struct SwapReport {
    bool accepted = false;
    std::string reason;
    double alpha = 0.0;
    double loss_swap = 0.0;
    double loss_noswap = 0.0;
    /// w~(w~ - w) for the hallucinated and the real pair.
    double lhs = 0.0;
    double rhs = 0.0;
    bool loss_decreased = false;
    bool inequality = false;
    bool agree = false;
};

/// Learning rates tried, largest first: 0.1 * 2^-m for m = 0..59.
inline constexpr double kSwapAlphaStart = 0.1;
inline constexpr int kSwapAlphaSteps = 60;
inline constexpr double kSwapTolerance = 1e-12;

/// Simple form: both pairs end in the same node k. A scenario is accepted
/// when some grid alpha gives |w_ik| < |w_jk|, |w~_ik| > |w~_jk|, unchanged
/// signs and |w~_ik| <= |w~_jk| + eps |w~_jk| / |w_ik| with eps = |w_jk| - |w_ik|.
/// Node states come from one forward pass; the loss is re-evaluated with
/// only I_k replaced.
SwapReport check_swap(const SwapScenario& scenario);

/// General form: (i, l) replaces (j, k). Additionally requires no candidate
/// path from i to j and, when l != k, no real-edge path between k and l, so
/// I_k and I_l can be replaced independently.
SwapReport check_swap_general(const SwapScenario& scenario);

/// Random scenario on at most 8 nodes with tanh nodes, no standardization,
/// edge weights drawn from (-weight_scale, weight_scale) and the output map
/// from (-output_scale, output_scale).
SwapScenario random_swap_scenario(Rng& rng, bool general, double weight_scale, double output_scale = 1.0);

struct DescentReport {
    bool accepted = false;
    std::string reason;
    double alpha_star = 0.0;
    /// <g1, -grad> - <g2, -grad>
    double margin = 0.0;
};

/// Largest alpha <= alpha0 (found by a geometric scan followed by bisection)
/// such that L(x + a g1) < L(x + a g2) for every scanned a <= alpha. Rejected
/// unless <g1, -grad> > <g2, -grad>. When `grad` is empty it is taken from
/// central differences.
DescentReport check_descent(const ScalarFn& loss, std::span<const double> point, std::span<const double> g1,
                          std::span<const double> g2, double alpha0, std::span<const double> grad = {});

struct VerifyOptions {
    std::size_t swap_scenarios = 1000;
    std::size_t general_scenarios = 500;
    std::size_t descent_trials = 1000;
    std::uint64_t seed = 1;
    double weight_scale = 0.02;
    double output_scale = 0.1;
    /// Give up after this many draws per accepted scenario.
    std::size_t attempts_per_scenario = 200;
};

struct CheckTally {
    std::size_t attempted = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::size_t disagreements = 0;
    /// Largest loss_swap - loss_noswap seen (negative when every case passed).
    double worst_margin = -1e300;
};

struct VerifyReport {
    VerifyOptions options;
    CheckTally swap;
    CheckTally swap_general;
    CheckTally descent;

    bool ok() const;
    std::string to_json() const;
};

VerifyReport run_verification(const VerifyOptions& options);

}  // namespace dnw
