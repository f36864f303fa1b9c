#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace dnw {

/// Dense row-major matrix of doubles. Node states use rows = nodes and
/// cols = batch samples, so a row is one node's batch vector.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// SplitMix64. The stream is defined entirely by the recurrence
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// and doubles in [0, 1) are (next() >> 11) * 2^-53, so any port reproduces it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double next_unit();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller (both variates used, cached).
    double normal();

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Value in [lo, hi). Throws InvalidRange when lo >= hi.
double uniform(Rng& rng, double lo, double hi);

/// Fisher-Yates with Rng::below, so the permutation is platform independent.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

enum class Activation { Relu, Tanh, Identity };

double activate(Activation act, double x);
/// Derivative with respect to the pre-activation; relu'(0) is 0.
double activate_derivative(Activation act, double x);
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation act);

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;  // same shape as the logits
};

/// Mean softmax cross-entropy over the batch. logits is classes x batch.
LossAndGrad softmax_ce(const Matrix& logits, std::span<const int> labels);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_diff(const ScalarFn& f, std::span<const double> x, double h);

/// Sum in ascending index order.
double dot(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> values);

}  // namespace dnw

namespace dnw {

/// A trainable parameter vector together with its momentum buffer.
struct ParamBlock {
    std::vector<double> value;
    std::vector<double> velocity;

    ParamBlock() = default;
    explicit ParamBlock(std::size_t n, double fill = 0.0) : value(n, fill), velocity(n, 0.0) {}

    std::size_t size() const { return value.size(); }
    bool operator==(const ParamBlock&) const = default;
};

struct SgdSettings {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// velocity <- momentum * velocity + (grad + decay * w);  w <- w - lr * velocity.
/// Entries whose `active` flag is zero are left untouched (when a mask is given).
void sgd_update(ParamBlock& p, std::span<const double> grad, const SgdSettings& s,
                std::span<const std::uint8_t> active = {});

}  // namespace dnw
