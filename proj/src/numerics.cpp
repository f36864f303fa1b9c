#include "dnw/numerics.hpp"

#include "dnw/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dnw {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidRange: return "invalid-range";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Budget: return "budget";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, ErrorKind::Contract, "matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    const auto wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double uniform(Rng& rng, double lo, double hi) {
    if (!(lo < hi)) {
        fail(ErrorKind::InvalidRange,
             "uniform: lo (" + std::to_string(lo) + ") must be below hi (" + std::to_string(hi) + ")");
    }
    const double v = lo + (hi - lo) * rng.next_unit();
    // lo + (hi - lo) * u can round up to hi for u close to 1.
    return v < hi ? v : std::nextafter(hi, lo);
}

double activate(Activation act, double x) {
    switch (act) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

double activate_derivative(Activation act, double x) {
    switch (act) {
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    fail(ErrorKind::Config, "unknown activation '" + std::string(name) + "' (expected relu|tanh|identity)");
}

std::string_view activation_name(Activation act) {
    switch (act) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

LossAndGrad softmax_ce(const Matrix& logits, std::span<const int> labels) {
    const std::size_t classes = logits.rows;
    const std::size_t batch = logits.cols;
    require(batch > 0 && labels.size() == batch, ErrorKind::Contract,
            "softmax_ce: label count must equal the batch size");
    require(all_finite(logits.data), ErrorKind::Numeric, "softmax_ce: non-finite logits");

    LossAndGrad out{0.0, Matrix(classes, batch)};
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const int label = labels[b];
        require(label >= 0 && static_cast<std::size_t>(label) < classes, ErrorKind::Contract,
                "softmax_ce: label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
        double max_logit = logits(0, b);
        for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, logits(c, b));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits(c, b) - max_logit);
        const double log_denom = std::log(denom);
        out.loss += (max_logit + log_denom - logits(static_cast<std::size_t>(label), b)) * inv_batch;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(logits(c, b) - max_logit - log_denom);
            out.grad(c, b) = (p - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_batch;
        }
    }
    return out;
}

std::vector<double> finite_diff(const ScalarFn& f, std::span<const double> x, double h) {
    require(h > 0.0, ErrorKind::InvalidRange, "finite_diff: step must be positive");
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double up = f(point);
        point[i] = saved - h;
        const double down = f(point);
        point[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            fail(ErrorKind::Numeric, "finite_diff: non-finite evaluation at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace dnw

namespace dnw {

void sgd_update(ParamBlock& p, std::span<const double> grad, const SgdSettings& s,
                std::span<const std::uint8_t> active) {
    require(grad.size() == p.size(), ErrorKind::Contract, "sgd_update: gradient size mismatch");
    const bool masked = !active.empty();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (masked && !active[i]) continue;
        const double g = grad[i] + s.weight_decay * p.value[i];
        p.velocity[i] = s.momentum * p.velocity[i] + g;
        p.value[i] -= s.lr * p.velocity[i];
    }
}

}  // namespace dnw
