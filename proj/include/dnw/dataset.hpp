#pragma once

#include "dnw/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dnw {

/// Features are stored feature-major (F x N) so a gathered minibatch is F x B.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::size_t classes = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    std::size_t num_features() const { return features.rows; }
    std::size_t size() const { return features.cols; }
};

/// Interleaved 2-D spirals, one arm per class, Gaussian noise on both
/// coordinates. The split is a seeded shuffle with `test_fraction` held out.
Dataset gen_spirals(std::size_t n_per_class, std::size_t classes, double noise_sd, std::uint64_t seed,
                    double test_fraction = 0.3);

/// Rows are feature columns followed by an integer label; an optional
/// non-numeric header row is skipped. When `classes` is 0 it is inferred as
/// max(label) + 1. Parse errors carry the 1-based line number.
Dataset load_csv(const std::string& path, double test_fraction, std::uint64_t seed, std::size_t classes = 0);

/// Writes with round-trip precision; load_csv on the result reproduces the arrays.
void save_csv(const Dataset& data, const std::string& path);

/// Seeded shuffle split; test gets round(n * test_fraction) samples.
void split_dataset(Dataset& data, double test_fraction, std::uint64_t seed);

Matrix gather_features(const Dataset& data, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace dnw
