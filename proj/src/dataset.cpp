#include "dnw/dataset.hpp"

#include "dnw/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dnw {

namespace {

constexpr double kSpiralTurns = 1.0;
constexpr double kSpiralInnerRadius = 0.1;

}  // namespace

void split_dataset(Dataset& data, double test_fraction, std::uint64_t seed) {
    require(test_fraction >= 0.0 && test_fraction < 1.0, ErrorKind::InvalidRange,
            "test_fraction must lie in [0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed ^ 0x3C6EF372FE94F82BULL);
    shuffle(order, rng);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(order.size()) * test_fraction));
    data.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    data.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
}

Dataset gen_spirals(std::size_t n_per_class, std::size_t classes, double noise_sd, std::uint64_t seed,
                    double test_fraction) {
    require(n_per_class >= 1, ErrorKind::InvalidRange, "gen_spirals: n_per_class must be at least 1");
    require(classes >= 2, ErrorKind::InvalidRange, "gen_spirals: need at least 2 classes");
    require(noise_sd >= 0.0, ErrorKind::InvalidRange, "gen_spirals: noise_sd must be non-negative");
    Dataset d;
    d.classes = classes;
    d.features = Matrix(2, n_per_class * classes);
    d.labels.resize(n_per_class * classes);
    Rng rng(seed);
    std::size_t col = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(n_per_class);
            const double radius = kSpiralInnerRadius + (1.0 - kSpiralInnerRadius) * t;
            const double angle = 2.0 * std::numbers::pi * kSpiralTurns * t + phase;
            const double nx = noise_sd * rng.normal();
            const double ny = noise_sd * rng.normal();
            d.features(0, col) = radius * std::cos(angle) + nx;
            d.features(1, col) = radius * std::sin(angle) + ny;
            d.labels[col] = static_cast<int>(c);
            ++col;
        }
    }
    split_dataset(d, test_fraction, seed);
    return d;
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(const std::string& s, long long& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

Dataset load_csv(const std::string& path, double test_fraction, std::uint64_t seed, std::size_t classes) {
    std::ifstream file(path);
    if (!file) fail(ErrorKind::Io, "load_csv: cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        for (auto& c : cells) c = trim(c);
        const auto where = path + ":" + std::to_string(line_no) + ": ";

        std::vector<double> values(cells.size() > 0 ? cells.size() - 1 : 0);
        bool numeric = cells.size() >= 2;
        for (std::size_t i = 0; numeric && i + 1 < cells.size(); ++i) numeric = parse_double(cells[i], values[i]);
        long long label = 0;
        const bool label_ok = cells.size() >= 2 && parse_int(cells.back(), label);

        if (rows.empty() && width == 0 && !(numeric && label_ok)) {
            // A header is a first row whose cells are all non-numeric.
            bool any_number = false;
            for (const auto& c : cells) {
                double tmp = 0.0;
                any_number = any_number || parse_double(c, tmp);
            }
            if (!any_number) {
                width = cells.size();
                continue;
            }
        }
        if (cells.size() < 2) fail(ErrorKind::Parse, where + "expected at least one feature and a label");
        if (width != 0 && cells.size() != width) {
            fail(ErrorKind::Parse, where + "ragged row: expected " + std::to_string(width) + " cells, got " +
                                       std::to_string(cells.size()));
        }
        if (!numeric) fail(ErrorKind::Parse, where + "non-numeric feature cell");
        if (!label_ok) fail(ErrorKind::Parse, where + "label '" + cells.back() + "' is not an integer");
        if (label < 0 || (classes > 0 && static_cast<std::size_t>(label) >= classes)) {
            fail(ErrorKind::Parse, where + "label " + std::to_string(label) + " out of range");
        }
        width = cells.size();
        rows.push_back(std::move(values));
        labels.push_back(static_cast<int>(label));
    }
    if (rows.empty()) fail(ErrorKind::Parse, "load_csv: '" + path + "' contains no data rows");

    Dataset d;
    const std::size_t nf = rows.front().size();
    d.features = Matrix(nf, rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t f = 0; f < nf; ++f) d.features(f, i) = rows[i][f];
    d.labels = std::move(labels);
    if (classes == 0) {
        int max_label = 0;
        for (int l : d.labels) max_label = std::max(max_label, l);
        classes = static_cast<std::size_t>(max_label) + 1;
    }
    d.classes = std::max<std::size_t>(classes, 2);
    split_dataset(d, test_fraction, seed);
    return d;
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "save_csv: cannot write '" + path + "'");
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t f = 0; f < data.num_features(); ++f) {
            std::snprintf(buf, sizeof buf, "%.17g", data.features(f, i));
            out << buf << ',';
        }
        out << data.labels[i] << '\n';
    }
    if (!out) fail(ErrorKind::Io, "save_csv: write to '" + path + "' failed");
}

Matrix gather_features(const Dataset& data, std::span<const std::size_t> indices) {
    Matrix x(data.num_features(), indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b)
        for (std::size_t f = 0; f < data.num_features(); ++f) x(f, b) = data.features(f, indices[b]);
    return x;
}

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices) {
    std::vector<int> y(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) y[b] = data.labels[indices[b]];
    return y;
}

}  // namespace dnw
