#pragma once
// Synthetic generators with known ground truth, plus CSV and IDX ingestion.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fans/error.hpp"
#include "fans/perturb.hpp"
#include "fans/random.hpp"
#include "fans/vector.hpp"

namespace fans {

struct Dataset {
    std::vector<Vector> inputs;
    std::vector<int> labels;
    std::size_t num_classes = 2;
    std::optional<DimSubset> ground_truth;
    DataKind kind = DataKind::tabular;

    std::size_t size() const { return inputs.size(); }
    std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

    void validate() const {
        if (inputs.size() != labels.size())
            throw ValidationError("dataset has " + std::to_string(inputs.size()) + " rows but " +
                                  std::to_string(labels.size()) + " labels");
        const std::size_t d = dim();
        for (std::size_t r = 0; r < inputs.size(); ++r) {
            if (inputs[r].size() != d) throw RowLengthError("row " + std::to_string(r) + " has inconsistent length");
            if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes)
                throw LabelRangeError("row " + std::to_string(r) + ": label " + std::to_string(labels[r]) +
                                      " outside [0, " + std::to_string(num_classes) + ")");
        }
        if (ground_truth && ground_truth->dim() != d) throw ValidationError("ground truth dimension mismatch");
    }
};

/// Labelling rule of the three-feature toy task: 1 iff x1 - x2 > 1.
inline int example1_label(std::span<const double> x) { return x[0] - x[1] > 1.0 ? 1 : 0; }

/// Features i.i.d. Uniform[-2, 2]^3; label 1(x1 - x2 > 1); truth {x1, x2}.
inline Dataset gen_example1(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("example1: n must be positive");
    Rng rng = Rng::stream(seed, StreamTag::dataset, {1});
    Dataset ds;
    ds.num_classes = 2;
    ds.ground_truth = DimSubset({0, 1}, 3);
    ds.inputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(3);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        ds.labels.push_back(example1_label(x));
        ds.inputs.push_back(std::move(x));
    }
    return ds;
}

/// Planted sparse linear task. Features are Uniform[-1, 1]^d; a weight
/// vector supported on k random coordinates (|w_i| in [0.5, 1.5], random
/// sign) labels rows by sign(w.x + noise * N(0,1)). Rows with |w.x| < margin
/// are rejected. Ground truth is the support.
inline Dataset gen_planted_sparse(std::size_t n, std::size_t d, std::size_t k, double margin, std::uint64_t seed,
                                  double noise = 0.0) {
    if (n == 0) throw ConfigError("planted: n must be positive");
    if (k < 1 || k >= d) throw ConfigError("planted: need 1 <= k < d");
    if (margin < 0.0 || noise < 0.0) throw ConfigError("planted: margin and noise must be nonnegative");
    Rng rng = Rng::stream(seed, StreamTag::dataset, {2});

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.index(d - i)]);
    std::vector<std::size_t> support(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

    Vector w(d, 0.0);
    double reach = 0.0;
    for (std::size_t i : support) {
        w[i] = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
        reach += std::abs(w[i]);
    }
    if (margin >= reach)
        throw ConfigError("planted: margin " + std::to_string(margin) + " is infeasible (max |w.x| = " +
                          std::to_string(reach) + ")");

    Dataset ds;
    ds.num_classes = 2;
    ds.ground_truth = DimSubset(support, d);
    const std::size_t max_attempts = 1000 * n;
    std::size_t attempts = 0;
    while (ds.inputs.size() < n) {
        if (++attempts > max_attempts) throw ConfigError("planted: margin rejects too many rows");
        Vector x(d);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const double score = dot(w, x);
        if (std::abs(score) < margin) continue;
        const double noisy = score + (noise > 0.0 ? noise * rng.normal() : 0.0);
        ds.labels.push_back(noisy > 0.0 ? 1 : 0);
        ds.inputs.push_back(std::move(x));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// CSV: header row required, last column is the integer label.

inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    for (std::size_t i = 1; i <= ds.dim(); ++i) out << 'x' << i << ',';
    out << "label\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (double v : ds.inputs[r]) out << format_double(v) << ',';
        out << ds.labels[r] << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

inline double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    if (first < last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError("csv row " + std::to_string(row) + ", column " + std::to_string(col) + ": cannot parse '" +
                         s + "' as a number");
    return v;
}

}  // namespace detail

/// Reads a dataset; `num_classes` = 0 infers max(label) + 1.
inline Dataset load_csv(const std::string& path, std::size_t num_classes = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv '" + path + "': missing header row");
    const std::size_t width = detail::split_csv_line(line).size();
    if (width < 2) throw ParseError("csv '" + path + "': need at least one feature column and a label column");

    Dataset ds;
    std::size_t row = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != width)
            throw RowLengthError("csv row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                 " columns, header has " + std::to_string(width));
        Vector x(width - 1);
        for (std::size_t c = 0; c + 1 < width; ++c) x[c] = detail::parse_cell(cells[c], row, c);
        const double lv = detail::parse_cell(cells.back(), row, width - 1);
        if (lv < 0 || lv != std::floor(lv) || lv > 1e9)
            throw LabelRangeError("csv row " + std::to_string(row) + ": label '" + cells.back() +
                                  "' is not a nonnegative integer");
        const int label = static_cast<int>(lv);
        if (num_classes > 0 && static_cast<std::size_t>(label) >= num_classes)
            throw LabelRangeError("csv row " + std::to_string(row) + ": label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
        max_label = std::max(max_label, label);
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(label);
    }
    if (ds.inputs.empty()) throw ParseError("csv '" + path + "': no data rows");
    ds.num_classes = num_classes > 0 ? num_classes : static_cast<std::size_t>(std::max(max_label + 1, 2));
    ds.kind = DataKind::tabular;
    return ds;
}

// ---------------------------------------------------------------------------
// IDX (big-endian): magic 0x00000803 for uint8 image tensors, 0x00000801 for
// uint8 label vectors. Pixels are scaled to [0, 1].

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw ParseError("idx '" + path + "': truncated header");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_bytes(images_path);
    const auto lab = detail::read_bytes(labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
    if (img_magic != 0x00000803u)
        throw MagicMismatchError("idx images '" + images_path + "': magic " + std::to_string(img_magic) +
                                 " is not 0x00000803");
    const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
    if (lab_magic != 0x00000801u)
        throw MagicMismatchError("idx labels '" + labels_path + "': magic " + std::to_string(lab_magic) +
                                 " is not 0x00000801");

    const std::size_t n = detail::read_be32(img, 4, images_path);
    const std::size_t rows = detail::read_be32(img, 8, images_path);
    const std::size_t cols = detail::read_be32(img, 12, images_path);
    const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
    if (n != n_labels)
        throw ValidationError("idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
    const std::size_t d = rows * cols;
    if (img.size() < 16 + n * d) throw ParseError("idx images '" + images_path + "': truncated pixel data");
    if (lab.size() < 8 + n) throw ParseError("idx labels '" + labels_path + "': truncated label data");

    Dataset ds;
    ds.kind = DataKind::image;
    ds.inputs.reserve(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = img[16 + i * d + j] / 255.0;
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(lab[8 + i]);
        max_label = std::max<int>(max_label, lab[8 + i]);
    }
    ds.num_classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
    return ds;
}

}  // namespace fans
