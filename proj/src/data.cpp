#include "cycle/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "cycle/error.hpp"

namespace cycle {

namespace {

constexpr int kDirichletMaxAttempts = 100;

void check_holdout_fraction(double holdout_fraction) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ParameterError(fmt::format("holdout_fraction must be in (0, 1), got {}", holdout_fraction));
    }
}

void check_participants(std::size_t n_participants) {
    if (n_participants == 0) {
        throw ParameterError("need at least one participant");
    }
}

// Splits one participant's allocation into train and holdout, stratified by class.
ParticipantSplit carve_holdout(const Dataset& dataset, std::vector<std::size_t> allocation,
                               double holdout_fraction) {
    std::sort(allocation.begin(), allocation.end());
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.num_classes()));
    for (std::size_t idx : allocation) {
        by_class[static_cast<std::size_t>(dataset.labels()[idx])].push_back(idx);
    }

    ParticipantSplit split;
    for (const auto& members : by_class) {
        if (members.empty()) {
            continue;
        }
        auto take = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(members.size()) + 0.5));
        take = std::min(take, members.size() - 1);
        // Allocation order is sorted, so the holdout is the tail of each class.
        split.holdout.insert(split.holdout.end(), members.end() - static_cast<std::ptrdiff_t>(take), members.end());
        split.train.insert(split.train.end(), members.begin(), members.end() - static_cast<std::ptrdiff_t>(take));
    }
    if (split.holdout.empty() && split.train.size() >= 2) {
        split.holdout.push_back(split.train.back());
        split.train.pop_back();
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.holdout.begin(), split.holdout.end());
    split.train_labels.reserve(split.train.size());
    for (std::size_t idx : split.train) {
        split.train_labels.push_back(dataset.labels()[idx]);
    }
    return split;
}

// Shuffles all sample indices and hands out contiguous blocks of the given sizes.
DataPartition assign_blocks(const Dataset& dataset, const std::vector<std::size_t>& sizes,
                            double holdout_fraction, Rng& rng) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    DataPartition partition;
    std::size_t cursor = 0;
    for (std::size_t size : sizes) {
        std::vector<std::size_t> block(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                       order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
        cursor += size;
        partition.participants.push_back(carve_holdout(dataset, std::move(block), holdout_fraction));
    }
    return partition;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return cells;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels, int num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (labels_.empty()) {
        throw DataError("dataset must contain at least one sample");
    }
    if (features_.rows() != labels_.size()) {
        throw DataError(fmt::format("{} feature rows but {} labels", features_.rows(), labels_.size()));
    }
    if (num_classes_ < 2) {
        throw DataError(fmt::format("need at least two classes, got {}", num_classes_));
    }
    for (int label : labels_) {
        if (label < 0 || label >= num_classes_) {
            throw DataError(fmt::format("label {} outside [0, {})", label, num_classes_));
        }
    }
    if (!all_finite(features_.values())) {
        throw DataError("dataset features contain non-finite values");
    }
}

Dataset make_blobs(int num_classes, std::size_t dim, std::size_t samples_per_class, double spread,
                   Rng& rng, double separation) {
    if (num_classes < 2 || dim < 2 || samples_per_class < 2) {
        throw ParameterError("make_blobs needs num_classes >= 2, dim >= 2, samples_per_class >= 2");
    }
    if (!(spread > 0.0) || !(separation >= 4.0)) {
        throw ParameterError("make_blobs needs spread > 0 and separation >= 4");
    }
    const auto classes = static_cast<std::size_t>(num_classes);
    const double min_distance = separation * spread;

    Matrix centers(classes, dim);
    if (classes <= dim) {
        // Orthonormal directions: every pair of centers sits exactly min_distance apart.
        const double radius = min_distance / std::sqrt(2.0);
        for (std::size_t c = 0; c < classes; ++c) {
            Vector v(dim);
            double length = 0.0;
            do {
                for (double& x : v) {
                    x = rng.standard_normal();
                }
                for (std::size_t prev = 0; prev < c; ++prev) {
                    const double proj = dot(v, centers.row(prev)) / (radius * radius);
                    for (std::size_t j = 0; j < dim; ++j) {
                        v[j] -= proj * centers(prev, j);
                    }
                }
                length = norm2(v);
            } while (length < 1e-6);
            for (std::size_t j = 0; j < dim; ++j) {
                centers(c, j) = radius * v[j] / length;
            }
        }
    } else {
        double scale = min_distance;
        for (int attempt = 0;; ++attempt) {
            for (std::size_t c = 0; c < classes; ++c) {
                for (std::size_t j = 0; j < dim; ++j) {
                    centers(c, j) = scale * rng.standard_normal();
                }
            }
            double closest = std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < classes; ++a) {
                for (std::size_t b = a + 1; b < classes; ++b) {
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < dim; ++j) {
                        const double diff = centers(a, j) - centers(b, j);
                        d2 += diff * diff;
                    }
                    closest = std::min(closest, std::sqrt(d2));
                }
            }
            if (closest >= min_distance) {
                break;
            }
            if (attempt % 50 == 49) {
                scale *= 1.25;
            }
        }
    }

    Matrix features(classes * samples_per_class, dim);
    std::vector<int> labels(classes * samples_per_class);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < samples_per_class; ++s) {
            const std::size_t row = c * samples_per_class + s;
            labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < dim; ++j) {
                features(row, j) = centers(c, j) + spread * rng.standard_normal();
            }
        }
    }
    return Dataset(std::move(features), std::move(labels), num_classes);
}

Dataset load_csv(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t columns = 0;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        if (has_header && line_no == 1) {
            continue;
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_commas(line);
        if (cells.size() < 2) {
            throw DataError(fmt::format("{} line {}: expected feature columns and a label", path.string(), line_no));
        }
        if (columns == 0) {
            columns = cells.size();
        } else if (cells.size() != columns) {
            throw DataError(fmt::format("{} line {}: expected {} columns, found {}", path.string(), line_no,
                                        columns, cells.size()));
        }
        for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
            double x = 0.0;
            const auto cell = cells[i];
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(x)) {
                throw DataError(fmt::format("{} line {}: column {} is not a number: '{}'", path.string(), line_no,
                                            i + 1, cell));
            }
            values.push_back(x);
        }
        const auto cell = cells.back();
        int label = 0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
            throw DataError(fmt::format("{} line {}: label is not an integer: '{}'", path.string(), line_no, cell));
        }
        if (label < 0) {
            throw DataError(fmt::format("{} line {}: negative label {}", path.string(), line_no, label));
        }
        max_label = std::max(max_label, label);
        labels.push_back(label);
    }
    if (labels.empty()) {
        throw DataError(fmt::format("{}: no data rows", path.string()));
    }
    const std::size_t dim = columns - 1;
    const std::size_t rows = labels.size();
    return Dataset(Matrix(rows, dim, std::move(values)), std::move(labels),
                   std::max(max_label + 1, 2));
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        std::string line;
        for (double x : dataset.features().row(r)) {
            line += fmt::format("{},", x);
        }
        line += fmt::format("{}\n", dataset.labels()[r]);
        out << line;
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

DataPartition split_homogeneous(const Dataset& dataset, std::size_t n_participants,
                                double holdout_fraction, Rng& rng) {
    check_participants(n_participants);
    check_holdout_fraction(holdout_fraction);
    const auto classes = static_cast<std::size_t>(dataset.num_classes());
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.labels()[i])].push_back(i);
    }
    std::vector<std::vector<std::size_t>> allocation(n_participants);
    std::size_t offset = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        auto& members = by_class[c];
        if (members.empty()) {
            continue;
        }
        if (members.size() < n_participants) {
            throw DataError(fmt::format("class {} has {} samples, fewer than {} participants", c,
                                        members.size(), n_participants));
        }
        rng.shuffle(members);
        for (std::size_t j = 0; j < members.size(); ++j) {
            allocation[(j + offset) % n_participants].push_back(members[j]);
        }
        // Rotate so participants receiving an extra sample differ between classes.
        offset = (offset + members.size()) % n_participants;
    }
    DataPartition partition;
    for (auto& block : allocation) {
        partition.participants.push_back(carve_holdout(dataset, std::move(block), holdout_fraction));
    }
    return partition;
}

DataPartition split_dirichlet(const Dataset& dataset, std::size_t n_participants, double delta,
                              double holdout_fraction, Rng& rng) {
    check_participants(n_participants);
    check_holdout_fraction(holdout_fraction);
    if (!(delta > 0.0)) {
        throw ParameterError(fmt::format("dirichlet delta must be positive, got {}", delta));
    }
    const std::size_t total = dataset.size();
    const auto min_samples = 2 * static_cast<std::size_t>(dataset.num_classes());
    if (n_participants == 1) {
        return assign_blocks(dataset, {total}, holdout_fraction, rng);
    }
    for (int attempt = 0; attempt < kDirichletMaxAttempts; ++attempt) {
        const Vector shares = sample_dirichlet(delta, n_participants, rng);
        std::vector<std::size_t> sizes(n_participants);
        std::size_t assigned = 0;
        for (std::size_t n = 0; n < n_participants; ++n) {
            sizes[n] = static_cast<std::size_t>(std::floor(shares[n] * static_cast<double>(total)));
            assigned += sizes[n];
        }
        sizes.back() += total - assigned;
        if (std::all_of(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= min_samples; })) {
            return assign_blocks(dataset, sizes, holdout_fraction, rng);
        }
    }
    throw DataError(fmt::format("dirichlet split: no draw gave every participant >= {} samples in {} attempts",
                                min_samples, kDirichletMaxAttempts));
}

DataPartition split_imbalanced(const Dataset& dataset, std::size_t n_participants, double kappa,
                               std::size_t m, double holdout_fraction, Rng& rng) {
    check_participants(n_participants);
    check_holdout_fraction(holdout_fraction);
    if (!(kappa > 0.0 && kappa < 1.0)) {
        throw ParameterError(fmt::format("kappa must be in (0, 1), got {}", kappa));
    }
    if (m == 0 || m >= n_participants) {
        throw ParameterError(fmt::format("m must satisfy 0 < m < N, got m={} N={}", m, n_participants));
    }
    if (static_cast<double>(m) * kappa >= 1.0) {
        throw ParameterError(fmt::format("m * kappa must be < 1, got {}", static_cast<double>(m) * kappa));
    }
    const std::size_t total = dataset.size();
    const auto large = static_cast<std::size_t>(std::floor(kappa * static_cast<double>(total)));
    const std::size_t rest = total - m * large;
    const std::size_t small = rest / (n_participants - m);
    std::vector<std::size_t> sizes(n_participants, small);
    std::fill_n(sizes.begin(), m, large);
    sizes.back() += rest - small * (n_participants - m);
    return assign_blocks(dataset, sizes, holdout_fraction, rng);
}

DataPartition flip_labels(DataPartition partition, std::size_t participant, double flip_rate,
                          int num_classes, Rng& rng) {
    if (participant >= partition.size()) {
        throw ParameterError(fmt::format("participant {} out of range ({} participants)", participant,
                                         partition.size()));
    }
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) {
        throw ParameterError(fmt::format("flip_rate must be in [0, 1], got {}", flip_rate));
    }
    if (num_classes < 2) {
        throw ParameterError("label flipping needs at least two classes");
    }
    auto& split = partition.participants[participant];
    const std::size_t count = static_cast<std::size_t>(std::floor(flip_rate * static_cast<double>(split.train.size())));
    std::vector<std::size_t> positions(split.train.size());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    rng.shuffle(positions);
    for (std::size_t i = 0; i < count; ++i) {
        int& label = split.train_labels[positions[i]];
        auto replacement = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(num_classes - 1)));
        if (replacement >= label) {
            ++replacement;
        }
        label = replacement;
    }
    return partition;
}

Batch gather_batch(const Dataset& dataset, std::span<const std::size_t> indices, std::span<const int> labels) {
    if (indices.size() != labels.size()) {
        throw ParameterError("batch indices and labels differ in length");
    }
    return Batch{dataset.features().gather_rows(indices), std::vector<int>(labels.begin(), labels.end())};
}

Batch training_set(const Dataset& dataset, const ParticipantSplit& split) {
    return gather_batch(dataset, split.train, split.train_labels);
}

Batch holdout_set(const Dataset& dataset, const ParticipantSplit& split) {
    std::vector<int> labels;
    labels.reserve(split.holdout.size());
    for (std::size_t idx : split.holdout) {
        labels.push_back(dataset.labels()[idx]);
    }
    return gather_batch(dataset, split.holdout, labels);
}

void validate_partition(const Dataset& dataset, const DataPartition& partition) {
    std::vector<char> seen(dataset.size(), 0);
    for (std::size_t n = 0; n < partition.size(); ++n) {
        const auto& split = partition.participants[n];
        if (split.train.size() != split.train_labels.size()) {
            throw DataError(fmt::format("participant {}: train labels out of sync", n));
        }
        for (const auto* indices : {&split.train, &split.holdout}) {
            for (std::size_t idx : *indices) {
                if (idx >= dataset.size()) {
                    throw DataError(fmt::format("participant {}: index {} out of range", n, idx));
                }
                if (seen[idx] != 0) {
                    throw DataError(fmt::format("participant {}: index {} assigned twice", n, idx));
                }
                seen[idx] = 1;
            }
        }
        for (int label : split.train_labels) {
            if (label < 0 || label >= dataset.num_classes()) {
                throw DataError(fmt::format("participant {}: label {} out of range", n, label));
            }
        }
    }
}

}  // namespace cycle
