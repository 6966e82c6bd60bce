#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cycle/numerics.hpp"

namespace cycle {

/// Labelled feature rows. Immutable after construction.
class Dataset {
public:
    Dataset(Matrix features, std::vector<int> labels, int num_classes);

    const Matrix& features() const noexcept { return features_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    int num_classes() const noexcept { return num_classes_; }
    std::size_t dim() const noexcept { return features_.cols(); }
    std::size_t size() const noexcept { return labels_.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    Matrix features_;
    std::vector<int> labels_;
    int num_classes_;
};

/// One participant's share of a dataset.
///
/// `train_labels` runs parallel to `train` and starts as a copy of the parent
/// labels; label corruption edits it without touching the parent dataset.
/// Holdout labels are always read from the parent.
struct ParticipantSplit {
    std::vector<std::size_t> train;
    std::vector<int> train_labels;
    std::vector<std::size_t> holdout;

    friend bool operator==(const ParticipantSplit&, const ParticipantSplit&) = default;
};

struct DataPartition {
    std::vector<ParticipantSplit> participants;

    std::size_t size() const noexcept { return participants.size(); }
    friend bool operator==(const DataPartition&, const DataPartition&) = default;
};

/// A gathered minibatch.
struct Batch {
    Matrix features;
    std::vector<int> labels;
};

inline constexpr double kDefaultHoldoutFraction = 0.2;

/// Isotropic Gaussian classes around centers at least `separation * spread` apart.
Dataset make_blobs(int num_classes, std::size_t dim, std::size_t samples_per_class, double spread,
                   Rng& rng, double separation = 4.0);

/// Rows of `dim` numeric columns followed by an integer label column.
Dataset load_csv(const std::filesystem::path& path, bool has_header = false);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

DataPartition split_homogeneous(const Dataset& dataset, std::size_t n_participants,
                                double holdout_fraction, Rng& rng);

/// Size skew: participant n receives a fraction p_n ~ Dir(delta) of all samples.
DataPartition split_dirichlet(const Dataset& dataset, std::size_t n_participants, double delta,
                              double holdout_fraction, Rng& rng);

/// The first `m` participants each receive a `kappa` fraction; the rest share the remainder.
DataPartition split_imbalanced(const Dataset& dataset, std::size_t n_participants, double kappa,
                               std::size_t m, double holdout_fraction, Rng& rng);

/// Replaces floor(flip_rate * |train|) of one participant's training labels
/// with a uniformly drawn different class.
DataPartition flip_labels(DataPartition partition, std::size_t participant, double flip_rate,
                          int num_classes, Rng& rng);

Batch gather_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                   std::span<const int> labels);
Batch training_set(const Dataset& dataset, const ParticipantSplit& split);
Batch holdout_set(const Dataset& dataset, const ParticipantSplit& split);

/// Throws DataError unless the partition's index sets are valid and disjoint.
void validate_partition(const Dataset& dataset, const DataPartition& partition);

}  // namespace cycle
