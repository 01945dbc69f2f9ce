#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcmi/array.hpp"

namespace fcmi {

/// What the optimizer is allowed to see: features and groups, never labels.
struct TrainingView {
    const Array& features;
    std::span<const int> groups;
    std::size_t group_count;
};

struct Dataset {
    Array features;                              // N × D
    std::vector<int> groups;                     // dense ids in [0, group_count)
    std::optional<std::vector<int>> labels;      // evaluation only
    std::vector<std::string> feature_names;
    std::vector<std::string> group_names;        // original value of each dense id
    std::size_t group_count = 0;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }

    /// Throws unless N ≥ 1, ids are in range, every group has a member and
    /// all features are finite.
    void validate() const;
    TrainingView training_view() const { return {features, groups, group_count}; }
};

struct CsvOptions {
    std::string group_column = "group";
    std::optional<std::string> label_column;
    bool standardize = true;
};

/// Reads a header-first CSV. The group column (and label column, if named) are
/// mapped to dense ids by first appearance; every other column is a numeric
/// feature, in header order.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Raw cells of a CSV file: trimmed header names plus data rows of equal width.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of the named column; throws FormatError if absent.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// Writes features with full precision plus "group" and, if present, "label" columns.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Per-column zero mean, unit variance. Constant columns are only centered.
void standardize(Array& features);

struct SyntheticSpec {
    std::size_t classes = 3;
    std::size_t groups = 2;
    std::size_t per_cell_count = 150;
    double class_sep = 8.0;
    double group_shift = 6.0;
    std::size_t dim = 16;
    double noise_sd = 1.0;
    std::uint64_t seed = 1;
};

/// Gaussian blobs, one per (class, group) cell. Class means form a centered
/// regular simplex with pairwise distance class_sep in the first `classes`
/// coordinates; group t is shifted by t·group_shift along coordinate `classes`,
/// which is orthogonal to every class mean. Requires dim > classes.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// A seeded shuffle of [0, n) cut into consecutive batches; the last may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed);

// Binary dataset container, little-endian:
//   char[4] "FCMI" | u32 version (1) | u32 kind (2 = dataset)
//   u64 N | u64 D | u32 group_count | u8 has_labels
//   f64 features[N·D] row-major | i32 groups[N] | i32 labels[N] if has_labels
void save_dataset_binary(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset_binary(const std::filesystem::path& path);

}  // namespace fcmi
