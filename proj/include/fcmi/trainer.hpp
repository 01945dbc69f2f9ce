#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fcmi/clustering.hpp"
#include "fcmi/data_io.hpp"
#include "fcmi/metrics.hpp"
#include "fcmi/model.hpp"

namespace fcmi {

/// Hyper-parameters of one training run.
///
/// Two different betas exist: beta_fair weights I(G;C) in the training loss,
/// f_beta_weight is the β of the F_β report metric.
struct TrainConfig {
    double alpha = 0.04;
    double beta_fair = 0.20;
    double tau = 0.1;
    std::size_t k = 0;  // required
    std::size_t latent_dim = 16;
    /// Encoder widths from input to latent. Empty means {D, 256, 64, latent_dim}.
    std::vector<std::size_t> layer_dims;
    std::size_t warmup_epochs = 20;
    std::size_t max_epochs = 300;
    std::size_t batch_size = 256;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double f_beta_weight = 1.0;

    void validate() const;
    std::vector<std::size_t> resolved_layer_dims(std::size_t input_dim) const;

    /// JSON with exactly the field names above. Missing keys keep their
    /// defaults (except k); unknown keys are rejected.
    static TrainConfig from_json(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    // Batch means. The clustering terms are 0 during warmup, where they are not evaluated.
    double l_rec = 0.0;
    double l_clu = 0.0;
    double l_fair = 0.0;
    double l_total = 0.0;
    // Full-dataset estimates from the current soft assignments.
    double mi_gc = 0.0;
    double cmi_xcg = 0.0;
    // Present when the dataset has labels (bal/mnce also need at least two groups).
    std::optional<double> acc, nmi, bal, mnce, f_beta;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct AdamMoments {
    ModelParams first;
    ModelParams second;
};

struct TrainState {
    ModelParams params;
    AdamMoments moments;
    std::optional<ClusterCenters> centers;
    std::size_t epoch = 0;
    std::size_t step = 0;  // Adam steps taken
    std::uint64_t seed = 0;
};

struct AdamSettings {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update; t is the 1-based step index.
void adam_step(TrainState& state, const ModelParams& grads, const AdamSettings& settings, std::size_t t);

/// Observation points for tests and progress output.
struct TrainHooks {
    std::function<void(std::size_t epoch)> on_centers_refreshed;
    /// clustering_terms is true when L_clu and L_fair were part of the batch loss.
    std::function<void(std::size_t epoch, std::size_t batch, bool clustering_terms)> on_batch;
    std::function<void(const EpochLog&)> on_epoch;
};

struct FitOptions {
    TrainHooks hooks;
    /// Write a checkpoint every this many epochs (0 = never) into checkpoint_dir.
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
};

struct FitResult {
    ModelParams params;
    std::vector<EpochLog> logs;
    std::optional<ClusterCenters> centers;
};

/// Warmup on reconstruction, then the joint objective with per-epoch k-means
/// center refresh. Deterministic for a fixed config, dataset and seed.
FitResult fit(const TrainConfig& config, const Dataset& dataset, const FitOptions& options = {});

/// Encodes the dataset, fits k-means, hard-assigns by the soft-assignment
/// argmax and scores the result.
MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, const TrainConfig& config);

/// One row per epoch; reals at six decimals, absent metrics as empty cells.
void write_log_csv(const std::vector<EpochLog>& logs, const std::filesystem::path& path);

}  // namespace fcmi
