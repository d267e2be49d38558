#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glf/baselines.hpp"
#include "glf/config.hpp"
#include "glf/data.hpp"
#include "glf/model.hpp"
#include "glf/rgsm.hpp"

namespace glf::train {

struct Settings {
    cfg::ModelKind kind = cfg::ModelKind::Glasso;
    model::ModelConfig dims;       // attention kinds; data dims must be filled in
    baseline::CnnConfig cnn_dims;  // cnn kind
    rgsm::PenaltySpec penalty;
    rgsm::OptimMode mode = rgsm::OptimMode::Adam;
    double eta0 = 2e-3;
    double decay = 0.8;
    std::size_t decay_every = 10;
    double beta = 0.9;
    std::size_t batch = 30;
    std::size_t epochs = 80;
    std::size_t patience = 30;
    std::uint64_t seed = 7;
    double threshold = 1e-5;  // dead-column measurement on the shipped weights

    // gd mode estimates the gradient Lipschitz constant for the descent
    // monitor; 0 samples skips the estimate (bound reported as unknown).
    std::size_t lipschitz_samples = 6;
    double lipschitz_radius = 0.05;

    // When positive, eta0 is replaced by fraction * 2 / (beta + estimated
    // L_ip) once the estimate is in (gd mode only). Fractions below 1 keep
    // the step inside the provable-descent region; above 1 violate it.
    double eta_bound_fraction = 0.0;

    static Settings from(const cfg::RunConfig& rc, cfg::ModelKind kind,
                         std::size_t channels, std::size_t seq_len, std::size_t t_f);
};

struct EpochStat {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean pre-step minibatch MSE
    double val_mse = 0.0;     // with the shipped-weight convention (see fit)
    double eta = 0.0;
    double seconds = 0.0;
};

struct GroupStat {
    std::string name;  // query projection parameter name
    std::size_t live = 0;
    std::size_t total = 0;
    double rate = 0.0;  // dead fraction
};

struct Result {
    cfg::ModelKind kind = cfg::ModelKind::Glasso;
    model::ModelParams params;  // shipped weights; meaningful unless kind == cnn
    baseline::Cnn1dModel cnn;   // shipped weights when kind == cnn

    std::vector<EpochStat> epochs;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
    bool stopped_early = false;
    double final_train_loss = 0.0;

    std::size_t param_count = 0;
    std::vector<GroupStat> groups;  // per query projection; empty for cnn
    double pruning_rate = 0.0;      // dead columns over all groups

    double l_ip = 0.0;  // gd-mode estimate, 0 when skipped
    rgsm::DescentMonitor monitor{0.9, 0.0};

    std::uint64_t rng_state = 0;
    double train_seconds = 0.0;
    double lipschitz_seconds = 0.0;
    std::vector<double> epoch_seconds;
};

/// Trains the selected model with the splitting optimizer. gd mode takes one
/// monitored full-batch step per epoch; adam mode takes monitored minibatch
/// steps. Validation (and the shipped checkpoint) use the prox-extracted
/// weights for penalized runs, the raw weights otherwise; the best-validation
/// epoch is restored before return and early stopping waits `patience`
/// epochs for an improvement. Deterministic given (dataset, settings).
/// Throws NumericError naming the epoch if the loss stops being finite.
Result fit(const data::Dataset& ds, const Settings& s);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
    std::size_t horizon = 0;
};

struct Predictions {
    std::vector<std::size_t> event_ids;  // dataset indices
    std::vector<std::vector<double>> y_true;
    std::vector<std::vector<double>> y_hat;
    Metrics metrics;  // pooled over every horizon sample of the split
};

Predictions evaluate(const model::ModelParams& p, const data::Dataset& ds,
                     data::Split split, attn::AttendMode mode);
Predictions evaluate(const baseline::Cnn1dModel& m, const data::Dataset& ds,
                     data::Split split);

/// Per-event linear-prediction fit on the observed target samples [0, t_f],
/// extrapolated over the horizon. Orders are clamped to the observation
/// length; a singular fit falls back to the largest smaller order that
/// succeeds, and to a constant extrapolation if none does.
Predictions evaluate_prony(const data::Dataset& ds, data::Split split, std::size_t order);

struct PronySweep {
    std::size_t best_order = 0;
    double best_val_mse = 0.0;
    std::vector<std::pair<std::size_t, double>> val_mse;
};

/// Picks the order with the lowest validation MSE (ties to the smaller).
PronySweep prony_order_sweep(const data::Dataset& ds, const std::vector<std::size_t>& orders);

/// Schema: event_id,split,t_index,y_true,y_hat; one row per horizon sample,
/// 17 significant digits.
void write_predictions_csv(const Predictions& pred, const data::Dataset& ds,
                           data::Split split, const std::string& path);

/// Pools MSE/MAE back out of a predictions CSV (cross-check oracle).
Metrics recompute_metrics_csv(const std::string& path);

}  // namespace glf::train
