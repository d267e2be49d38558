#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "glf/data.hpp"
#include "glf/model.hpp"
#include "glf/baselines.hpp"
#include "glf/rgsm.hpp"

namespace glf::cfg {

/// Trainable model selector. Sweeps additionally accept "prony", which has
/// no trainable weights and therefore no ModelKind.
enum class ModelKind { Glasso, Lasso, Dense, Cnn };

std::string kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);  // throws ConfigError

/// Fully resolved run configuration. One struct covers every subcommand;
/// commands read the sections they need and ignore the rest, but the whole
/// block is echoed to config.resolved so any run can be reproduced from its
/// artifacts alone.
struct RunConfig {
    // [run]
    std::uint64_t seed = 7;
    std::string out_dir = "run_out";
    ModelKind model = ModelKind::Glasso;
    std::string dataset;     // event CSV consumed by train/eval/sweep
    std::string checkpoint;  // checkpoint consumed by eval/prune/bench
    data::Split split = data::Split::Test;

    // [data]
    std::size_t events = 210;
    data::GridEventSpec spec = data::GridEventSpec::defaults();
    data::SplitRatio ratio;

    // [model]
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t kernel = 3;
    std::size_t enc_layers = 2;
    std::size_t scale_dim = 0;  // 0 = sequence length
    double wq_init = 0.01;
    double init = 0.08;
    bool bias = false;
    std::size_t cnn_width = 32;
    std::size_t cnn_depth = 4;

    // [optim]
    rgsm::OptimMode mode = rgsm::OptimMode::Adam;
    double eta0 = 2e-3;
    double decay = 0.8;
    std::size_t decay_every = 10;
    double beta = 0.9;
    double lambda = 0.01;
    std::string penalty = "auto";  // auto | none | l1 | group
    std::size_t batch = 30;
    std::size_t epochs = 80;
    std::size_t patience = 30;

    // [eval]
    double threshold = 1e-5;
    std::vector<std::string> metrics = {"mse", "mae"};

    // [bench]
    std::vector<std::size_t> n_grid = {64, 128, 256, 512};
    std::size_t reps = 30;
    double pruning = 0.9;

    // [sweep]
    std::vector<std::string> sweep_models = {"glasso", "lasso", "dense", "cnn", "prony"};
    std::vector<std::size_t> prony_orders = {1, 2, 3, 4, 5, 6, 7, 8};

    void validate() const;  // throws ConfigError naming the offending key

    /// Penalty for the selected model; "auto" maps glasso/lasso/dense/cnn to
    /// group/l1/none/none.
    rgsm::PenaltySpec penalty_spec() const;
    rgsm::PenaltySpec penalty_spec(ModelKind kind) const;

    /// Model dims with the data-dependent fields filled from a dataset.
    model::ModelConfig model_config(std::size_t channels, std::size_t seq_len,
                                    std::size_t t_f) const;
    baseline::CnnConfig cnn_config(std::size_t channels, std::size_t seq_len,
                                   std::size_t t_f) const;

    /// Round-trippable key=value echo of every field (config.resolved).
    std::string serialize() const;
};

/// Parses the flat `[section]` / `key = value` format. Unknown sections or
/// keys, duplicate keys, and malformed values are ConfigErrors naming the
/// key and line. `origin` tags error messages (usually the file path).
RunConfig parse_config(const std::string& text, const std::string& origin = "config");

RunConfig load_config(const std::string& path);

}  // namespace glf::cfg
