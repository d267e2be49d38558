#pragma once

#include <cstdint>
#include <string>

#include "glf/baselines.hpp"
#include "glf/model.hpp"

namespace glf::ckpt {

struct Checkpoint {
    model::ModelParams params;
    std::uint64_t rng_state = 0;
    bool pruned = false;            // dead query columns zeroed; sparse-path eligible
    double prune_threshold = 0.0;   // column-norm threshold that produced the zeros
};

// JSON container with the config echo, one flat array per parameter tensor,
// the plain/group label of each, and the optimizer RNG state. Values are
// serialized with shortest round-trip formatting, so load is bit-exact.
void save(const std::string& path, const model::ModelParams& params,
          std::uint64_t rng_state, bool pruned = false, double prune_threshold = 0.0);

// Rebuilds the parameter set from the config echo and overwrites every
// tensor from the stored arrays. Missing, extra, misshapen, or relabeled
// entries are IoErrors, as is loading a checkpoint of the other kind.
Checkpoint load(const std::string& path);

struct CnnCheckpoint {
    baseline::Cnn1dModel model;
    std::uint64_t rng_state = 0;
};

// Same container with kind "cnn" and the conv-stack config echo.
void save_cnn(const std::string& path, const baseline::Cnn1dModel& m,
              std::uint64_t rng_state);

CnnCheckpoint load_cnn(const std::string& path);

// "attention" or "cnn" without loading the tensors; IoError on anything else.
std::string peek_kind(const std::string& path);

}  // namespace glf::ckpt
