#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "glf/data.hpp"
#include "glf/model.hpp"
#include "glf/rng.hpp"
#include "glf/tensor.hpp"

namespace glf::baseline {

// Linear-prediction fit: x_hat(n) = sum_k c_k z_k^n.
struct PronyModel {
    std::size_t order = 0;
    std::vector<std::complex<double>> poles;
    std::vector<std::complex<double>> amplitudes;

    double max_pole_magnitude() const;
    // any pole outside the closed unit disk makes extrapolation grow
    bool unstable() const { return max_pole_magnitude() > 1.0 + 1e-9; }
};

// Least squares on the Hankel prediction system, poles from the companion
// matrix of the characteristic polynomial, amplitudes from a Vandermonde
// least squares over the full observation. Needs len(x) >= 2p + 1; a
// rank-deficient system (signal of lower order than p) is an error that
// recommends a smaller p.
PronyModel prony_fit(const std::vector<double>& x, std::size_t p);

struct PronyTrace {
    std::vector<double> values;
    double max_imag_residue = 0.0;  // largest imaginary part discarded
};

// Evaluates the fit at indices from .. from+count-1 (0 = first fitted
// sample), so extrapolation is any range past the observation.
PronyTrace prony_predict(const PronyModel& m, std::size_t from, std::size_t count);

struct CnnConfig {
    std::size_t channels = 5;  // signal rows; input also carries the stamp row
    std::size_t seq_len = 64;
    std::size_t t_f = 16;
    std::size_t width = 32;
    std::size_t depth = 4;
    std::size_t kernel = 3;
    double init = 0.08;

    std::size_t horizon() const { return seq_len - t_f; }
    // samples ending at the cut that can influence the prediction
    std::size_t receptive_field() const { return depth * (kernel - 1) + 1; }
    void validate() const;
};

// Causal conv stack with ELU between layers; the head maps the feature
// column at the observation cut onto the horizon, so samples past the cut
// cannot reach the prediction by construction.
struct Cnn1dModel {
    CnnConfig cfg;
    std::vector<Tensor> kernels;  // [0]: width x (channels+1) x K, rest width x width x K
    Tensor head;                  // width x horizon

    static Cnn1dModel init(const CnnConfig& cfg, Rng& rng);
};

std::vector<model::ParamRef> cnn_parameters(const Cnn1dModel& m);

Tensor cnn_forward(const Cnn1dModel& m, const Tensor& x_de, Tape* tape = nullptr);

Tensor cnn_predict(const Cnn1dModel& m, const data::FaultWindow& w);

struct CnnTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch = 30;
    double eta0 = 2e-3;
    double decay = 0.8;
    std::size_t decay_every = 10;
    std::uint64_t seed = 0;
};

struct CnnTrainResult {
    Cnn1dModel model;
    std::vector<double> epoch_loss;  // mean train MSE per epoch
};

// Minibatch Adam on MSE over the train split, stepped learning rate. A
// non-finite loss or update aborts with the last finite loss in the message.
CnnTrainResult cnn_train(const data::Dataset& ds, const CnnConfig& cfg,
                         const CnnTrainConfig& tc);

}  // namespace glf::baseline
