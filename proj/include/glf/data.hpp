#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "glf/rng.hpp"
#include "glf/tensor.hpp"

namespace glf::data {

// One damped oscillatory mode of the post-fault transient.
struct Mode {
    double damping = 0.5;  // 1/s, must be positive (stable ring-down)
    double freq = 3.0;     // rad/s
    double amp = 0.05;
    double phase = 0.0;
};

// Recipe for one synthetic fault event: a steady pre-fault level, a short
// sag (voltages) or surge (currents) while the fault is on, and a damped
// modal ring-down after it clears at sample index t_f.
struct GridEventSpec {
    std::size_t bus_count = 3;   // voltage channels: target bus + neighbors
    std::size_t line_count = 2;  // current channels
    std::size_t samples = 64;    // window length L
    double sample_rate = 6.4;    // samples per second
    std::size_t t_f = 16;        // fault clearing index, < samples
    std::vector<Mode> modes;
    double v_ss = 1.0;       // steady-state voltage level (per unit)
    double noise = 0.01;     // measurement noise stddev, 0 disables
    double amp_jitter = 0.3;    // relative per-event amplitude spread
    double phase_jitter = 0.6;  // absolute per-event phase spread, radians

    std::size_t channels() const { return bus_count + line_count; }
    void validate() const;  // throws ConfigError on out-of-range fields

    // Three-mode default in the inter-area oscillation band.
    static GridEventSpec defaults();
};

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);  // throws IoError

enum class ChannelKind { TargetVoltage, NeighborVoltage, LineCurrent };
const char* kind_name(ChannelKind k);
ChannelKind kind_from_name(const std::string& name);  // throws IoError
ChannelKind kind_of(const GridEventSpec& spec, std::size_t channel);

// Linear clock over the window, 0 at the fault, clamped to [-1, 1] at the
// edges. Scale is whichever side of the fault is longer, so both bounds
// are respected regardless of where t_f sits.
std::vector<double> make_stamp(std::size_t len, std::size_t t_f);

struct FaultEvent {
    Tensor features;            // channels x samples
    std::vector<double> stamp;  // samples entries
    std::size_t t_f = 0;
    std::size_t target_channel = 0;
};

// Draws one event. The target channel realizes the spec's modes with
// per-event jittered amplitudes/phases; other channels couple to the same
// modes through a per-channel gain and phase shift.
FaultEvent generate_event(const GridEventSpec& spec, Rng& rng);

struct SplitRatio {
    double train = 1000.0 / 2100.0;
    double val = 350.0 / 2100.0;
    double test = 750.0 / 2100.0;
};

// Largest-remainder apportionment of n into train/val/test counts.
// Throws ConfigError if ratios are invalid or any split comes out empty.
std::vector<std::size_t> split_sizes(std::size_t n, const SplitRatio& ratio);

struct Dataset {
    std::vector<FaultEvent> events;
    std::vector<Split> split;          // parallel to events
    std::vector<ChannelKind> kinds;    // per channel
    std::vector<double> channel_mean;  // train-split means already subtracted

    std::size_t count(Split s) const;
    std::vector<std::size_t> indices(Split s) const;
};

// Deterministic dataset: event i is drawn from fork(i) of the seed stream,
// splits are assigned by index, and every channel is shifted by its mean
// over the train split only.
Dataset build_dataset(const GridEventSpec& spec, std::size_t n_events,
                      std::uint64_t seed, SplitRatio ratio = {});

struct FaultWindow {
    Tensor x_en;    // (channels+1) x L, last row is the stamp
    Tensor x_de;    // same, signal rows zeroed strictly after t_f
    Tensor target;  // 1 x (L - t_f), target-channel values from t_f on
};

FaultWindow to_window(const FaultEvent& ev);

// One row per sample, floats at 17 significant digits so the round trip is
// lossless. Channel means are not persisted; a file read back is treated
// as already shifted.
void write_events_csv(const Dataset& ds, const std::string& path);
Dataset read_events_csv(const std::string& path);

}  // namespace glf::data
