#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "eccsnn/model.hpp"
#include "eccsnn/parallel.hpp"
#include "eccsnn/snn_model.hpp"

namespace eccsnn {

/**
 * @brief Constant-current input encoder.
 *
 * Each pixel is an IF neuron with threshold kappa0 driven by
 * kappa0 * X / max(X) per step, soft reset; it spikes whenever the
 * accumulated potential reaches kappa0. The brightest pixel spikes every
 * step. An all-zero image never spikes.
 */
class InputEncoder {
public:
    InputEncoder(std::span<const float> pixels, double kappa0);

    /// Advances one step; writes indices of spiking pixels into `spikes`.
    void step(std::vector<std::uint32_t>& spikes);

    std::size_t size() const { return current_.size(); }
    double threshold() const { return threshold_; }
    const std::vector<double>& potential() const { return potential_; }
    const std::vector<double>& current() const { return current_; }

private:
    std::vector<double> current_;
    std::vector<double> potential_;
    double threshold_;
};

/// Spike train of shape T x input dims with entries in {0, 1}.
Tensor encode_input(const Tensor& pixels, double kappa0, int timesteps);

/// Membrane state of one IF layer. Acc is double (float mode) or int64 (fixed point).
template <typename Acc>
struct NeuronLayerState {
    std::vector<Acc> potential;
    std::vector<std::uint32_t> spike_count;
    std::vector<Acc> cumulative_input;
    Acc threshold{};

    NeuronLayerState() = default;
    NeuronLayerState(std::size_t neurons, Acc thr)
        : potential(neurons, Acc{}), spike_count(neurons, 0), cumulative_input(neurons, Acc{}), threshold(thr)
    {
    }
};

/**
 * One integrate-and-fire step with reset by subtraction:
 * V += Z; spike where V >= V_thr; V -= V_thr on spike. At most one spike per
 * neuron per step. Returns the binary spike vector.
 */
template <typename Acc>
std::vector<std::uint8_t> step_layer(NeuronLayerState<Acc>& state, std::span<const Acc> incoming)
{
    if (incoming.size() != state.potential.size()) {
        throw DataError("step_layer: incoming size " + std::to_string(incoming.size()) + " != layer size " +
                        std::to_string(state.potential.size()));
    }
    std::vector<std::uint8_t> spikes(incoming.size(), 0);
    for (std::size_t i = 0; i < incoming.size(); ++i) {
        state.potential[i] += incoming[i];
        state.cumulative_input[i] += incoming[i];
        if (state.potential[i] >= state.threshold) {
            state.potential[i] -= state.threshold;
            ++state.spike_count[i];
            spikes[i] = 1;
        }
    }
    return spikes;
}

struct RecordFlags {
    bool rasters = false;  // per-step spike bits, T x M per layer
    bool history = false;  // per-step V, N and cumulative input, T x M per layer
};

/**
 * @brief Recorded state of one layer after a run. Layer 0 of a trace is the
 * input encoder; layer n >= 1 is SNN layer n. Potentials of fixed-point runs
 * are stored exactly as doubles.
 */
struct LayerTrace {
    double threshold = 1.0;
    bool spiking = true;
    /// Per-step charge injected by TRE; excluded from residuals.
    double tre_current = 0.0;
    std::vector<std::uint32_t> spike_count;
    std::vector<double> potential;
    std::vector<double> cumulative_input;
    std::vector<std::uint32_t> spikes_per_step;  // layer total at each step

    std::vector<std::uint8_t> raster;              // rasters flag
    std::vector<double> potential_history;         // history flag
    std::vector<double> cumulative_history;        // history flag
    std::vector<std::uint32_t> count_history;      // history flag

    std::size_t neuron_count() const { return spike_count.size(); }
};

struct SimTrace {
    int timesteps = 0;
    std::vector<LayerTrace> layers;
    /// Output-layer accumulated potential after each step, T x outputs.
    std::vector<double> output_history;

    const LayerTrace& output() const { return layers.back(); }
    std::size_t output_size() const { return layers.back().potential.size(); }
};

/**
 * @brief Compiled, immutable form of an SnnModel: per-layer fan-out tables
 * for event-driven current accumulation. Safe to share across threads.
 */
class Simulator {
public:
    explicit Simulator(const SnnModel& snn);
    ~Simulator();
    Simulator(Simulator&&) noexcept;
    Simulator& operator=(Simulator&&) noexcept;

    SimTrace run(const Tensor& input, int timesteps, RecordFlags flags = {}) const;

    const SnnModel& model() const { return *snn_; }

private:
    struct Impl;
    std::shared_ptr<const SnnModel> snn_;
    std::unique_ptr<Impl> impl_;
};

SimTrace simulate(const SnnModel& snn, const Tensor& input, int timesteps, RecordFlags flags = {});

/// Argmax of the output layer's accumulated potential; ties go to the lowest index.
std::uint32_t classify(const SimTrace& trace);
std::uint32_t argmax_lowest(std::span<const double> values);

/// r = N_i^n(t) / t. Needs rasters or history when t < T.
double spiking_rate(const SimTrace& trace, std::size_t layer, std::size_t neuron, int t);
/**
 * Delta = (V_i^n(t) - t * c_tre) / (t * V_thr^n), where c_tre is the layer's TRE
 * charge per step (0 without TRE), so Delta is the rate error against the
 * un-shifted bias. Needs history when t < T.
 */
double residual_delta(const SimTrace& trace, std::size_t layer, std::size_t neuron, int t);

/**
 * Simulates every sample of `data` and maps each trace through `fn`;
 * results are ordered by sample index regardless of worker count.
 */
template <typename Fn>
auto map_samples(const Simulator& sim, const DatasetBundle& data, int timesteps, RecordFlags flags,
                 std::size_t workers, Fn&& fn)
{
    using R = std::invoke_result_t<Fn&, std::size_t, const SimTrace&>;
    std::vector<R> out(data.size());
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const SimTrace trace = sim.run(data.sample(i), timesteps, flags);
        out[i] = fn(i, trace);
    });
    return out;
}

}  // namespace eccsnn
