#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "eccsnn/model.hpp"
#include "eccsnn/snn_engine.hpp"
#include "eccsnn/snn_model.hpp"

namespace eccsnn {

/// Geometry of one synaptic layer, shared by CNN stages and SNN layers.
struct LayerGeometry {
    SnnLayerKind kind = SnnLayerKind::Dense;
    Shape in_shape, out_shape;
    std::size_t kernel_h = 0, kernel_w = 0, stride = 1, padding = 0, window = 0;
};

LayerGeometry geometry_of(const LayerSpec& op);
LayerGeometry geometry_of(const SnnLayer& layer);

/// Exact number of synapses leaving each presynaptic neuron of the layer (border effects included).
std::vector<std::uint32_t> presynaptic_fanout(const LayerGeometry& g);

/**
 * @brief Per-layer connectivity. Index 0 is the input layer, n >= 1 the
 * synaptic layers. fan_in uses the interior-neuron count (C*Kh*Kw for conv);
 * fan_out is the exact synapse count into layer n+1 averaged over layer n.
 */
struct FanCounts {
    std::vector<std::size_t> neurons;
    std::vector<double> fan_in;
    std::vector<double> fan_out;
    std::vector<std::uint64_t> synapses_out;
};

FanCounts fan_counts(const CnnModel& model);
FanCounts fan_counts(const SnnModel& snn);

/// sum_n (2 f_in^n + 1) M^n over the synaptic layers.
std::uint64_t mac_ops(const CnnModel& model);

struct SynopsBreakdown {
    double total = 0.0;
    std::vector<double> per_layer;  // by source layer
    std::vector<double> per_step;   // t = 1..T
    /// s^n: spikes per neuron over the whole run, by layer.
    std::vector<double> spikes_per_neuron;
};

/// sum_t sum_n f_out^n * (spikes emitted by layer n at t), i.e. f_out^n s^n(t) M^n.
SynopsBreakdown synaptic_ops(const SimTrace& trace, const FanCounts& fans);

struct ResidualSummary {
    std::size_t layer = 0;
    double mean_abs = 0.0;
    double max_abs = 0.0;
};

/// Mean and max |Delta_i^n(T)| (see residual_delta) for every spiking SNN layer (n >= 1, output excluded).
std::vector<ResidualSummary> residual_stats(const SimTrace& trace);

/// Rate-ideal spike counts floor(T a / lambda), clipped to [0, T]; one vector per stage.
std::vector<std::vector<std::uint32_t>> expected_spike_counts(const CnnModel& model, const CalibrationStats& stats,
                                                              const Tensor& input, int timesteps);

struct EnergyReport {
    std::uint64_t cnn_macs = 0;
    double snn_synops = 0.0;  // mean per image
    std::vector<double> synops_per_layer;
    std::vector<double> synops_per_step;
    std::vector<double> spikes_per_neuron;  // s^n, mean per image
};

/// Result of simulating a dataset at one T; per-image quantities averaged by sample index order.
struct Evaluation {
    int timesteps = 0;
    std::size_t samples = 0;
    double accuracy = 0.0;
    std::vector<std::uint32_t> predictions;
    EnergyReport energy;
    std::vector<ResidualSummary> residuals;        // mean over images
    std::vector<double> spike_counts_per_layer;    // total spikes per layer, mean over images
};

Evaluation evaluate(const Simulator& sim, const DatasetBundle& data, int timesteps, const FanCounts& fans,
                    std::size_t workers = 1);

double cnn_accuracy(const CnnModel& model, const DatasetBundle& data, std::size_t workers = 1);

struct SweepRow {
    int timesteps = 0;
    double cnn_acc = 0.0;
    double snn_acc = 0.0;
    double loss_pp = 0.0;  // (cnn_acc - snn_acc) in percentage points
    double synops = 0.0;   // mean per image
    std::uint64_t macs = 0;
};

using SnnFactory = std::function<SnnModel(int timesteps)>;

/// One row per T; `make_snn` may rebuild the SNN per T (TRE depends on T).
std::vector<SweepRow> accuracy_sweep(const CnnModel& model, const SnnFactory& make_snn, const DatasetBundle& data,
                                     std::span<const int> timesteps, std::size_t workers = 1);
std::vector<SweepRow> accuracy_sweep(const CnnModel& model, const SnnModel& snn, const DatasetBundle& data,
                                     std::span<const int> timesteps, std::size_t workers = 1);

/// Coefficient of determination of the least-squares line through (x, y).
double linear_fit_r2(std::span<const double> x, std::span<const double> y);

}  // namespace eccsnn
