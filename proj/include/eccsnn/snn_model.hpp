#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eccsnn/tensor.hpp"

namespace eccsnn {

enum class ConversionMode { ECC, WN, TB };

std::string_view to_string(ConversionMode mode);
std::optional<ConversionMode> parse_conversion_mode(std::string_view name);

inline constexpr double kDefaultKappa = 100.0;
inline constexpr double kDefaultEta = 0.5;
inline constexpr double kDefaultEpsilon = 0.001;

struct ConversionConfig {
    ConversionMode mode = ConversionMode::ECC;
    /// Per-SNN-layer current amplification factor; layers beyond the vector
    /// (or all layers, when empty) use default_kappa.
    std::vector<double> kappa;
    double default_kappa = kDefaultKappa;
    /// Input encoder amplification, kept independent of kappa[0].
    double kappa0 = kDefaultKappa;
    double eta = kDefaultEta;
    double epsilon = kDefaultEpsilon;
    int timesteps = 256;
    std::optional<int> quant_bits;

    double kappa_for(std::size_t layer) const
    {
        return layer < kappa.size() ? kappa[layer] : default_kappa;
    }

    /// Throws UsageError on eta outside [0,1), kappa < 1, T < 1, bits outside [2,30].
    void validate() const;

    bool operator==(const ConversionConfig&) const = default;
};

/// Per-stage activation maxima. lambdas[0] is the input (always 1);
/// lambdas[n] belongs to SNN layer n.
struct CalibrationStats {
    std::vector<double> lambdas;
    std::size_t sample_count = 0;
    /// BatchNorm epsilon used when folding the calibrated model.
    double epsilon = kDefaultEpsilon;

    bool operator==(const CalibrationStats&) const = default;
};

enum class SnnLayerKind { Conv2D, Dense, AvgPool };

std::string_view to_string(SnnLayerKind kind);
std::optional<SnnLayerKind> parse_snn_layer_kind(std::string_view name);

/// Float-mode synapses: per-timestep bias current per output channel (conv,
/// pool) or unit (dense).
struct FloatSynapses {
    Tensor weights;
    std::vector<float> bias;
    float threshold = 1.0f;

    bool operator==(const FloatSynapses&) const = default;
};

/// Fixed-point synapses after quantize(); scale is the layer's max |W| before
/// quantization.
struct FixedSynapses {
    IntTensor weights;
    std::vector<std::int64_t> bias;
    std::int64_t threshold = 1;
    double scale = 1.0;

    bool operator==(const FixedSynapses&) const = default;
};

/**
 * @brief A converted synaptic layer.
 *
 * Weights keep the CNN layout: conv OxCxKhxKw, dense NxM, avg-pool a single
 * shared weight of shape {1}.
 */
struct SnnLayer {
    SnnLayerKind kind = SnnLayerKind::Dense;
    std::string name;
    Shape in_shape, out_shape;
    std::size_t kernel_h = 0, kernel_w = 0, stride = 1, padding = 0;  // Conv2D
    std::size_t window = 0;                                            // AvgPool (uses stride)
    bool spiking = true;  // false for the output accumulator
    std::variant<FloatSynapses, FixedSynapses> synapses;

    std::size_t neuron_count() const { return shape_size(out_shape); }
    /// Number of distinct bias entries (output channels or units).
    std::size_t bias_count() const { return out_shape[0]; }
    bool fixed_point() const { return std::holds_alternative<FixedSynapses>(synapses); }
    double threshold() const;

    bool operator==(const SnnLayer&) const = default;
};

struct EncoderParams {
    double kappa0 = kDefaultKappa;
    int timesteps = 256;

    bool operator==(const EncoderParams&) const = default;
};

struct SnnProvenance {
    ConversionConfig config;
    CalibrationStats stats;
    /// TRE strength already folded into the bias currents (0 when not applied).
    double tre_eta = 0.0;
    int tre_timesteps = 0;

    bool operator==(const SnnProvenance&) const = default;
};

struct SnnModel {
    std::string name;
    Shape input_shape;
    std::vector<SnnLayer> layers;
    EncoderParams encoder;
    /// Bit width b in fixed-point mode; empty in float mode.
    std::optional<int> fixed_bits;
    SnnProvenance provenance;

    bool fixed_point() const { return fixed_bits.has_value(); }

    bool operator==(const SnnModel&) const = default;
};

/**
 * Per-step current that TRE injected into every neuron of `layer`
 * (eta * V_thr / T); 0 without TRE.
 */
double tre_step_current(const SnnLayer& layer, const SnnProvenance& provenance);

/// Checks layer shapes, parameter sizes and mode invariants; throws InvariantError.
void validate(const SnnModel& snn);

}  // namespace eccsnn
