#include "eccsnn/snn_model.hpp"

#include <cmath>

#include "eccsnn/error.hpp"

namespace eccsnn {

std::string_view to_string(ConversionMode mode)
{
    switch (mode) {
    case ConversionMode::ECC: return "ecc";
    case ConversionMode::WN: return "wn";
    case ConversionMode::TB: return "tb";
    }
    return "?";
}

std::optional<ConversionMode> parse_conversion_mode(std::string_view name)
{
    if (name == "ecc") return ConversionMode::ECC;
    if (name == "wn") return ConversionMode::WN;
    if (name == "tb") return ConversionMode::TB;
    return std::nullopt;
}

std::string_view to_string(SnnLayerKind kind)
{
    switch (kind) {
    case SnnLayerKind::Conv2D: return "Conv2D";
    case SnnLayerKind::Dense: return "Dense";
    case SnnLayerKind::AvgPool: return "AvgPool";
    }
    return "?";
}

std::optional<SnnLayerKind> parse_snn_layer_kind(std::string_view name)
{
    if (name == "Conv2D") return SnnLayerKind::Conv2D;
    if (name == "Dense") return SnnLayerKind::Dense;
    if (name == "AvgPool") return SnnLayerKind::AvgPool;
    return std::nullopt;
}

void ConversionConfig::validate() const
{
    if (!(eta >= 0.0 && eta < 1.0)) throw UsageError("eta must lie in [0,1), got " + std::to_string(eta));
    if (!(default_kappa >= 1.0)) throw UsageError("kappa must be >= 1, got " + std::to_string(default_kappa));
    for (std::size_t i = 0; i < kappa.size(); ++i) {
        if (!(kappa[i] >= 1.0)) {
            throw UsageError("kappa[" + std::to_string(i) + "] must be >= 1, got " + std::to_string(kappa[i]));
        }
    }
    if (!(kappa0 > 0.0)) throw UsageError("kappa0 must be > 0");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw UsageError("epsilon must be finite and >= 0");
    if (timesteps < 1) throw UsageError("timesteps must be >= 1, got " + std::to_string(timesteps));
    if (quant_bits && (*quant_bits < 2 || *quant_bits > 30)) {
        throw UsageError("bits must lie in [2,30], got " + std::to_string(*quant_bits));
    }
}

double SnnLayer::threshold() const
{
    return std::visit([](const auto& s) { return static_cast<double>(s.threshold); }, synapses);
}

double tre_step_current(const SnnLayer& layer, const SnnProvenance& provenance)
{
    if (provenance.tre_eta == 0.0 || provenance.tre_timesteps < 1) return 0.0;
    // Thresholds and biases share one scale per layer, so the nominal charge
    // follows the stored threshold in both numeric modes.
    return provenance.tre_eta * layer.threshold() / provenance.tre_timesteps;
}

void validate(const SnnModel& snn)
{
    if (snn.layers.empty()) throw InvariantError("snn '" + snn.name + "' has no layers");
    if (snn.encoder.timesteps < 1 || !(snn.encoder.kappa0 > 0.0)) {
        throw InvariantError("snn '" + snn.name + "': invalid encoder parameters");
    }
    Shape shape = snn.input_shape;
    for (std::size_t n = 0; n < snn.layers.size(); ++n) {
        const SnnLayer& layer = snn.layers[n];
        const std::string where = "snn layer '" + layer.name + "': ";
        if (shape_size(layer.in_shape) != shape_size(shape)) {
            throw InvariantError(where + "input " + shape_str(layer.in_shape) + " does not chain from " +
                                 shape_str(shape));
        }
        if (layer.spiking != (n + 1 < snn.layers.size())) {
            throw InvariantError(where + "only the last layer is a non-spiking accumulator");
        }
        if (layer.fixed_point() != snn.fixed_point()) throw InvariantError(where + "numeric mode mismatch");
        if (!(layer.threshold() > 0.0)) throw InvariantError(where + "threshold must be > 0");

        Shape want_w;
        switch (layer.kind) {
        case SnnLayerKind::Conv2D:
            want_w = {layer.out_shape.at(0), layer.in_shape.at(0), layer.kernel_h, layer.kernel_w};
            break;
        case SnnLayerKind::Dense:
            want_w = {layer.out_shape.at(0), shape_size(layer.in_shape)};
            break;
        case SnnLayerKind::AvgPool:
            want_w = {1};
            break;
        }
        std::visit(
            [&](const auto& s) {
                if (s.weights.shape() != want_w) {
                    throw InvariantError(where + "weight shape " + shape_str(s.weights.shape()) + " != " +
                                         shape_str(want_w));
                }
                if (s.bias.size() != layer.bias_count()) throw InvariantError(where + "bias length mismatch");
            },
            layer.synapses);
        if (const auto* fx = std::get_if<FixedSynapses>(&layer.synapses)) {
            const std::int64_t hi = (std::int64_t{1} << *snn.fixed_bits) - 1;
            const std::int64_t lo = -(std::int64_t{1} << *snn.fixed_bits);
            for (auto w : fx->weights.data()) {
                if (w < lo || w > hi) throw InvariantError(where + "fixed-point weight outside signed range");
            }
        }
        shape = layer.out_shape;
    }
}

}  // namespace eccsnn
