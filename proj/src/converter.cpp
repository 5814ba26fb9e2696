#include "eccsnn/converter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "eccsnn/parallel.hpp"

namespace eccsnn {

namespace {

CnnModel fold_impl(const CnnModel& model, std::optional<double> epsilon_override)
{
    CnnModel out;
    out.name = model.name;
    out.input_shape = model.input_shape;
    out.metadata = model.metadata;
    out.params = model.params;

    for (std::size_t idx = 0; idx < model.layers.size(); ++idx) {
        const LayerSpec& layer = model.layers[idx];
        if (layer.kind != LayerKind::BatchNorm) {
            out.layers.push_back(layer);
            continue;
        }
        if (out.layers.empty() ||
            (out.layers.back().kind != LayerKind::Conv2D && out.layers.back().kind != LayerKind::Dense)) {
            throw DataError("layer '" + layer.name +
                            "': BatchNorm must directly follow a Conv2D or Dense layer (unsupported topology)");
        }
        LayerSpec& target = out.layers.back();
        const double eps = epsilon_override.value_or(layer.epsilon);
        const Tensor& gamma = model.param(layer.gamma);
        const Tensor& beta = model.param(layer.beta);
        const Tensor& mean = model.param(layer.mean);
        const Tensor& var = model.param(layer.var);

        Tensor w = out.param(target.weight);
        Tensor b = out.bias_or_zero(target);
        const std::size_t channels = w.dim(0);
        if (gamma.size() != channels) {
            throw DataError("layer '" + layer.name + "': " + std::to_string(gamma.size()) +
                            " BN channels for " + std::to_string(channels) + " outputs of '" + target.name + "'");
        }
        const std::size_t per_channel = w.size() / channels;
        for (std::size_t c = 0; c < channels; ++c) {
            if (var[c] < 0.0f) throw DataError("layer '" + layer.name + "': negative variance");
            const double scale = gamma[c] / std::sqrt(static_cast<double>(var[c]) + eps);
            for (std::size_t k = 0; k < per_channel; ++k) {
                float& wk = w[c * per_channel + k];
                wk = static_cast<float>(scale * wk);
            }
            b[c] = static_cast<float>(scale * (static_cast<double>(b[c]) - mean[c]) + beta[c]);
        }
        out.params[target.weight] = std::move(w);
        if (target.bias.empty()) target.bias = target.name + ".folded_bias";
        out.params[target.bias] = std::move(b);
        for (const auto* ref : {&layer.gamma, &layer.beta, &layer.mean, &layer.var}) out.params.erase(*ref);
    }
    validate(out);
    return out;
}

double layer_max_abs_weight(const Tensor& w)
{
    double m = 0.0;
    for (float v : w.data()) m = std::max(m, std::fabs(static_cast<double>(v)));
    return m;
}

std::int64_t round_even(double v)
{
    // nearbyint under the default FE_TONEAREST mode rounds ties to even.
    return static_cast<std::int64_t>(std::nearbyint(v));
}

}  // namespace

CnnModel fold_batchnorm(const CnnModel& model, double epsilon)
{
    if (!(epsilon >= 0.0)) throw UsageError("epsilon must be >= 0");
    return fold_impl(model, epsilon);
}

CnnModel fold_batchnorm(const CnnModel& model)
{
    return fold_impl(model, std::nullopt);
}

CalibrationStats calibrate(const CnnModel& model, const DatasetBundle& calib, std::size_t workers)
{
    for (const auto& layer : model.layers) {
        if (layer.kind == LayerKind::BatchNorm) {
            throw DataError("calibrate: model still has BatchNorm layer '" + layer.name + "'; fold it first");
        }
    }
    if (calib.size() == 0) throw DataError("calibrate: empty calibration set");
    validate(calib);
    const auto stage_list = stages(model);

    // Per-sample maxima, reduced afterwards; max is order-independent.
    std::vector<std::vector<float>> per_sample(calib.size());
    parallel_for(calib.size(), workers, [&](std::size_t i) {
        const auto fwd = cnn_forward(model, calib.sample(i));
        std::vector<float> m(fwd.activations.size());
        for (std::size_t s = 0; s < m.size(); ++s) {
            const auto vals = fwd.activations[s].data();
            m[s] = *std::max_element(vals.begin(), vals.end());
        }
        per_sample[i] = std::move(m);
    });

    CalibrationStats stats;
    stats.sample_count = calib.size();
    stats.lambdas.assign(stage_list.size() + 1, 0.0);
    stats.lambdas[0] = 1.0;
    for (std::size_t s = 0; s < stage_list.size(); ++s) {
        float m = -std::numeric_limits<float>::infinity();
        for (const auto& sample : per_sample) m = std::max(m, sample[s]);
        if (!(m > 0.0f)) {
            throw DataError("calibrate: layer '" + model.layers[stage_list[s].op].name +
                            "' has no positive activation over the calibration set; cannot normalise");
        }
        stats.lambdas[s + 1] = m;
    }
    return stats;
}

SnnModel convert(const CnnModel& model, const CalibrationStats& stats, const ConversionConfig& cfg)
{
    cfg.validate();
    for (const auto& layer : model.layers) {
        if (layer.kind == LayerKind::BatchNorm) {
            throw DataError("convert: model still has BatchNorm layer '" + layer.name + "'; fold it first");
        }
    }
    const auto stage_list = stages(model);
    if (stats.lambdas.size() != stage_list.size() + 1) {
        throw DataError("convert: calibration has " + std::to_string(stats.lambdas.size()) + " lambdas, model needs " +
                        std::to_string(stage_list.size() + 1));
    }
    for (std::size_t n = 0; n < stats.lambdas.size(); ++n) {
        if (!(stats.lambdas[n] > 0.0)) {
            throw DataError("convert: lambda[" + std::to_string(n) + "] must be > 0, got " +
                            std::to_string(stats.lambdas[n]));
        }
    }

    SnnModel snn;
    snn.name = model.name;
    snn.input_shape = model.input_shape;
    snn.encoder = {cfg.kappa0, cfg.timesteps};
    snn.provenance.config = cfg;
    snn.provenance.stats = stats;

    for (std::size_t s = 0; s < stage_list.size(); ++s) {
        const Stage& stage = stage_list[s];
        const LayerSpec& op = model.layers[stage.op];
        const bool last = s + 1 == stage_list.size();
        if (!last && op.kind != LayerKind::AvgPool && !stage.has_relu) {
            throw DataError("convert: hidden layer '" + op.name + "' has no ReLU; rates cannot encode it");
        }
        const double lambda_prev = stats.lambdas[s];
        const double lambda = stats.lambdas[s + 1];
        const double kappa = cfg.kappa_for(s);

        // Scale factors applied to (W, b, V_thr) of the CNN layer.
        double w_scale = 1.0, b_scale = 1.0, threshold = 1.0;
        switch (cfg.mode) {
        case ConversionMode::ECC:
            w_scale = kappa * lambda_prev / lambda;
            b_scale = kappa / lambda;
            threshold = kappa;
            break;
        case ConversionMode::WN:
            w_scale = lambda_prev / lambda;
            b_scale = 1.0 / lambda;
            threshold = 1.0;
            break;
        case ConversionMode::TB:
            w_scale = 1.0;
            b_scale = 1.0 / lambda_prev;
            threshold = lambda / lambda_prev;
            break;
        }

        SnnLayer layer;
        layer.name = op.name;
        layer.in_shape = op.in_shape;
        layer.out_shape = op.out_shape;
        layer.spiking = !last;
        FloatSynapses syn;
        syn.threshold = static_cast<float>(threshold);
        if (op.kind == LayerKind::AvgPool) {
            layer.kind = SnnLayerKind::AvgPool;
            layer.window = op.window;
            layer.stride = op.stride;
            const double w = 1.0 / static_cast<double>(op.window * op.window);
            syn.weights = Tensor({1}, static_cast<float>(w_scale * w));
            syn.bias.assign(op.out_shape[0], 0.0f);
        } else {
            layer.kind = op.kind == LayerKind::Conv2D ? SnnLayerKind::Conv2D : SnnLayerKind::Dense;
            layer.kernel_h = op.kernel_h;
            layer.kernel_w = op.kernel_w;
            layer.stride = op.stride;
            layer.padding = op.padding;
            syn.weights = model.param(op.weight);
            for (auto& w : syn.weights.storage()) w = static_cast<float>(w_scale * w);
            const Tensor b = model.bias_or_zero(op);
            syn.bias.resize(b.size());
            for (std::size_t i = 0; i < b.size(); ++i) syn.bias[i] = static_cast<float>(b_scale * b[i]);
        }
        layer.synapses = std::move(syn);
        snn.layers.push_back(std::move(layer));
    }
    validate(snn);
    return snn;
}

SnnModel apply_tre(const SnnModel& snn, double eta, int timesteps)
{
    if (!(eta >= 0.0 && eta < 1.0)) throw UsageError("eta must lie in [0,1), got " + std::to_string(eta));
    if (timesteps < 1) throw UsageError("timesteps must be >= 1");
    if (snn.provenance.tre_eta > 0.0 && eta > 0.0) {
        throw UsageError("TRE already applied to snn '" + snn.name + "'");
    }
    SnnModel out = snn;
    if (eta == 0.0) return out;
    for (auto& layer : out.layers) {
        std::visit(
            [&](auto& syn) {
                using S = std::decay_t<decltype(syn)>;
                const double extra = eta * static_cast<double>(syn.threshold) / timesteps;
                for (auto& b : syn.bias) {
                    if constexpr (std::is_same_v<S, FloatSynapses>) {
                        b = static_cast<float>(static_cast<double>(b) + extra);
                    } else {
                        b += round_even(extra);
                    }
                }
            },
            layer.synapses);
    }
    out.provenance.tre_eta = eta;
    out.provenance.tre_timesteps = timesteps;
    return out;
}

SnnModel quantize(const SnnModel& snn, int bits)
{
    if (snn.fixed_point()) throw UsageError("quantize: snn '" + snn.name + "' is already fixed-point");
    if (bits < 2 || bits > 30) throw UsageError("quantize: bits must lie in [2,30], got " + std::to_string(bits));
    const double full = std::ldexp(1.0, bits);
    const std::int64_t hi = (std::int64_t{1} << bits) - 1;
    const std::int64_t lo = -(std::int64_t{1} << bits);

    SnnModel out = snn;
    out.fixed_bits = bits;
    out.provenance.config.quant_bits = bits;
    for (auto& layer : out.layers) {
        const auto& syn = std::get<FloatSynapses>(layer.synapses);
        const double s = layer_max_abs_weight(syn.weights);
        if (!(s > 0.0)) throw DataError("quantize: layer '" + layer.name + "' has all-zero weights");
        const double factor = full / s;

        FixedSynapses q;
        q.scale = s;
        std::vector<std::int32_t> w(syn.weights.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = static_cast<std::int32_t>(std::clamp(round_even(syn.weights[i] * factor), lo, hi));
        }
        q.weights = IntTensor(syn.weights.shape(), std::move(w));
        q.bias.resize(syn.bias.size());
        for (std::size_t i = 0; i < q.bias.size(); ++i) q.bias[i] = round_even(syn.bias[i] * factor);
        q.threshold = round_even(syn.threshold * factor);
        if (q.threshold < 1) {
            throw DataError("quantize: layer '" + layer.name + "' threshold rounds to zero at " +
                            std::to_string(bits) + " bits");
        }
        layer.synapses = std::move(q);
    }
    validate(out);
    return out;
}

SnnModel build_snn(const CnnModel& folded, const CalibrationStats& stats, const ConversionConfig& cfg)
{
    cfg.validate();
    if (cfg.mode != ConversionMode::ECC && cfg.eta != 0.0) {
        throw UsageError("eta (TRE) is only valid in ecc mode");
    }
    SnnModel snn = convert(folded, stats, cfg);
    if (cfg.eta > 0.0) snn = apply_tre(snn, cfg.eta, cfg.timesteps);
    if (cfg.quant_bits) snn = quantize(snn, *cfg.quant_bits);
    return snn;
}

}  // namespace eccsnn
