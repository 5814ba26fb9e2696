#include "eccsnn/snn_engine.hpp"

#include <algorithm>
#include <variant>

namespace eccsnn {

InputEncoder::InputEncoder(std::span<const float> pixels, double kappa0)
    : current_(pixels.size(), 0.0), potential_(pixels.size(), 0.0), threshold_(kappa0)
{
    if (!(kappa0 > 0.0)) throw UsageError("encoder kappa0 must be > 0");
    float peak = 0.0f;
    for (float p : pixels) {
        if (!(p >= 0.0f && p <= 1.0f)) throw DataError("encoder input outside [0,1]: " + std::to_string(p));
        peak = std::max(peak, p);
    }
    if (peak == 0.0f) return;  // all-zero image: all-zero spike train
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        // X / max(X) is exactly 1 for the brightest pixel.
        current_[i] = kappa0 * (static_cast<double>(pixels[i]) / peak);
    }
}

void InputEncoder::step(std::vector<std::uint32_t>& spikes)
{
    spikes.clear();
    for (std::size_t i = 0; i < current_.size(); ++i) {
        potential_[i] += current_[i];
        if (potential_[i] >= threshold_) {
            potential_[i] -= threshold_;
            spikes.push_back(static_cast<std::uint32_t>(i));
        }
    }
}

Tensor encode_input(const Tensor& pixels, double kappa0, int timesteps)
{
    if (timesteps < 1) throw UsageError("timesteps must be >= 1");
    InputEncoder enc(pixels.data(), kappa0);
    Shape shape{static_cast<std::size_t>(timesteps)};
    shape.insert(shape.end(), pixels.shape().begin(), pixels.shape().end());
    Tensor train(shape, 0.0f);
    std::vector<std::uint32_t> spikes;
    for (int t = 0; t < timesteps; ++t) {
        enc.step(spikes);
        for (auto i : spikes) train[static_cast<std::size_t>(t) * pixels.size() + i] = 1.0f;
    }
    return train;
}

namespace {

template <typename W>
struct FanoutTable {
    std::vector<std::uint32_t> offsets;  // size inputs + 1
    std::vector<std::uint32_t> targets;
    std::vector<W> weights;
};

/// Enumerates every (pre, post, weight-index) synapse of a layer, grouped by pre.
template <typename W, typename WeightAt>
FanoutTable<W> build_fanout(const SnnLayer& layer, WeightAt&& weight_at)
{
    FanoutTable<W> table;
    const std::size_t n_in = shape_size(layer.in_shape);
    table.offsets.reserve(n_in + 1);
    table.offsets.push_back(0);
    auto add = [&](std::size_t post, std::size_t w_index) {
        table.targets.push_back(static_cast<std::uint32_t>(post));
        table.weights.push_back(weight_at(w_index));
    };

    switch (layer.kind) {
    case SnnLayerKind::Dense: {
        const std::size_t n_out = layer.out_shape[0];
        for (std::size_t j = 0; j < n_in; ++j) {
            for (std::size_t i = 0; i < n_out; ++i) add(i, i * n_in + j);
            table.offsets.push_back(static_cast<std::uint32_t>(table.targets.size()));
        }
        break;
    }
    case SnnLayerKind::Conv2D:
    case SnnLayerKind::AvgPool: {
        const bool pool = layer.kind == SnnLayerKind::AvgPool;
        const std::size_t channels = layer.in_shape[0], height = layer.in_shape[1], width = layer.in_shape[2];
        const std::size_t out_ch = layer.out_shape[0], out_h = layer.out_shape[1], out_w = layer.out_shape[2];
        const std::size_t kh = pool ? layer.window : layer.kernel_h;
        const std::size_t kw = pool ? layer.window : layer.kernel_w;
        const auto pad = static_cast<std::ptrdiff_t>(pool ? 0 : layer.padding);
        const auto stride = static_cast<std::ptrdiff_t>(layer.stride);
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    for (std::size_t o = 0; o < out_ch; ++o) {
                        if (pool && o != c) continue;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const auto ny = static_cast<std::ptrdiff_t>(y) + pad - static_cast<std::ptrdiff_t>(ky);
                            if (ny < 0 || ny % stride != 0 || ny / stride >= static_cast<std::ptrdiff_t>(out_h)) {
                                continue;
                            }
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const auto nx =
                                    static_cast<std::ptrdiff_t>(x) + pad - static_cast<std::ptrdiff_t>(kx);
                                if (nx < 0 || nx % stride != 0 || nx / stride >= static_cast<std::ptrdiff_t>(out_w)) {
                                    continue;
                                }
                                const std::size_t post =
                                    (o * out_h + static_cast<std::size_t>(ny / stride)) * out_w +
                                    static_cast<std::size_t>(nx / stride);
                                add(post, pool ? 0 : ((o * channels + c) * kh + ky) * kw + kx);
                            }
                        }
                    }
                    table.offsets.push_back(static_cast<std::uint32_t>(table.targets.size()));
                }
            }
        }
        break;
    }
    }
    return table;
}

template <typename Acc, typename W>
struct CompiledLayer {
    FanoutTable<W> fanout;
    std::vector<Acc> bias;  // expanded per neuron
    Acc threshold{};
    bool spiking = true;
};

template <typename Acc, typename W>
std::vector<CompiledLayer<Acc, W>> compile(const SnnModel& snn)
{
    std::vector<CompiledLayer<Acc, W>> out;
    for (const auto& layer : snn.layers) {
        using Syn = std::conditional_t<std::is_same_v<Acc, double>, FloatSynapses, FixedSynapses>;
        const auto& syn = std::get<Syn>(layer.synapses);
        CompiledLayer<Acc, W> c;
        c.fanout = build_fanout<W>(layer, [&](std::size_t i) { return syn.weights[i]; });
        const std::size_t neurons = layer.neuron_count();
        const std::size_t per_bias = neurons / syn.bias.size();
        c.bias.resize(neurons);
        for (std::size_t i = 0; i < neurons; ++i) c.bias[i] = static_cast<Acc>(syn.bias[i / per_bias]);
        c.threshold = static_cast<Acc>(syn.threshold);
        c.spiking = layer.spiking;
        out.push_back(std::move(c));
    }
    return out;
}

void record_step(LayerTrace& lt, std::span<const std::uint32_t> spikes, const RecordFlags& flags,
                 std::size_t neurons)
{
    lt.spikes_per_step.push_back(static_cast<std::uint32_t>(spikes.size()));
    if (flags.rasters) {
        const std::size_t base = lt.raster.size();
        lt.raster.resize(base + neurons, 0);
        for (auto i : spikes) lt.raster[base + i] = 1;
    }
}

template <typename Acc>
void record_history(LayerTrace& lt, const NeuronLayerState<Acc>& st)
{
    for (std::size_t i = 0; i < st.potential.size(); ++i) {
        lt.potential_history.push_back(static_cast<double>(st.potential[i]));
        lt.cumulative_history.push_back(static_cast<double>(st.cumulative_input[i]));
    }
    lt.count_history.insert(lt.count_history.end(), st.spike_count.begin(), st.spike_count.end());
}

template <typename Acc, typename W>
SimTrace run_impl(const SnnModel& snn, const std::vector<CompiledLayer<Acc, W>>& layers, const Tensor& input,
                  int timesteps, const RecordFlags& flags)
{
    if (timesteps < 1) throw UsageError("timesteps must be >= 1, got " + std::to_string(timesteps));
    if (input.size() != shape_size(snn.input_shape)) {
        throw DataError("simulate: input shape " + shape_str(input.shape()) + " != snn input " +
                        shape_str(snn.input_shape));
    }
    const std::size_t n_layers = layers.size();
    InputEncoder encoder(input.data(), snn.encoder.kappa0);

    std::vector<NeuronLayerState<Acc>> states;
    states.reserve(n_layers);
    for (const auto& l : layers) states.emplace_back(l.bias.size(), l.threshold);

    SimTrace trace;
    trace.timesteps = timesteps;
    trace.layers.resize(n_layers + 1);
    const auto T = static_cast<std::size_t>(timesteps);
    for (auto& lt : trace.layers) lt.spikes_per_step.reserve(T);

    std::vector<std::vector<std::uint32_t>> spikes(n_layers + 1);
    std::vector<std::uint32_t> input_counts(encoder.size(), 0);
    std::vector<std::vector<Acc>> current(n_layers);
    for (std::size_t n = 0; n < n_layers; ++n) current[n].resize(layers[n].bias.size());

    for (std::size_t t = 0; t < T; ++t) {
        encoder.step(spikes[0]);
        for (auto i : spikes[0]) ++input_counts[i];
        record_step(trace.layers[0], spikes[0], flags, encoder.size());
        if (flags.history) {
            for (std::size_t i = 0; i < encoder.size(); ++i) {
                trace.layers[0].potential_history.push_back(encoder.potential()[i]);
                trace.layers[0].cumulative_history.push_back(encoder.current()[i] * static_cast<double>(t + 1));
            }
            trace.layers[0].count_history.insert(trace.layers[0].count_history.end(), input_counts.begin(),
                                                 input_counts.end());
        }

        for (std::size_t n = 0; n < n_layers; ++n) {
            const auto& layer = layers[n];
            auto& z = current[n];
            std::copy(layer.bias.begin(), layer.bias.end(), z.begin());
            const auto& fan = layer.fanout;
            for (auto pre : spikes[n]) {
                for (std::uint32_t k = fan.offsets[pre]; k < fan.offsets[pre + 1]; ++k) {
                    z[fan.targets[k]] += static_cast<Acc>(fan.weights[k]);
                }
            }
            auto& st = states[n];
            auto& out = spikes[n + 1];
            out.clear();
            if (layer.spiking) {
                for (std::size_t i = 0; i < z.size(); ++i) {
                    st.potential[i] += z[i];
                    st.cumulative_input[i] += z[i];
                    if (st.potential[i] >= st.threshold) {
                        st.potential[i] -= st.threshold;
                        ++st.spike_count[i];
                        out.push_back(static_cast<std::uint32_t>(i));
                    }
                }
            } else {
                for (std::size_t i = 0; i < z.size(); ++i) {
                    st.potential[i] += z[i];
                    st.cumulative_input[i] += z[i];
                }
                for (auto v : st.potential) trace.output_history.push_back(static_cast<double>(v));
            }
            record_step(trace.layers[n + 1], out, flags, z.size());
            if (flags.history) record_history(trace.layers[n + 1], st);
        }
    }

    LayerTrace& in = trace.layers[0];
    in.threshold = encoder.threshold();
    in.spiking = true;
    in.spike_count = std::move(input_counts);
    in.potential = encoder.potential();
    in.cumulative_input.resize(encoder.size());
    for (std::size_t i = 0; i < encoder.size(); ++i) in.cumulative_input[i] = encoder.current()[i] * timesteps;

    for (std::size_t n = 0; n < n_layers; ++n) {
        LayerTrace& lt = trace.layers[n + 1];
        auto& st = states[n];
        lt.threshold = static_cast<double>(st.threshold);
        lt.spiking = layers[n].spiking;
        lt.tre_current = tre_step_current(snn.layers[n], snn.provenance);
        lt.spike_count = std::move(st.spike_count);
        lt.potential.assign(st.potential.begin(), st.potential.end());
        lt.cumulative_input.assign(st.cumulative_input.begin(), st.cumulative_input.end());
    }
    return trace;
}

}  // namespace

struct Simulator::Impl {
    std::variant<std::vector<CompiledLayer<double, float>>, std::vector<CompiledLayer<std::int64_t, std::int32_t>>>
        layers;
};

Simulator::Simulator(const SnnModel& snn) : snn_(std::make_shared<const SnnModel>(snn)), impl_(std::make_unique<Impl>())
{
    validate(*snn_);
    if (snn_->fixed_point()) {
        impl_->layers = compile<std::int64_t, std::int32_t>(*snn_);
    } else {
        impl_->layers = compile<double, float>(*snn_);
    }
}

Simulator::~Simulator() = default;
Simulator::Simulator(Simulator&&) noexcept = default;
Simulator& Simulator::operator=(Simulator&&) noexcept = default;

SimTrace Simulator::run(const Tensor& input, int timesteps, RecordFlags flags) const
{
    return std::visit([&](const auto& layers) { return run_impl(*snn_, layers, input, timesteps, flags); },
                      impl_->layers);
}

SimTrace simulate(const SnnModel& snn, const Tensor& input, int timesteps, RecordFlags flags)
{
    return Simulator(snn).run(input, timesteps, flags);
}

std::uint32_t argmax_lowest(std::span<const double> values)
{
    if (values.empty()) throw DataError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<std::uint32_t>(best);
}

std::uint32_t classify(const SimTrace& trace)
{
    if (trace.layers.size() < 2) throw DataError("classify: trace has no output layer");
    return argmax_lowest(trace.output().potential);
}

namespace {

const LayerTrace& checked_layer(const SimTrace& trace, std::size_t layer, std::size_t neuron, int t)
{
    if (layer >= trace.layers.size()) throw DataError("layer index " + std::to_string(layer) + " out of range");
    const LayerTrace& lt = trace.layers[layer];
    if (neuron >= lt.neuron_count()) throw DataError("neuron index " + std::to_string(neuron) + " out of range");
    if (t < 1 || t > trace.timesteps) throw DataError("timestep " + std::to_string(t) + " out of range");
    return lt;
}

}  // namespace

double spiking_rate(const SimTrace& trace, std::size_t layer, std::size_t neuron, int t)
{
    const LayerTrace& lt = checked_layer(trace, layer, neuron, t);
    const std::size_t m = lt.neuron_count();
    std::uint32_t count = 0;
    if (t == trace.timesteps) {
        count = lt.spike_count[neuron];
    } else if (!lt.count_history.empty()) {
        count = lt.count_history[static_cast<std::size_t>(t - 1) * m + neuron];
    } else if (!lt.raster.empty()) {
        for (int s = 0; s < t; ++s) count += lt.raster[static_cast<std::size_t>(s) * m + neuron];
    } else {
        throw DataError("spiking_rate at t < T needs rasters or history");
    }
    return static_cast<double>(count) / t;
}

double residual_delta(const SimTrace& trace, std::size_t layer, std::size_t neuron, int t)
{
    const LayerTrace& lt = checked_layer(trace, layer, neuron, t);
    double v = 0.0;
    if (t == trace.timesteps) {
        v = lt.potential[neuron];
    } else if (!lt.potential_history.empty()) {
        v = lt.potential_history[static_cast<std::size_t>(t - 1) * lt.neuron_count() + neuron];
    } else {
        throw DataError("residual_delta at t < T needs history");
    }
    return (v - t * lt.tre_current) / (t * lt.threshold);
}

}  // namespace eccsnn
