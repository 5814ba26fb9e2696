#include "eccsnn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "eccsnn/parallel.hpp"

namespace eccsnn {

LayerGeometry geometry_of(const LayerSpec& op)
{
    LayerGeometry g;
    switch (op.kind) {
    case LayerKind::Conv2D: g.kind = SnnLayerKind::Conv2D; break;
    case LayerKind::Dense: g.kind = SnnLayerKind::Dense; break;
    case LayerKind::AvgPool: g.kind = SnnLayerKind::AvgPool; break;
    default: throw DataError("layer '" + op.name + "' is not a synaptic layer");
    }
    g.in_shape = op.in_shape;
    g.out_shape = op.out_shape;
    g.kernel_h = op.kernel_h;
    g.kernel_w = op.kernel_w;
    g.stride = op.stride;
    g.padding = op.padding;
    g.window = op.window;
    return g;
}

LayerGeometry geometry_of(const SnnLayer& layer)
{
    return {layer.kind,     layer.in_shape, layer.out_shape, layer.kernel_h,
            layer.kernel_w, layer.stride,   layer.padding,   layer.window};
}

namespace {

/// Number of output positions along one axis whose window covers input coordinate `pos`.
std::size_t covering(std::size_t pos, std::size_t out_extent, std::size_t kernel, std::size_t stride,
                     std::size_t padding)
{
    std::size_t n = 0;
    for (std::size_t k = 0; k < kernel; ++k) {
        const auto shifted = static_cast<std::ptrdiff_t>(pos + padding) - static_cast<std::ptrdiff_t>(k);
        if (shifted < 0 || shifted % static_cast<std::ptrdiff_t>(stride) != 0) continue;
        if (static_cast<std::size_t>(shifted) / stride < out_extent) ++n;
    }
    return n;
}

double interior_fan_in(const LayerGeometry& g)
{
    switch (g.kind) {
    case SnnLayerKind::Conv2D: return static_cast<double>(g.in_shape[0] * g.kernel_h * g.kernel_w);
    case SnnLayerKind::Dense: return static_cast<double>(shape_size(g.in_shape));
    case SnnLayerKind::AvgPool: return static_cast<double>(g.window * g.window);
    }
    return 0.0;
}

FanCounts fan_counts_of(const std::vector<LayerGeometry>& geoms)
{
    FanCounts f;
    const std::size_t n = geoms.size();
    f.neurons.resize(n + 1);
    f.fan_in.assign(n + 1, 0.0);
    f.fan_out.assign(n + 1, 0.0);
    f.synapses_out.assign(n + 1, 0);
    f.neurons[0] = shape_size(geoms[0].in_shape);
    for (std::size_t l = 0; l < n; ++l) {
        f.neurons[l + 1] = shape_size(geoms[l].out_shape);
        f.fan_in[l + 1] = interior_fan_in(geoms[l]);
        std::uint64_t total = 0;
        for (auto c : presynaptic_fanout(geoms[l])) total += c;
        f.synapses_out[l] = total;
        f.fan_out[l] = static_cast<double>(total) / static_cast<double>(f.neurons[l]);
    }
    return f;
}

}  // namespace

std::vector<std::uint32_t> presynaptic_fanout(const LayerGeometry& g)
{
    const std::size_t n_in = shape_size(g.in_shape);
    std::vector<std::uint32_t> out(n_in, 0);
    if (g.kind == SnnLayerKind::Dense) {
        std::fill(out.begin(), out.end(), static_cast<std::uint32_t>(g.out_shape[0]));
        return out;
    }
    const bool pool = g.kind == SnnLayerKind::AvgPool;
    const std::size_t kh = pool ? g.window : g.kernel_h, kw = pool ? g.window : g.kernel_w;
    const std::size_t pad = pool ? 0 : g.padding;
    const std::size_t channels = g.in_shape[0], height = g.in_shape[1], width = g.in_shape[2];
    const std::size_t targets_per_position = pool ? 1 : g.out_shape[0];
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            const std::size_t ny = covering(y, g.out_shape[1], kh, g.stride, pad);
            for (std::size_t x = 0; x < width; ++x) {
                const std::size_t nx = covering(x, g.out_shape[2], kw, g.stride, pad);
                out[(c * height + y) * width + x] = static_cast<std::uint32_t>(ny * nx * targets_per_position);
            }
        }
    }
    return out;
}

FanCounts fan_counts(const CnnModel& model)
{
    std::vector<LayerGeometry> geoms;
    for (const auto& s : stages(model)) geoms.push_back(geometry_of(model.layers[s.op]));
    return fan_counts_of(geoms);
}

FanCounts fan_counts(const SnnModel& snn)
{
    std::vector<LayerGeometry> geoms;
    for (const auto& l : snn.layers) geoms.push_back(geometry_of(l));
    return fan_counts_of(geoms);
}

std::uint64_t mac_ops(const CnnModel& model)
{
    const FanCounts f = fan_counts(model);
    std::uint64_t total = 0;
    for (std::size_t n = 1; n < f.neurons.size(); ++n) {
        total += (2 * static_cast<std::uint64_t>(f.fan_in[n]) + 1) * f.neurons[n];
    }
    return total;
}

SynopsBreakdown synaptic_ops(const SimTrace& trace, const FanCounts& fans)
{
    if (fans.fan_out.size() != trace.layers.size()) {
        throw DataError("synaptic_ops: fan counts cover " + std::to_string(fans.fan_out.size()) +
                        " layers, trace has " + std::to_string(trace.layers.size()));
    }
    SynopsBreakdown r;
    const auto T = static_cast<std::size_t>(trace.timesteps);
    r.per_layer.assign(trace.layers.size(), 0.0);
    r.per_step.assign(T, 0.0);
    r.spikes_per_neuron.assign(trace.layers.size(), 0.0);
    for (std::size_t n = 0; n < trace.layers.size(); ++n) {
        const LayerTrace& lt = trace.layers[n];
        std::uint64_t spikes = 0;
        for (std::size_t t = 0; t < lt.spikes_per_step.size(); ++t) {
            spikes += lt.spikes_per_step[t];
            r.per_step[t] += fans.fan_out[n] * lt.spikes_per_step[t];
        }
        r.per_layer[n] = fans.fan_out[n] * static_cast<double>(spikes);
        r.spikes_per_neuron[n] = static_cast<double>(spikes) / static_cast<double>(lt.neuron_count());
    }
    for (double v : r.per_layer) r.total += v;
    return r;
}

std::vector<ResidualSummary> residual_stats(const SimTrace& trace)
{
    std::vector<ResidualSummary> out;
    for (std::size_t n = 1; n < trace.layers.size(); ++n) {
        const LayerTrace& lt = trace.layers[n];
        if (!lt.spiking) continue;
        ResidualSummary s;
        s.layer = n;
        const double denom = trace.timesteps * lt.threshold;
        const double injected = trace.timesteps * lt.tre_current;
        for (double v : lt.potential) {
            const double d = std::fabs((v - injected) / denom);
            s.mean_abs += d;
            s.max_abs = std::max(s.max_abs, d);
        }
        s.mean_abs /= static_cast<double>(lt.potential.size());
        out.push_back(s);
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> expected_spike_counts(const CnnModel& model, const CalibrationStats& stats,
                                                              const Tensor& input, int timesteps)
{
    const auto fwd = cnn_forward(model, input);
    if (stats.lambdas.size() != fwd.activations.size() + 1) throw DataError("expected_spike_counts: lambda count mismatch");
    std::vector<std::vector<std::uint32_t>> out;
    for (std::size_t s = 0; s < fwd.activations.size(); ++s) {
        const double lambda = stats.lambdas[s + 1];
        std::vector<std::uint32_t> counts;
        counts.reserve(fwd.activations[s].size());
        for (float a : fwd.activations[s].data()) {
            const double ideal = std::floor(timesteps * static_cast<double>(a) / lambda);
            counts.push_back(static_cast<std::uint32_t>(std::clamp(ideal, 0.0, static_cast<double>(timesteps))));
        }
        out.push_back(std::move(counts));
    }
    return out;
}

namespace {

struct SampleSummary {
    std::uint32_t prediction = 0;
    SynopsBreakdown synops;
    std::vector<ResidualSummary> residuals;
    std::vector<double> spikes;
};

}  // namespace

Evaluation evaluate(const Simulator& sim, const DatasetBundle& data, int timesteps, const FanCounts& fans,
                    std::size_t workers)
{
    if (data.size() == 0) throw DataError("evaluate: empty dataset");
    const auto per_sample = map_samples(sim, data, timesteps, RecordFlags{}, workers,
                                        [&](std::size_t, const SimTrace& trace) {
                                            SampleSummary s;
                                            s.prediction = classify(trace);
                                            s.synops = synaptic_ops(trace, fans);
                                            s.residuals = residual_stats(trace);
                                            for (const auto& lt : trace.layers) {
                                                double total = 0;
                                                for (auto c : lt.spike_count) total += c;
                                                s.spikes.push_back(total);
                                            }
                                            return s;
                                        });

    Evaluation ev;
    ev.timesteps = timesteps;
    ev.samples = data.size();
    const double inv = 1.0 / static_cast<double>(data.size());
    const auto& first = per_sample.front();
    ev.energy.synops_per_layer.assign(first.synops.per_layer.size(), 0.0);
    ev.energy.synops_per_step.assign(first.synops.per_step.size(), 0.0);
    ev.energy.spikes_per_neuron.assign(first.synops.spikes_per_neuron.size(), 0.0);
    ev.residuals = first.residuals;
    for (auto& r : ev.residuals) r.mean_abs = r.max_abs = 0.0;
    ev.spike_counts_per_layer.assign(first.spikes.size(), 0.0);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < per_sample.size(); ++i) {
        const auto& s = per_sample[i];
        ev.predictions.push_back(s.prediction);
        if (s.prediction == data.labels[i]) ++correct;
        ev.energy.snn_synops += s.synops.total * inv;
        for (std::size_t n = 0; n < s.synops.per_layer.size(); ++n) {
            ev.energy.synops_per_layer[n] += s.synops.per_layer[n] * inv;
            ev.energy.spikes_per_neuron[n] += s.synops.spikes_per_neuron[n] * inv;
            ev.spike_counts_per_layer[n] += s.spikes[n] * inv;
        }
        for (std::size_t t = 0; t < s.synops.per_step.size(); ++t) ev.energy.synops_per_step[t] += s.synops.per_step[t] * inv;
        for (std::size_t k = 0; k < s.residuals.size(); ++k) {
            ev.residuals[k].mean_abs += s.residuals[k].mean_abs * inv;
            ev.residuals[k].max_abs += s.residuals[k].max_abs * inv;
        }
    }
    ev.accuracy = static_cast<double>(correct) * inv;
    return ev;
}

double cnn_accuracy(const CnnModel& model, const DatasetBundle& data, std::size_t workers)
{
    if (data.size() == 0) throw DataError("cnn_accuracy: empty dataset");
    std::vector<std::uint8_t> hit(data.size(), 0);
    parallel_for(data.size(), workers, [&](std::size_t i) {
        const Tensor logits = cnn_forward(model, data.sample(i)).logits;
        std::vector<double> v(logits.data().begin(), logits.data().end());
        hit[i] = argmax_lowest(v) == data.labels[i];
    });
    std::size_t correct = 0;
    for (auto h : hit) correct += h;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<SweepRow> accuracy_sweep(const CnnModel& model, const SnnFactory& make_snn, const DatasetBundle& data,
                                     std::span<const int> timesteps, std::size_t workers)
{
    if (timesteps.empty()) throw UsageError("accuracy_sweep: empty timestep list");
    const double cnn_acc = cnn_accuracy(model, data, workers);
    const std::uint64_t macs = mac_ops(model);
    std::vector<SweepRow> rows;
    for (int T : timesteps) {
        const SnnModel snn = make_snn(T);
        const Simulator sim(snn);
        const Evaluation ev = evaluate(sim, data, T, fan_counts(snn), workers);
        rows.push_back({T, cnn_acc, ev.accuracy, 100.0 * (cnn_acc - ev.accuracy), ev.energy.snn_synops, macs});
    }
    return rows;
}

std::vector<SweepRow> accuracy_sweep(const CnnModel& model, const SnnModel& snn, const DatasetBundle& data,
                                     std::span<const int> timesteps, std::size_t workers)
{
    return accuracy_sweep(model, [&](int) { return snn; }, data, timesteps, workers);
}

double linear_fit_r2(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw DataError("linear_fit_r2: need >= 2 paired points");
    const auto n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (syy == 0.0) return 1.0;
    if (sxx == 0.0) return 0.0;
    return sxy * sxy / (sxx * syy);
}

}  // namespace eccsnn
