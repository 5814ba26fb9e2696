#include "eccsnn/model.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "eccsnn/kernels.hpp"

namespace eccsnn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kKindNames{{
    {LayerKind::Input, "Input"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::Relu, "Relu"},
    {LayerKind::Flatten, "Flatten"},
}};

[[noreturn]] void layer_fail(const LayerSpec& layer, std::string_view field, const std::string& msg)
{
    throw DataError("layer '" + layer.name + "' field '" + std::string(field) + "': " + msg);
}

const Tensor& require_param(const CnnModel& model, const LayerSpec& layer, std::string_view field,
                            const std::string& ref)
{
    if (ref.empty()) layer_fail(layer, field, "missing tensor reference");
    auto it = model.params.find(ref);
    if (it == model.params.end()) layer_fail(layer, field, "tensor '" + ref + "' not found");
    return it->second;
}

void expect_shape(const LayerSpec& layer, std::string_view field, const Tensor& t, const Shape& want)
{
    if (t.shape() != want) {
        layer_fail(layer, field, "expected shape " + shape_str(want) + ", got " + shape_str(t.shape()));
    }
}

bool is_synaptic(LayerKind kind)
{
    return kind == LayerKind::Conv2D || kind == LayerKind::Dense || kind == LayerKind::AvgPool;
}

}  // namespace

std::string_view to_string(LayerKind kind)
{
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name)
{
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

const Tensor& CnnModel::param(const std::string& tensor_name) const
{
    auto it = params.find(tensor_name);
    if (it == params.end()) throw DataError("model '" + name + "': tensor '" + tensor_name + "' not found");
    return it->second;
}

Tensor CnnModel::bias_or_zero(const LayerSpec& layer) const
{
    if (!layer.bias.empty()) return param(layer.bias);
    const std::size_t n = layer.kind == LayerKind::Conv2D ? layer.out_channels : layer.units;
    return Tensor({n}, 0.0f);
}

void validate(CnnModel& model)
{
    if (model.input_shape.empty()) throw DataError("model '" + model.name + "': empty input_shape");
    for (auto d : model.input_shape) {
        if (d == 0) throw DataError("model '" + model.name + "': zero dimension in input_shape");
    }
    if (model.layers.empty() || model.layers.front().kind != LayerKind::Input) {
        throw DataError("model '" + model.name + "': first layer must be Input");
    }
    if (model.layers.size() < 2) throw DataError("model '" + model.name + "': no layers after Input");

    Shape shape = model.input_shape;
    for (std::size_t idx = 0; idx < model.layers.size(); ++idx) {
        LayerSpec& layer = model.layers[idx];
        if (layer.name.empty()) throw DataError("layer " + std::to_string(idx) + ": empty name");
        layer.in_shape = shape;
        switch (layer.kind) {
        case LayerKind::Input:
            if (idx != 0) layer_fail(layer, "type", "Input layer must be first and unique");
            break;
        case LayerKind::Conv2D: {
            if (shape.size() != 3) layer_fail(layer, "input", "Conv2D needs CxHxW input, got " + shape_str(shape));
            if (layer.out_channels == 0 || layer.kernel_h == 0 || layer.kernel_w == 0) {
                layer_fail(layer, "kernel", "out_channels and kernel must be >= 1");
            }
            if (layer.stride == 0) layer_fail(layer, "stride", "must be >= 1");
            const Tensor& w = require_param(model, layer, "weight", layer.weight);
            expect_shape(layer, "weight", w, {layer.out_channels, shape[0], layer.kernel_h, layer.kernel_w});
            if (!layer.bias.empty()) {
                expect_shape(layer, "bias", require_param(model, layer, "bias", layer.bias), {layer.out_channels});
            }
            if (shape[1] + 2 * layer.padding < layer.kernel_h || shape[2] + 2 * layer.padding < layer.kernel_w) {
                layer_fail(layer, "kernel", "kernel exceeds padded input " + shape_str(shape));
            }
            shape = {layer.out_channels, conv_out_extent(shape[1], layer.kernel_h, layer.stride, layer.padding),
                     conv_out_extent(shape[2], layer.kernel_w, layer.stride, layer.padding)};
            break;
        }
        case LayerKind::Dense: {
            if (layer.units == 0) layer_fail(layer, "units", "must be >= 1");
            const Tensor& w = require_param(model, layer, "weight", layer.weight);
            expect_shape(layer, "weight", w, {layer.units, shape_size(shape)});
            if (!layer.bias.empty()) {
                expect_shape(layer, "bias", require_param(model, layer, "bias", layer.bias), {layer.units});
            }
            shape = {layer.units};
            break;
        }
        case LayerKind::AvgPool: {
            if (shape.size() != 3) layer_fail(layer, "input", "AvgPool needs CxHxW input, got " + shape_str(shape));
            if (layer.window == 0 || layer.stride == 0) layer_fail(layer, "window", "window and stride must be >= 1");
            if (shape[1] < layer.window || shape[2] < layer.window || (shape[1] - layer.window) % layer.stride != 0 ||
                (shape[2] - layer.window) % layer.stride != 0) {
                layer_fail(layer, "window",
                           "window " + std::to_string(layer.window) + " / stride " + std::to_string(layer.stride) +
                               " does not tile input " + shape_str(shape));
            }
            shape = {shape[0], conv_out_extent(shape[1], layer.window, layer.stride, 0),
                     conv_out_extent(shape[2], layer.window, layer.stride, 0)};
            break;
        }
        case LayerKind::BatchNorm: {
            const Shape want{shape[0]};
            expect_shape(layer, "gamma", require_param(model, layer, "gamma", layer.gamma), want);
            expect_shape(layer, "beta", require_param(model, layer, "beta", layer.beta), want);
            expect_shape(layer, "mean", require_param(model, layer, "mean", layer.mean), want);
            const Tensor& var = require_param(model, layer, "var", layer.var);
            expect_shape(layer, "var", var, want);
            for (std::size_t c = 0; c < var.size(); ++c) {
                if (!(var[c] >= 0.0f)) layer_fail(layer, "var", "negative variance at channel " + std::to_string(c));
            }
            if (!(layer.epsilon >= 0.0) || !std::isfinite(layer.epsilon)) {
                layer_fail(layer, "epsilon", "must be finite and >= 0");
            }
            break;
        }
        case LayerKind::Relu:
            break;
        case LayerKind::Flatten:
            shape = {shape_size(shape)};
            break;
        }
        layer.out_shape = shape;
    }
}

std::vector<Stage> stages(const CnnModel& model)
{
    std::vector<Stage> out;
    for (std::size_t idx = 1; idx < model.layers.size(); ++idx) {
        const LayerSpec& layer = model.layers[idx];
        if (is_synaptic(layer.kind)) {
            out.push_back(Stage{idx, {}, idx, false});
        } else if (layer.kind == LayerKind::BatchNorm || layer.kind == LayerKind::Relu) {
            if (out.empty()) {
                throw DataError("layer '" + layer.name + "': " + std::string(to_string(layer.kind)) +
                                " before any synaptic layer is unsupported");
            }
            out.back().trailing.push_back(idx);
            out.back().last = idx;
            if (layer.kind == LayerKind::Relu) out.back().has_relu = true;
        }
    }
    if (out.empty()) throw DataError("model '" + model.name + "' has no synaptic layers");
    return out;
}

ForwardResult cnn_forward(const CnnModel& model, const Tensor& input)
{
    if (input.shape() != model.input_shape) {
        throw DataError("model '" + model.name + "': input shape " + shape_str(input.shape()) + " != declared " +
                        shape_str(model.input_shape));
    }
    const auto stage_list = stages(model);
    std::size_t next_stage = 0;

    ForwardResult result;
    Tensor x = input;
    for (std::size_t idx = 1; idx < model.layers.size(); ++idx) {
        const LayerSpec& layer = model.layers[idx];
        try {
            switch (layer.kind) {
            case LayerKind::Input:
                break;
            case LayerKind::Conv2D:
                x = conv2d_forward(x, model.param(layer.weight), model.bias_or_zero(layer), layer.stride,
                                   layer.padding, layer.name);
                break;
            case LayerKind::Dense:
                x = dense_forward(x, model.param(layer.weight), model.bias_or_zero(layer), layer.name);
                break;
            case LayerKind::AvgPool:
                x = avgpool_forward(x, layer.window, layer.stride, layer.name);
                break;
            case LayerKind::BatchNorm:
                x = batchnorm_forward(x, model.param(layer.gamma), model.param(layer.beta), model.param(layer.mean),
                                      model.param(layer.var), layer.epsilon, layer.name);
                break;
            case LayerKind::Relu:
                x = relu_forward(x);
                break;
            case LayerKind::Flatten:
                x = x.reshaped({x.size()});
                break;
            }
        } catch (const DataError& e) {
            throw DataError("layer " + std::to_string(idx) + " (" + layer.name + "): " + e.what());
        }
        if (next_stage < stage_list.size() && stage_list[next_stage].last == idx) {
            result.activations.push_back(x);
            ++next_stage;
        }
    }
    result.logits = std::move(x);
    return result;
}

Tensor DatasetBundle::sample(std::size_t i) const
{
    const Shape dims = sample_shape();
    const std::size_t n = shape_size(dims);
    auto first = inputs.storage().begin() + static_cast<std::ptrdiff_t>(i * n);
    return Tensor(dims, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(n)));
}

void validate(const DatasetBundle& data)
{
    if (data.inputs.rank() < 2) throw DataError("dataset inputs must be batch x dims");
    if (data.inputs.dim(0) != data.labels.size()) {
        throw DataError("dataset has " + std::to_string(data.inputs.dim(0)) + " inputs but " +
                        std::to_string(data.labels.size()) + " labels");
    }
    const auto values = data.inputs.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0f && values[i] <= 1.0f)) {
            throw DataError("dataset value out of range [0,1] at index " + std::to_string(i) + ": " +
                            std::to_string(values[i]));
        }
    }
}

}  // namespace eccsnn
