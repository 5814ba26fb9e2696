#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eccsnn/tensor.hpp"

namespace eccsnn {

enum class LayerKind { Input, Conv2D, Dense, AvgPool, BatchNorm, Relu, Flatten };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

/**
 * @brief One entry of a CNN's ordered layer list.
 *
 * Only the geometry fields relevant to @ref kind are meaningful. Parameter
 * tensors are referenced by name into CnnModel::params; an empty bias name
 * means the layer has no bias.
 */
struct LayerSpec {
    LayerKind kind = LayerKind::Input;
    std::string name;

    std::size_t out_channels = 0;  // Conv2D
    std::size_t kernel_h = 0;      // Conv2D
    std::size_t kernel_w = 0;      // Conv2D
    std::size_t stride = 1;        // Conv2D, AvgPool
    std::size_t padding = 0;       // Conv2D
    std::size_t units = 0;         // Dense
    std::size_t window = 0;        // AvgPool

    std::string weight, bias;             // Conv2D, Dense
    std::string gamma, beta, mean, var;   // BatchNorm
    double epsilon = 0.001;               // BatchNorm

    // Filled in by validate().
    Shape in_shape, out_shape;
};

struct ModelMetadata {
    std::string source_framework;
    std::string export_timestamp;
};

struct CnnModel {
    std::string name;
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::map<std::string, Tensor> params;
    ModelMetadata metadata;

    const Tensor& param(const std::string& tensor_name) const;
    /// Bias tensor of a Conv2D/Dense layer, or zeros when it has none.
    Tensor bias_or_zero(const LayerSpec& layer) const;
};

/**
 * Checks the layer list and fills in every layer's in/out shape.
 * Throws DataError naming the layer and field on the first violation.
 */
void validate(CnnModel& model);

/**
 * @brief A synaptic layer (Conv2D, Dense or AvgPool) together with the
 * BatchNorm/ReLU layers that trail it. Stages map one-to-one onto SNN layers.
 */
struct Stage {
    std::size_t op;                  // index of the synaptic layer
    std::vector<std::size_t> trailing;  // BatchNorm/Relu indices, in order
    std::size_t last;                // index whose output is the stage output
    bool has_relu = false;
};

std::vector<Stage> stages(const CnnModel& model);

struct ForwardResult {
    Tensor logits;
    /// One entry per stage: post-ReLU map for conv/dense stages, pooled map
    /// for avg-pool stages, and the logits for a final stage without ReLU.
    std::vector<Tensor> activations;
};

ForwardResult cnn_forward(const CnnModel& model, const Tensor& input);

enum class SplitTag { Calibration, Test };

struct DatasetBundle {
    Tensor inputs;  // batch x sample dims
    std::vector<std::uint32_t> labels;
    SplitTag split = SplitTag::Test;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
    Tensor sample(std::size_t i) const;
};

/// Throws DataError citing the flat index and value of the first entry outside [0, 1].
void validate(const DatasetBundle& data);

}  // namespace eccsnn
