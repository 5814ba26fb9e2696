#pragma once

#include <string_view>

#include "eccsnn/tensor.hpp"

namespace eccsnn {

/// Output spatial extent of a zero-padded window sweep.
inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding)
{
    return (in + 2 * padding - kernel) / stride + 1;
}

/// Cross-correlation of a CxHxW map with OxCxKhxKw kernels plus per-channel bias.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding, std::string_view layer = "conv2d");

/// out_i = sum_j W_ij in_j + b_i, with W stored NxM. Input of any shape is read flat.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     std::string_view layer = "dense");

/// Mean over window x window patches of a CxHxW map (padding 0).
Tensor avgpool_forward(const Tensor& input, std::size_t window, std::size_t stride,
                       std::string_view layer = "avgpool");

/// Inference-mode batch norm; channel axis is dim 0 (a flat vector counts as C x 1).
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                         const Tensor& var, double epsilon, std::string_view layer = "batchnorm");

Tensor relu_forward(const Tensor& input);

}  // namespace eccsnn
