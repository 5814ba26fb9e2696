#include "eccsnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eccsnn {

namespace {

[[noreturn]] void shape_fail(std::string_view layer, const std::string& msg)
{
    throw DataError(std::string(layer) + ": " + msg);
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding, std::string_view layer)
{
    if (input.rank() != 3) shape_fail(layer, "input must be CxHxW, got " + shape_str(input.shape()));
    if (weights.rank() != 4) shape_fail(layer, "weights must be OxCxKhxKw, got " + shape_str(weights.shape()));
    const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
    const std::size_t out_ch = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    if (weights.dim(1) != channels) {
        shape_fail(layer, "input channels " + std::to_string(channels) + " != weight channels " +
                              std::to_string(weights.dim(1)));
    }
    if (bias.size() != out_ch) {
        shape_fail(layer, "bias length " + std::to_string(bias.size()) + " != output channels " +
                              std::to_string(out_ch));
    }
    if (stride == 0) shape_fail(layer, "stride must be >= 1");
    if (height + 2 * padding < kh || width + 2 * padding < kw) {
        shape_fail(layer, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                              shape_str(input.shape()));
    }
    const std::size_t out_h = conv_out_extent(height, kh, stride, padding);
    const std::size_t out_w = conv_out_extent(width, kw, stride, padding);

    Tensor out({out_ch, out_h, out_w});
    const auto in = input.data();
    const auto w = weights.data();
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t o = 0; o < out_ch; ++o) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = bias[o];
                const auto y0 = static_cast<std::ptrdiff_t>(oy * stride) - pad;
                const auto x0 = static_cast<std::ptrdiff_t>(ox * stride) - pad;
                for (std::size_t c = 0; c < channels; ++c) {
                    const float* w_oc = &w[((o * channels + c) * kh) * kw];
                    const float* in_c = &in[c * height * width];
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const auto y = y0 + static_cast<std::ptrdiff_t>(ky);
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const auto x = x0 + static_cast<std::ptrdiff_t>(kx);
                            if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
                            acc += static_cast<double>(w_oc[ky * kw + kx]) *
                                   in_c[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
                        }
                    }
                }
                out[(o * out_h + oy) * out_w + ox] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::string_view layer)
{
    if (weights.rank() != 2) shape_fail(layer, "weights must be NxM, got " + shape_str(weights.shape()));
    const std::size_t n_out = weights.dim(0), n_in = weights.dim(1);
    if (input.size() != n_in) {
        shape_fail(layer, "input size " + std::to_string(input.size()) + " != weight columns " + std::to_string(n_in));
    }
    if (bias.size() != n_out) {
        shape_fail(layer, "bias length " + std::to_string(bias.size()) + " != weight rows " + std::to_string(n_out));
    }
    Tensor out({n_out});
    const auto in = input.data();
    const auto w = weights.data();
    for (std::size_t i = 0; i < n_out; ++i) {
        double acc = bias[i];
        const float* row = &w[i * n_in];
        for (std::size_t j = 0; j < n_in; ++j) acc += static_cast<double>(row[j]) * in[j];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

Tensor avgpool_forward(const Tensor& input, std::size_t window, std::size_t stride, std::string_view layer)
{
    if (input.rank() != 3) shape_fail(layer, "input must be CxHxW, got " + shape_str(input.shape()));
    if (window == 0 || stride == 0) shape_fail(layer, "window and stride must be >= 1");
    const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
    if (height < window || width < window) {
        shape_fail(layer, "window " + std::to_string(window) + " larger than input " + shape_str(input.shape()));
    }
    const std::size_t out_h = conv_out_extent(height, window, stride, 0);
    const std::size_t out_w = conv_out_extent(width, window, stride, 0);
    const double inv_area = 1.0 / static_cast<double>(window * window);
    Tensor out({channels, out_h, out_w});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < window; ++ky) {
                    for (std::size_t kx = 0; kx < window; ++kx) {
                        acc += input[(c * height + oy * stride + ky) * width + ox * stride + kx];
                    }
                }
                out[(c * out_h + oy) * out_w + ox] = static_cast<float>(acc * inv_area);
            }
        }
    }
    return out;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                         const Tensor& var, double epsilon, std::string_view layer)
{
    const std::size_t channels = input.dim(0);
    for (const Tensor* p : {&gamma, &beta, &mean, &var}) {
        if (p->size() != channels) {
            shape_fail(layer, "parameter length " + std::to_string(p->size()) + " != channels " +
                                  std::to_string(channels));
        }
    }
    if (epsilon < 0.0) shape_fail(layer, "epsilon must be >= 0");
    for (std::size_t c = 0; c < channels; ++c) {
        if (var[c] < 0.0f) shape_fail(layer, "negative variance at channel " + std::to_string(c));
    }
    const std::size_t per_channel = input.size() / channels;
    Tensor out(input.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        const double scale = gamma[c] / std::sqrt(static_cast<double>(var[c]) + epsilon);
        for (std::size_t k = 0; k < per_channel; ++k) {
            const std::size_t i = c * per_channel + k;
            out[i] = static_cast<float>(scale * (static_cast<double>(input[i]) - mean[c]) + beta[c]);
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& input)
{
    Tensor out = input;
    for (auto& v : out.storage()) v = std::max(v, 0.0f);
    return out;
}

}  // namespace eccsnn
