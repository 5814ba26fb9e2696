#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's kernels or simulator.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eccsnn/model.hpp"
#include "eccsnn/snn_model.hpp"

namespace testsupport {

using eccsnn::Shape;
using eccsnn::Tensor;

std::filesystem::path fixture_dir();
/// Fresh empty directory under the system temp dir, removed at exit.
std::filesystem::path scratch_dir(const std::string& name);

Tensor random_tensor(const Shape& shape, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f);

// Naive-loop kernels in double.
std::vector<double> naive_conv(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride,
                               std::size_t pad);
std::vector<double> naive_dense(const Tensor& in, const Tensor& w, const Tensor& b);
std::vector<double> naive_pool(const Tensor& in, std::size_t window, std::size_t stride);

/// Naive forward pass of a whole model: BN computed unfolded, ReLU clamps.
std::vector<double> naive_forward(const eccsnn::CnnModel& model, const Tensor& input);

struct RandomCnnOptions {
    bool batchnorm = true;
    double epsilon = 0.001;
    bool bias = true;
};

/// Small random conv/pool/dense network with a ReLU after every hidden layer; validated.
eccsnn::CnnModel random_cnn(std::mt19937& rng, const RandomCnnOptions& opt = {});

/// Every (pre, post, weight index) synapse of a layer, enumerated from the output side.
struct Synapse {
    std::size_t pre, post, weight;
};
std::vector<Synapse> enumerate_synapses(const eccsnn::SnnLayer& layer);

/// Per-layer results of the dense-matrix reference simulator. Index 0 is the encoder.
struct NaiveRun {
    std::vector<std::vector<std::uint32_t>> counts;
    std::vector<std::vector<double>> potential;
    std::vector<std::vector<double>> cumulative;
    std::vector<std::vector<std::uint32_t>> spikes_per_step;  // [layer][t]
};

NaiveRun naive_simulate(const eccsnn::SnnModel& snn, const Tensor& input, int timesteps);

/// Alg. 1 spike counts of one image, computed with a literal per-pixel loop.
std::vector<std::uint32_t> naive_encode_counts(const std::vector<float>& x, double kappa0, int timesteps);

/// Random float SNN with dense/conv/pool layers, last layer non-spiking; validated.
eccsnn::SnnModel random_snn(std::mt19937& rng);

}  // namespace testsupport
