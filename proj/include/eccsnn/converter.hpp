#pragma once

#include "eccsnn/model.hpp"
#include "eccsnn/snn_model.hpp"

namespace eccsnn {

/**
 * @brief Folds every BatchNorm into the Conv2D/Dense layer it follows.
 *
 * W' = gamma / sqrt(var + epsilon) * W and
 * b' = gamma / sqrt(var + epsilon) * (b - mean) + beta, per output channel.
 * Passing epsilon = 0 reproduces a fold that ignores the framework constant.
 */
CnnModel fold_batchnorm(const CnnModel& model, double epsilon);

/// Same, using each BatchNorm layer's own epsilon from the manifest.
CnnModel fold_batchnorm(const CnnModel& model);

/// Per-stage activation maxima over a calibration set; the model must be BN-free.
CalibrationStats calibrate(const CnnModel& model, const DatasetBundle& calib, std::size_t workers = 1);

/// Current normalisation (ECC) or one of its degenerate baselines (WN, TB).
/// Does not apply TRE or quantization.
SnnModel convert(const CnnModel& model, const CalibrationStats& stats, const ConversionConfig& cfg);

/// Adds eta * V_thr / T to every neuron's per-timestep bias current.
SnnModel apply_tre(const SnnModel& snn, double eta, int timesteps);

/// Per-layer fixed-point conversion at bit width b; float-mode input only.
SnnModel quantize(const SnnModel& snn, int bits);

/**
 * @brief Full conversion pipeline on a BN-folded model:
 * convert, then TRE (ECC with eta > 0), then quantize (when cfg.quant_bits).
 */
SnnModel build_snn(const CnnModel& folded, const CalibrationStats& stats, const ConversionConfig& cfg);

}  // namespace eccsnn
