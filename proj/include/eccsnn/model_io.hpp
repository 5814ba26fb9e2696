#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "eccsnn/model.hpp"
#include "eccsnn/snn_model.hpp"

namespace eccsnn {

/// Container schema version written by this build. Loaders accept any minor
/// revision of the same major version.
inline constexpr const char* kFormatVersion = "1.0";
inline constexpr int kFormatMajor = 1;

/**
 * @name Containers
 * A container is a directory holding `manifest.json` plus one raw
 * little-endian row-major blob per tensor, named after the tensor.
 * See docs/container-format.md for the schema.
 * @{
 */
CnnModel load_model(const std::filesystem::path& dir);
void save_model(const CnnModel& model, const std::filesystem::path& dir);

SnnModel load_snn_model(const std::filesystem::path& dir);
void save_snn_model(const SnnModel& snn, const std::filesystem::path& dir);

DatasetBundle load_dataset(const std::filesystem::path& dir);
void save_dataset(const DatasetBundle& data, const std::filesystem::path& dir);
/** @} */

CalibrationStats load_stats(const std::filesystem::path& file);
void save_stats(const CalibrationStats& stats, const std::filesystem::path& file);

/// FNV-1a 64-bit hash of a tensor's little-endian byte image.
std::uint64_t tensor_checksum(const Tensor& t);

}  // namespace eccsnn
