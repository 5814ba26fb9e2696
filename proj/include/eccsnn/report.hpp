#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "eccsnn/metrics.hpp"

namespace eccsnn {

/// Column header of accuracy/energy sweep tables.
inline constexpr const char* kSweepColumns = "T,cnn_acc,snn_acc,loss_pp,synops,macs";
/// Column header of the bit-width sweep table (bits = 32 marks the float run).
inline constexpr const char* kBitsColumns = "bits,T,cnn_acc,snn_acc,loss_pp,synops,macs";
/// Column header of per-layer tables, keyed by layer index (0 = input encoder).
inline constexpr const char* kLayerColumns =
    "layer,neurons,fan_in,fan_out,spikes_per_neuron,synops,mean_abs_delta,max_abs_delta";

struct BitsRow {
    int bits = 32;
    SweepRow row;
};

std::string sweep_csv(std::span<const SweepRow> rows);
std::string bits_csv(std::span<const BitsRow> rows);
std::string layer_csv(const Evaluation& ev, const FanCounts& fans);

nlohmann::json to_json(const SweepRow& row);
nlohmann::json to_json(std::span<const SweepRow> rows);
nlohmann::json to_json(const Evaluation& ev, double cnn_acc);

/// Writes text verbatim (binary mode, no newline translation).
void write_text(const std::filesystem::path& file, const std::string& text);
void write_json(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace eccsnn
