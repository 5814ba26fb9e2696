#include "eccsnn/report.hpp"

#include <cstdio>
#include <fstream>

namespace eccsnn {

using json = nlohmann::json;

namespace {

std::string fmt(const char* spec, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string row_fields(const SweepRow& r)
{
    return std::to_string(r.timesteps) + "," + fmt("%.6f", r.cnn_acc) + "," + fmt("%.6f", r.snn_acc) + "," +
           fmt("%.4f", r.loss_pp) + "," + fmt("%.1f", r.synops) + "," + std::to_string(r.macs);
}

}  // namespace

std::string sweep_csv(std::span<const SweepRow> rows)
{
    std::string out = std::string(kSweepColumns) + "\n";
    for (const auto& r : rows) out += row_fields(r) + "\n";
    return out;
}

std::string bits_csv(std::span<const BitsRow> rows)
{
    std::string out = std::string(kBitsColumns) + "\n";
    for (const auto& r : rows) out += std::to_string(r.bits) + "," + row_fields(r.row) + "\n";
    return out;
}

std::string layer_csv(const Evaluation& ev, const FanCounts& fans)
{
    std::string out = std::string(kLayerColumns) + "\n";
    for (std::size_t n = 0; n < fans.neurons.size(); ++n) {
        double mean_d = 0.0, max_d = 0.0;
        for (const auto& r : ev.residuals) {
            if (r.layer == n) {
                mean_d = r.mean_abs;
                max_d = r.max_abs;
            }
        }
        out += std::to_string(n) + "," + std::to_string(fans.neurons[n]) + "," + fmt("%.1f", fans.fan_in[n]) + "," +
               fmt("%.6f", fans.fan_out[n]) + "," + fmt("%.6f", ev.energy.spikes_per_neuron.at(n)) + "," +
               fmt("%.1f", ev.energy.synops_per_layer.at(n)) + "," + fmt("%.6f", mean_d) + "," +
               fmt("%.6f", max_d) + "\n";
    }
    return out;
}

json to_json(const SweepRow& r)
{
    return json{{"T", r.timesteps}, {"cnn_acc", r.cnn_acc}, {"snn_acc", r.snn_acc},
                {"loss_pp", r.loss_pp}, {"synops", r.synops}, {"macs", r.macs}};
}

json to_json(std::span<const SweepRow> rows)
{
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(to_json(r));
    return arr;
}

json to_json(const Evaluation& ev, double cnn_acc)
{
    json residuals = json::array();
    for (const auto& r : ev.residuals) {
        residuals.push_back({{"layer", r.layer}, {"mean_abs_delta", r.mean_abs}, {"max_abs_delta", r.max_abs}});
    }
    return json{
        {"T", ev.timesteps},
        {"samples", ev.samples},
        {"cnn_acc", cnn_acc},
        {"snn_acc", ev.accuracy},
        {"loss_pp", 100.0 * (cnn_acc - ev.accuracy)},
        {"energy",
         {{"cnn_macs", ev.energy.cnn_macs},
          {"snn_synops", ev.energy.snn_synops},
          {"synops_per_layer", ev.energy.synops_per_layer},
          {"synops_per_step", ev.energy.synops_per_step},
          {"spikes_per_neuron", ev.energy.spikes_per_neuron}}},
        {"spike_counts_per_layer", ev.spike_counts_per_layer},
        {"residuals", residuals},
    };
}

void write_text(const std::filesystem::path& file, const std::string& text)
{
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    out << text;
}

void write_json(const std::filesystem::path& file, const json& j)
{
    write_text(file, j.dump(2) + "\n");
}

}  // namespace eccsnn
