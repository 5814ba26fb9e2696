// eccsnn: calibrate, convert, simulate and sweep CNN-to-SNN conversions.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eccsnn/converter.hpp"
#include "eccsnn/metrics.hpp"
#include "eccsnn/model_io.hpp"
#include "eccsnn/report.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace eccsnn;

namespace {

constexpr const char* kOutputEnv = "ECCSNN_OUTPUT_DIR";

fs::path default_output()
{
    const char* env = std::getenv(kOutputEnv);
    return env && *env ? fs::path(env) : fs::path("eccsnn-out");
}

/// Conversion flags shared by `convert` and `sweep`.
struct ConvertFlags {
    std::string mode = "ecc";
    std::vector<double> kappa;
    std::optional<double> kappa0;
    std::optional<double> eta;
    std::optional<double> epsilon;
    int timesteps = 256;
    std::optional<int> bits;

    void attach(CLI::App& cmd)
    {
        cmd.add_option("--mode", mode, "Conversion mode: ecc, wn or tb")
            ->check(CLI::IsMember({"ecc", "wn", "tb"}))
            ->capture_default_str();
        cmd.add_option("--kappa", kappa,
                       "Current amplification factor; one value for all layers or a comma list per layer "
                       "(default 100)")
            ->delimiter(',');
        cmd.add_option("--kappa0", kappa0, "Input encoder amplification factor (default 100)");
        cmd.add_option("--eta", eta, "TRE strength in [0,1); ecc only (default 0.5)");
        cmd.add_option("--epsilon", epsilon,
                       "BatchNorm epsilon; must match the value the statistics were calibrated with");
        cmd.add_option("--timesteps", timesteps, "Spike-train length T")->capture_default_str();
        cmd.add_option("--bits", bits, "Quantize to b-bit fixed point (b >= 2)");
    }

    ConversionConfig config(const CalibrationStats& stats) const
    {
        ConversionConfig cfg;
        cfg.mode = *parse_conversion_mode(mode);
        if (cfg.mode != ConversionMode::ECC && eta) {
            throw UsageError("--eta is only valid with --mode ecc (TRE is an ECC technique)");
        }
        cfg.eta = cfg.mode == ConversionMode::ECC ? eta.value_or(kDefaultEta) : 0.0;
        if (kappa.size() == 1) {
            cfg.default_kappa = kappa[0];
        } else {
            cfg.kappa = kappa;
        }
        if (kappa0) cfg.kappa0 = *kappa0;
        if (epsilon && *epsilon != stats.epsilon) {
            std::ostringstream os;
            os << "--epsilon " << *epsilon << " differs from the calibration epsilon " << stats.epsilon
               << "; recalibrate with the same value";
            throw UsageError(os.str());
        }
        cfg.epsilon = stats.epsilon;
        cfg.timesteps = timesteps;
        cfg.quant_bits = bits;
        cfg.validate();
        if (!cfg.kappa.empty() && cfg.kappa.size() != stats.lambdas.size() - 1) {
            throw UsageError("--kappa lists " + std::to_string(cfg.kappa.size()) + " values, model has " +
                             std::to_string(stats.lambdas.size() - 1) + " layers");
        }
        return cfg;
    }
};

CnnModel folded_model(const fs::path& model_dir, const CalibrationStats& stats)
{
    return fold_batchnorm(load_model(model_dir), stats.epsilon);
}

void print_line(const std::string& s)
{
    std::cout << s << '\n';
}

std::string fixed(double v, int digits)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

json read_json_file(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

/// CSV text to an array of objects keyed by the header row; numbers stay numbers.
json csv_to_json(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    std::string line;
    std::getline(in, line);
    const auto header = split(line);
    json rows = json::array();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        json row;
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = json::parse(cells[i]);
        rows.push_back(row);
    }
    return rows;
}

int run_cli(int argc, char** argv)
{
    CLI::App app{"CNN-to-SNN conversion with explicit current control, and IF-SNN simulation."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    app.footer(std::string("Outputs go to --out, else $") + kOutputEnv + ", else ./eccsnn-out.\n"
               "Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal invariant violation.");

    fs::path out_dir = default_output();
    std::size_t workers = default_workers();
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "Output directory");
        cmd->add_option("--workers", workers, "Simulation threads (results do not depend on it)")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    };

    // calibrate
    fs::path model_dir, calib_dir, test_dir, stats_file, snn_dir, run_dir;
    double calib_epsilon = kDefaultEpsilon;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Fold BatchNorm and measure per-layer activation maxima");
    calibrate_cmd->add_option("--model", model_dir, "CNN container directory")->required();
    calibrate_cmd->add_option("--calib", calib_dir, "Calibration dataset directory")->required();
    calibrate_cmd->add_option("--epsilon", calib_epsilon, "BatchNorm epsilon used for folding")
        ->capture_default_str();
    add_common(calibrate_cmd);

    // convert
    ConvertFlags convert_flags;
    auto* convert_cmd = app.add_subcommand("convert", "Convert a CNN into an SNN container");
    convert_cmd->add_option("--model", model_dir, "CNN container directory")->required();
    convert_cmd->add_option("--stats", stats_file, "Calibration file written by `calibrate`")->required();
    convert_flags.attach(*convert_cmd);
    add_common(convert_cmd);

    // run
    std::optional<int> run_timesteps;
    auto* run_cmd = app.add_subcommand("run", "Simulate an SNN on a test set; write accuracy and energy reports");
    run_cmd->add_option("--snn", snn_dir, "SNN container directory")->required();
    run_cmd->add_option("--test", test_dir, "Test dataset directory")->required();
    run_cmd->add_option("--model", model_dir, "Source CNN container, for CNN accuracy and MACs");
    run_cmd->add_option("--timesteps", run_timesteps, "Spike-train length (default: the SNN's own T)");
    add_common(run_cmd);

    // sweep
    ConvertFlags sweep_flags;
    std::vector<int> t_list;
    std::vector<int> bits_list;
    auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy and synaptic operations versus T and bit width");
    sweep_cmd->add_option("--model", model_dir, "CNN container directory")->required();
    sweep_cmd->add_option("--test", test_dir, "Test dataset directory")->required();
    auto* sweep_snn = sweep_cmd->add_option("--snn", snn_dir, "Reuse this SNN for every T");
    auto* sweep_stats = sweep_cmd->add_option("--stats", stats_file, "Rebuild the SNN for each T from these statistics");
    sweep_snn->excludes(sweep_stats);
    sweep_cmd->add_option("--timesteps-list", t_list, "Comma list of T values")->delimiter(',');
    sweep_cmd->add_option("--bits-list", bits_list, "Comma list of bit widths, run at --timesteps (needs --stats)")
        ->delimiter(',');
    sweep_flags.attach(*sweep_cmd);
    add_common(sweep_cmd);

    // report
    auto* report_cmd = app.add_subcommand("report", "Consolidate a run directory into report.json");
    report_cmd->add_option("--run-dir", run_dir, "Directory holding run/sweep outputs")->required();
    report_cmd->add_option("--out", out_dir, "Output directory (default: the run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (calibrate_cmd->parsed()) {
        const CnnModel folded = fold_batchnorm(load_model(model_dir), calib_epsilon);
        CalibrationStats stats = calibrate(folded, load_dataset(calib_dir), workers);
        stats.epsilon = calib_epsilon;
        const fs::path file = out_dir / "stats.json";
        fs::create_directories(out_dir);
        save_stats(stats, file);
        print_line("wrote " + file.string());
        return 0;
    }

    if (convert_cmd->parsed()) {
        const CalibrationStats stats = load_stats(stats_file);
        const ConversionConfig cfg = convert_flags.config(stats);
        const SnnModel snn = build_snn(folded_model(model_dir, stats), stats, cfg);
        const fs::path dir = out_dir / "snn";
        save_snn_model(snn, dir);
        print_line("wrote " + dir.string());
        return 0;
    }

    if (run_cmd->parsed()) {
        const SnnModel snn = load_snn_model(snn_dir);
        const DatasetBundle test = load_dataset(test_dir);
        const int T = run_timesteps.value_or(snn.encoder.timesteps);
        if (T < 1) throw UsageError("--timesteps must be >= 1");
        const Simulator sim(snn);
        const FanCounts fans = fan_counts(snn);
        Evaluation ev = evaluate(sim, test, T, fans, workers);
        double cnn_acc = 0.0;
        json j;
        if (!model_dir.empty()) {
            const CnnModel cnn = load_model(model_dir);
            cnn_acc = cnn_accuracy(cnn, test, workers);
            ev.energy.cnn_macs = mac_ops(cnn);
            j = to_json(ev, cnn_acc);
        } else {
            j = to_json(ev, 0.0);
            j["cnn_acc"] = nullptr;
            j["loss_pp"] = nullptr;
        }
        j["snn"] = snn_dir.string();
        fs::create_directories(out_dir);
        write_json(out_dir / "run.json", j);
        write_text(out_dir / "layers.csv", layer_csv(ev, fans));
        print_line("T=" + std::to_string(T) + " snn_acc=" + fixed(ev.accuracy, 6) +
                   " synops=" + fixed(ev.energy.snn_synops, 1));
        return 0;
    }

    if (sweep_cmd->parsed()) {
        if (snn_dir.empty() && stats_file.empty()) throw UsageError("sweep needs --snn or --stats");
        if (t_list.empty() && bits_list.empty()) throw UsageError("sweep needs --timesteps-list or --bits-list");
        if (!bits_list.empty() && stats_file.empty()) throw UsageError("--bits-list needs --stats");
        const CnnModel cnn = load_model(model_dir);
        const DatasetBundle test = load_dataset(test_dir);
        fs::create_directories(out_dir);

        std::optional<CalibrationStats> stats;
        std::optional<CnnModel> folded;
        if (!stats_file.empty()) {
            stats = load_stats(stats_file);
            folded = folded_model(model_dir, *stats);
        }
        auto make = [&](int T, std::optional<int> bits) {
            ConvertFlags f = sweep_flags;
            f.timesteps = T;
            f.bits = bits;
            return build_snn(*folded, *stats, f.config(*stats));
        };
        // Accuracy is reported against the source CNN, BatchNorm unfolded.
        const double cnn_acc = cnn_accuracy(cnn, test, workers);
        const std::uint64_t macs = mac_ops(cnn);
        auto row_for = [&](const SnnModel& snn, int T) {
            const Simulator sim(snn);
            const Evaluation ev = evaluate(sim, test, T, fan_counts(snn), workers);
            return SweepRow{T, cnn_acc, ev.accuracy, 100.0 * (cnn_acc - ev.accuracy), ev.energy.snn_synops, macs};
        };

        if (!t_list.empty()) {
            std::vector<SweepRow> rows;
            std::optional<SnnModel> fixed_snn;
            if (!snn_dir.empty()) fixed_snn = load_snn_model(snn_dir);
            for (int T : t_list) {
                if (T < 1) throw UsageError("--timesteps-list values must be >= 1");
                rows.push_back(row_for(fixed_snn ? *fixed_snn : make(T, sweep_flags.bits), T));
            }
            write_text(out_dir / "sweep.csv", sweep_csv(rows));
            write_json(out_dir / "sweep.json", to_json(std::span<const SweepRow>(rows)));
            print_line("wrote " + (out_dir / "sweep.csv").string() + " (" + std::to_string(rows.size()) + " rows)");
        }
        if (!bits_list.empty()) {
            const int T = sweep_flags.timesteps;
            std::vector<BitsRow> rows;
            rows.push_back({32, row_for(make(T, std::nullopt), T)});
            for (int b : bits_list) rows.push_back({b, row_for(make(T, b), T)});
            write_text(out_dir / "bits.csv", bits_csv(rows));
            print_line("wrote " + (out_dir / "bits.csv").string() + " (" + std::to_string(rows.size()) + " rows)");
        }
        return 0;
    }

    if (report_cmd->parsed()) {
        if (!fs::is_directory(run_dir)) throw DataError("run directory not found: " + run_dir.string());
        const fs::path target = report_cmd->count("--out") ? out_dir : run_dir;
        json report{{"run_dir", run_dir.string()}};
        bool any = false;
        auto take = [&](const char* key, const fs::path& p, auto&& reader) {
            if (fs::exists(p)) {
                report[key] = reader(p);
                any = true;
            }
        };
        take("calibration", run_dir / "stats.json", read_json_file);
        take("run", run_dir / "run.json", read_json_file);
        take("layers", run_dir / "layers.csv", csv_to_json);
        take("sweep", run_dir / "sweep.csv", csv_to_json);
        take("bits", run_dir / "bits.csv", csv_to_json);
        if (fs::exists(run_dir / "snn" / "manifest.json")) {
            const json m = read_json_file(run_dir / "snn" / "manifest.json");
            report["snn"] = {{"numeric_mode", m.value("numeric_mode", "")},
                             {"provenance", m.value("provenance", json::object())}};
            any = true;
        }
        if (!any) throw DataError("no run outputs found in " + run_dir.string());
        fs::create_directories(target);
        write_json(target / "report.json", report);
        print_line("wrote " + (target / "report.json").string());
        return 0;
    }
    return 0;
}

void fail_line(const char* kind, const std::string& message)
{
    std::string flat = message;
    for (auto& c : flat)
        if (c == '\n' || c == '\r') c = ' ';
    std::cerr << json{{"error", kind}, {"message", flat}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv)
{
    try {
        return run_cli(argc, argv);
    } catch (const UsageError& e) {
        fail_line("usage", e.what());
        return 1;
    } catch (const DataError& e) {
        fail_line("data", e.what());
        return 2;
    } catch (const InvariantError& e) {
        fail_line("invariant", e.what());
        return 3;
    } catch (const fs::filesystem_error& e) {
        fail_line("data", e.what());
        return 2;
    } catch (const std::exception& e) {
        fail_line("invariant", e.what());
        return 3;
    }
}
