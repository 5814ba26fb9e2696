#include "eccsnn/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace eccsnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

template <typename T>
constexpr const char* dtype_name()
{
    if constexpr (std::is_same_v<T, float>) return "float32";
    else if constexpr (std::is_same_v<T, double>) return "float64";
    else if constexpr (std::is_same_v<T, std::int32_t>) return "int32";
    else if constexpr (std::is_same_v<T, std::int64_t>) return "int64";
    else if constexpr (std::is_same_v<T, std::uint32_t>) return "uint32";
}

template <typename T>
void to_little_endian(std::vector<T>& values)
{
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) {
            auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
            std::reverse(bytes.begin(), bytes.end());
            v = std::bit_cast<T>(bytes);
        }
    }
}

template <typename T>
std::vector<T> read_blob(const fs::path& dir, const std::string& name, std::size_t count)
{
    const fs::path file = dir / name;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("missing blob '" + name + "' in " + dir.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T)) {
        throw DataError("blob '" + name + "' has " + std::to_string(bytes) + " bytes, expected " +
                        std::to_string(count * sizeof(T)) + " (" + std::to_string(count) + " x " +
                        dtype_name<T>() + ")");
    }
    in.seekg(0);
    std::vector<T> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("failed reading blob '" + name + "'");
    to_little_endian(values);  // involution: LE on disk -> native
    return values;
}

template <typename T>
void write_blob(const fs::path& dir, const std::string& name, std::vector<T> values)
{
    to_little_endian(values);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write blob '" + (dir / name).string() + "'");
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!out) throw DataError("failed writing blob '" + (dir / name).string() + "'");
}

void check_tensor_name(const std::string& name)
{
    if (name.empty() || name == kManifest || name.find_first_of("/\\") != std::string::npos || name == "." ||
        name == "..") {
        throw DataError("invalid tensor name '" + name + "'");
    }
}

json read_manifest(const fs::path& dir, std::string_view expected_kind)
{
    const fs::path file = dir / kManifest;
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(file.string() + ": invalid JSON: " + e.what());
    }
    if (!m.is_object()) throw DataError(file.string() + ": manifest must be a JSON object");
    if (!m.contains("format_version") || !m["format_version"].is_string()) {
        throw DataError(file.string() + ": missing string field 'format_version'");
    }
    const std::string version = m["format_version"];
    int major = -1;
    try {
        major = std::stoi(version.substr(0, version.find('.')));
    } catch (const std::exception&) {
    }
    if (major != kFormatMajor) {
        throw DataError(file.string() + ": unsupported format_version '" + version + "' (this build reads " +
                        std::to_string(kFormatMajor) + ".x)");
    }
    if (m.value("kind", std::string{}) != expected_kind) {
        throw DataError(file.string() + ": field 'kind' must be \"" + std::string(expected_kind) + "\"");
    }
    return m;
}

void write_manifest(const fs::path& dir, const json& m)
{
    fs::create_directories(dir);
    std::ofstream out(dir / kManifest, std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / kManifest).string());
    out << m.dump(2) << '\n';
}

template <typename T>
T field(const json& obj, const char* key, const std::string& ctx)
{
    if (!obj.contains(key)) throw DataError(ctx + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError(ctx + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback, const std::string& ctx)
{
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    return field<T>(obj, key, ctx);
}

Shape shape_field(const json& obj, const char* key, const std::string& ctx)
{
    const auto dims = field<std::vector<std::int64_t>>(obj, key, ctx);
    Shape s;
    for (auto d : dims) {
        if (d < 1) throw DataError(ctx + ": field '" + key + "' has a non-positive dimension");
        s.push_back(static_cast<std::size_t>(d));
    }
    if (s.empty()) throw DataError(ctx + ": field '" + key + "' is empty");
    return s;
}

struct TensorEntry {
    std::string name, dtype;
    Shape shape;
};

std::vector<TensorEntry> tensor_entries(const json& m)
{
    std::vector<TensorEntry> out;
    if (!m.contains("tensors") || !m["tensors"].is_array()) throw DataError("manifest: missing array 'tensors'");
    for (const auto& t : m["tensors"]) {
        TensorEntry e;
        e.name = field<std::string>(t, "name", "manifest tensors");
        check_tensor_name(e.name);
        const std::string ctx = "tensor '" + e.name + "'";
        e.dtype = field<std::string>(t, "dtype", ctx);
        e.shape = shape_field(t, "shape", ctx);
        out.push_back(std::move(e));
    }
    return out;
}

json tensor_entry(const std::string& name, const char* dtype, const Shape& shape)
{
    return json{{"name", name}, {"dtype", dtype}, {"shape", shape}};
}

// ---- CNN layers ------------------------------------------------------------

LayerSpec parse_layer(const json& j, std::size_t index)
{
    LayerSpec l;
    const std::string ctx0 = "layer " + std::to_string(index);
    l.name = field<std::string>(j, "name", ctx0);
    const std::string ctx = "layer '" + l.name + "'";
    const auto type = field<std::string>(j, "type", ctx);
    const auto kind = parse_layer_kind(type);
    if (!kind) throw DataError(ctx + ": unsupported layer kind '" + type + "'");
    l.kind = *kind;
    switch (l.kind) {
    case LayerKind::Conv2D: {
        l.out_channels = field<std::size_t>(j, "out_channels", ctx);
        const json& k = j.contains("kernel") ? j["kernel"] : json();
        if (k.is_number_unsigned()) {
            l.kernel_h = l.kernel_w = k.get<std::size_t>();
        } else {
            const auto kv = field<std::vector<std::size_t>>(j, "kernel", ctx);
            if (kv.size() != 2) throw DataError(ctx + ": field 'kernel' must be [kh, kw]");
            l.kernel_h = kv[0];
            l.kernel_w = kv[1];
        }
        l.stride = field_or<std::size_t>(j, "stride", 1, ctx);
        l.padding = field_or<std::size_t>(j, "padding", 0, ctx);
        l.weight = field<std::string>(j, "weight", ctx);
        l.bias = field_or<std::string>(j, "bias", "", ctx);
        break;
    }
    case LayerKind::Dense:
        l.units = field<std::size_t>(j, "units", ctx);
        l.weight = field<std::string>(j, "weight", ctx);
        l.bias = field_or<std::string>(j, "bias", "", ctx);
        break;
    case LayerKind::AvgPool:
        l.window = field<std::size_t>(j, "window", ctx);
        l.stride = field_or<std::size_t>(j, "stride", l.window, ctx);
        break;
    case LayerKind::BatchNorm:
        l.gamma = field<std::string>(j, "gamma", ctx);
        l.beta = field<std::string>(j, "beta", ctx);
        l.mean = field<std::string>(j, "mean", ctx);
        l.var = field<std::string>(j, "var", ctx);
        l.epsilon = field<double>(j, "epsilon", ctx);
        break;
    case LayerKind::Input:
    case LayerKind::Relu:
    case LayerKind::Flatten:
        break;
    }
    return l;
}

json layer_json(const LayerSpec& l)
{
    json j{{"name", l.name}, {"type", std::string(to_string(l.kind))}};
    switch (l.kind) {
    case LayerKind::Conv2D:
        j["out_channels"] = l.out_channels;
        j["kernel"] = {l.kernel_h, l.kernel_w};
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        j["weight"] = l.weight;
        j["bias"] = l.bias.empty() ? json() : json(l.bias);
        break;
    case LayerKind::Dense:
        j["units"] = l.units;
        j["weight"] = l.weight;
        j["bias"] = l.bias.empty() ? json() : json(l.bias);
        break;
    case LayerKind::AvgPool:
        j["window"] = l.window;
        j["stride"] = l.stride;
        break;
    case LayerKind::BatchNorm:
        j["gamma"] = l.gamma;
        j["beta"] = l.beta;
        j["mean"] = l.mean;
        j["var"] = l.var;
        j["epsilon"] = l.epsilon;
        break;
    default:
        break;
    }
    return j;
}

json config_json(const SnnProvenance& p)
{
    const ConversionConfig& c = p.config;
    return json{
        {"mode", std::string(to_string(c.mode))},
        {"kappa", c.kappa},
        {"default_kappa", c.default_kappa},
        {"kappa0", c.kappa0},
        {"eta", c.eta},
        {"epsilon", c.epsilon},
        {"timesteps", c.timesteps},
        {"quant_bits", c.quant_bits ? json(*c.quant_bits) : json()},
        {"lambdas", p.stats.lambdas},
        {"sample_count", p.stats.sample_count},
        {"calibration_epsilon", p.stats.epsilon},
        {"tre_eta", p.tre_eta},
        {"tre_timesteps", p.tre_timesteps},
    };
}

SnnProvenance parse_provenance(const json& j)
{
    const std::string ctx = "snn provenance";
    SnnProvenance p;
    const auto mode = parse_conversion_mode(field<std::string>(j, "mode", ctx));
    if (!mode) throw DataError(ctx + ": unknown mode");
    p.config.mode = *mode;
    p.config.kappa = field<std::vector<double>>(j, "kappa", ctx);
    p.config.default_kappa = field<double>(j, "default_kappa", ctx);
    p.config.kappa0 = field<double>(j, "kappa0", ctx);
    p.config.eta = field<double>(j, "eta", ctx);
    p.config.epsilon = field<double>(j, "epsilon", ctx);
    p.config.timesteps = field<int>(j, "timesteps", ctx);
    if (j.contains("quant_bits") && !j["quant_bits"].is_null()) p.config.quant_bits = field<int>(j, "quant_bits", ctx);
    p.stats.lambdas = field<std::vector<double>>(j, "lambdas", ctx);
    p.stats.sample_count = field<std::size_t>(j, "sample_count", ctx);
    p.stats.epsilon = field<double>(j, "calibration_epsilon", ctx);
    p.tre_eta = field<double>(j, "tre_eta", ctx);
    p.tre_timesteps = field<int>(j, "tre_timesteps", ctx);
    return p;
}

}  // namespace

CnnModel load_model(const fs::path& dir)
{
    const json m = read_manifest(dir, "cnn");
    CnnModel model;
    model.name = field<std::string>(m, "name", "manifest");
    model.input_shape = shape_field(m, "input_shape", "manifest");
    if (m.contains("metadata") && m["metadata"].is_object()) {
        model.metadata.source_framework = m["metadata"].value("source_framework", "");
        model.metadata.export_timestamp = m["metadata"].value("export_timestamp", "");
    }
    for (const auto& e : tensor_entries(m)) {
        if (e.dtype != "float32") {
            throw DataError("tensor '" + e.name + "': dtype '" + e.dtype + "' unsupported (expected float32)");
        }
        if (model.params.count(e.name)) throw DataError("tensor '" + e.name + "' declared twice");
        model.params.emplace(e.name, Tensor(e.shape, read_blob<float>(dir, e.name, shape_size(e.shape))));
    }
    if (!m.contains("layers") || !m["layers"].is_array()) throw DataError("manifest: missing array 'layers'");
    std::size_t idx = 0;
    for (const auto& jl : m["layers"]) model.layers.push_back(parse_layer(jl, idx++));
    validate(model);
    return model;
}

void save_model(const CnnModel& model, const fs::path& dir)
{
    fs::create_directories(dir);
    json tensors = json::array();
    for (const auto& [name, t] : model.params) {
        check_tensor_name(name);
        write_blob(dir, name, t.storage());
        tensors.push_back(tensor_entry(name, "float32", t.shape()));
    }
    json layers = json::array();
    for (const auto& l : model.layers) layers.push_back(layer_json(l));
    write_manifest(dir, json{
                            {"format_version", kFormatVersion},
                            {"kind", "cnn"},
                            {"name", model.name},
                            {"input_shape", model.input_shape},
                            {"metadata",
                             {{"source_framework", model.metadata.source_framework},
                              {"export_timestamp", model.metadata.export_timestamp}}},
                            {"layers", layers},
                            {"tensors", tensors},
                        });
}

void save_snn_model(const SnnModel& snn, const fs::path& dir)
{
    validate(snn);
    fs::create_directories(dir);
    json layers = json::array();
    json tensors = json::array();
    for (const auto& l : snn.layers) {
        json j{{"name", l.name},           {"type", std::string(to_string(l.kind))},
               {"in_shape", l.in_shape},   {"out_shape", l.out_shape},
               {"kernel", {l.kernel_h, l.kernel_w}},
               {"stride", l.stride},       {"padding", l.padding},
               {"window", l.window},       {"spiking", l.spiking},
               {"weight", l.name + ".w"},  {"bias", l.name + ".bias"}};
        check_tensor_name(l.name + ".w");
        if (const auto* f = std::get_if<FloatSynapses>(&l.synapses)) {
            j["threshold"] = static_cast<double>(f->threshold);
            write_blob(dir, l.name + ".w", f->weights.storage());
            write_blob(dir, l.name + ".bias", f->bias);
            tensors.push_back(tensor_entry(l.name + ".w", "float32", f->weights.shape()));
            tensors.push_back(tensor_entry(l.name + ".bias", "float32", {f->bias.size()}));
        } else {
            const auto& q = std::get<FixedSynapses>(l.synapses);
            j["threshold"] = q.threshold;
            j["scale"] = q.scale;
            write_blob(dir, l.name + ".w", q.weights.storage());
            write_blob(dir, l.name + ".bias", q.bias);
            tensors.push_back(tensor_entry(l.name + ".w", "int32", q.weights.shape()));
            tensors.push_back(tensor_entry(l.name + ".bias", "int64", {q.bias.size()}));
        }
        layers.push_back(std::move(j));
    }
    write_manifest(dir, json{
                            {"format_version", kFormatVersion},
                            {"kind", "snn"},
                            {"name", snn.name},
                            {"input_shape", snn.input_shape},
                            {"numeric_mode", snn.fixed_point() ? "fixed" : "float"},
                            {"bits", snn.fixed_bits ? json(*snn.fixed_bits) : json()},
                            {"encoder", {{"kappa0", snn.encoder.kappa0}, {"timesteps", snn.encoder.timesteps}}},
                            {"layers", layers},
                            {"tensors", tensors},
                            {"provenance", config_json(snn.provenance)},
                        });
}

SnnModel load_snn_model(const fs::path& dir)
{
    const json m = read_manifest(dir, "snn");
    SnnModel snn;
    snn.name = field<std::string>(m, "name", "manifest");
    snn.input_shape = shape_field(m, "input_shape", "manifest");
    const auto mode = field<std::string>(m, "numeric_mode", "manifest");
    if (mode == "fixed") {
        snn.fixed_bits = field<int>(m, "bits", "manifest");
    } else if (mode != "float") {
        throw DataError("manifest: numeric_mode must be \"float\" or \"fixed\"");
    }
    const json enc = m.value("encoder", json::object());
    snn.encoder.kappa0 = field<double>(enc, "kappa0", "manifest encoder");
    snn.encoder.timesteps = field<int>(enc, "timesteps", "manifest encoder");

    std::map<std::string, TensorEntry> entries;
    for (auto& e : tensor_entries(m)) entries.emplace(e.name, e);
    auto entry = [&](const std::string& name, const char* dtype) -> const TensorEntry& {
        auto it = entries.find(name);
        if (it == entries.end()) throw DataError("tensor '" + name + "' not declared in manifest");
        if (it->second.dtype != dtype) {
            throw DataError("tensor '" + name + "': dtype '" + it->second.dtype + "', expected " + dtype);
        }
        return it->second;
    };

    if (!m.contains("layers") || !m["layers"].is_array()) throw DataError("manifest: missing array 'layers'");
    for (const auto& j : m["layers"]) {
        SnnLayer l;
        l.name = field<std::string>(j, "name", "snn layer");
        const std::string ctx = "snn layer '" + l.name + "'";
        const auto kind = parse_snn_layer_kind(field<std::string>(j, "type", ctx));
        if (!kind) throw DataError(ctx + ": unsupported layer kind");
        l.kind = *kind;
        l.in_shape = shape_field(j, "in_shape", ctx);
        l.out_shape = shape_field(j, "out_shape", ctx);
        const auto k = field<std::vector<std::size_t>>(j, "kernel", ctx);
        if (k.size() != 2) throw DataError(ctx + ": field 'kernel' must be [kh, kw]");
        l.kernel_h = k[0];
        l.kernel_w = k[1];
        l.stride = field<std::size_t>(j, "stride", ctx);
        l.padding = field<std::size_t>(j, "padding", ctx);
        l.window = field<std::size_t>(j, "window", ctx);
        l.spiking = field<bool>(j, "spiking", ctx);
        const auto wname = field<std::string>(j, "weight", ctx);
        const auto bname = field<std::string>(j, "bias", ctx);
        if (snn.fixed_point()) {
            FixedSynapses q;
            const auto& we = entry(wname, "int32");
            q.weights = IntTensor(we.shape, read_blob<std::int32_t>(dir, wname, shape_size(we.shape)));
            q.bias = read_blob<std::int64_t>(dir, bname, shape_size(entry(bname, "int64").shape));
            q.threshold = field<std::int64_t>(j, "threshold", ctx);
            q.scale = field<double>(j, "scale", ctx);
            l.synapses = std::move(q);
        } else {
            FloatSynapses f;
            const auto& we = entry(wname, "float32");
            f.weights = Tensor(we.shape, read_blob<float>(dir, wname, shape_size(we.shape)));
            f.bias = read_blob<float>(dir, bname, shape_size(entry(bname, "float32").shape));
            f.threshold = static_cast<float>(field<double>(j, "threshold", ctx));
            l.synapses = std::move(f);
        }
        snn.layers.push_back(std::move(l));
    }
    if (!m.contains("provenance")) throw DataError("manifest: missing object 'provenance'");
    snn.provenance = parse_provenance(m["provenance"]);
    try {
        validate(snn);
    } catch (const InvariantError& e) {
        throw DataError(dir.string() + ": " + e.what());
    }
    return snn;
}

DatasetBundle load_dataset(const fs::path& dir)
{
    const json m = read_manifest(dir, "dataset");
    DatasetBundle data;
    const auto split = field<std::string>(m, "split", "manifest");
    if (split == "calibration") data.split = SplitTag::Calibration;
    else if (split == "test") data.split = SplitTag::Test;
    else throw DataError("manifest: field 'split' must be \"calibration\" or \"test\"");

    const json inputs = m.value("inputs", json::object());
    if (field<std::string>(inputs, "dtype", "manifest inputs") != "float32") {
        throw DataError("manifest inputs: dtype must be float32");
    }
    const Shape shape = shape_field(inputs, "shape", "manifest inputs");
    const auto in_file = field<std::string>(inputs, "file", "manifest inputs");
    check_tensor_name(in_file);
    data.inputs = Tensor(shape, read_blob<float>(dir, in_file, shape_size(shape)));

    const json labels = m.value("labels", json::object());
    if (field<std::string>(labels, "dtype", "manifest labels") != "uint32") {
        throw DataError("manifest labels: dtype must be uint32");
    }
    const auto count = field<std::size_t>(labels, "count", "manifest labels");
    const auto lab_file = field<std::string>(labels, "file", "manifest labels");
    check_tensor_name(lab_file);
    data.labels = read_blob<std::uint32_t>(dir, lab_file, count);
    validate(data);
    return data;
}

void save_dataset(const DatasetBundle& data, const fs::path& dir)
{
    validate(data);
    fs::create_directories(dir);
    write_blob(dir, "inputs", data.inputs.storage());
    write_blob(dir, "labels", data.labels);
    write_manifest(dir, json{
                            {"format_version", kFormatVersion},
                            {"kind", "dataset"},
                            {"split", data.split == SplitTag::Calibration ? "calibration" : "test"},
                            {"inputs", {{"file", "inputs"}, {"dtype", "float32"}, {"shape", data.inputs.shape()}}},
                            {"labels", {{"file", "labels"}, {"dtype", "uint32"}, {"count", data.labels.size()}}},
                        });
}

CalibrationStats load_stats(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(file.string() + ": invalid JSON: " + e.what());
    }
    const std::string ctx = file.string();
    const auto version = field<std::string>(j, "format_version", ctx);
    if (version.substr(0, version.find('.')) != std::to_string(kFormatMajor)) {
        throw DataError(ctx + ": unsupported format_version '" + version + "'");
    }
    if (j.value("kind", std::string{}) != "calibration") throw DataError(ctx + ": field 'kind' must be \"calibration\"");
    CalibrationStats s;
    s.lambdas = field<std::vector<double>>(j, "lambdas", ctx);
    s.sample_count = field<std::size_t>(j, "sample_count", ctx);
    s.epsilon = field<double>(j, "epsilon", ctx);
    if (s.lambdas.empty() || s.lambdas[0] != 1.0) throw DataError(ctx + ": lambdas[0] must be 1");
    return s;
}

void save_stats(const CalibrationStats& stats, const fs::path& file)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    const json j{{"format_version", kFormatVersion},
                 {"kind", "calibration"},
                 {"lambdas", stats.lambdas},
                 {"sample_count", stats.sample_count},
                 {"epsilon", stats.epsilon}};
    out << j.dump(2) << '\n';
}

std::uint64_t tensor_checksum(const Tensor& t)
{
    std::vector<float> values = t.storage();
    to_little_endian(values);
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < values.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace eccsnn
