#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "eccsnn/converter.hpp"
#include "eccsnn/model_io.hpp"
#include "support.hpp"

using namespace eccsnn;
namespace fs = std::filesystem;
using testsupport::scratch_dir;

namespace {

nlohmann::json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

void write_json_file(const fs::path& p, const nlohmann::json& j)
{
    std::ofstream(p) << j.dump(2);
}

std::string error_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

void write_blob(const fs::path& p, const std::vector<float>& v)
{
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

nlohmann::json minimal_manifest()
{
    return {{"format_version", "1.0"},
            {"kind", "cnn"},
            {"name", "one"},
            {"input_shape", {2}},
            {"layers",
             {{{"name", "input"}, {"type", "Input"}},
              {{"name", "fc"}, {"type", "Dense"}, {"units", 1}, {"weight", "fc.w"}, {"bias", "fc.b"}}}},
            {"tensors",
             {{{"name", "fc.w"}, {"dtype", "float32"}, {"shape", {1, 2}}},
              {{"name", "fc.b"}, {"dtype", "float32"}, {"shape", {1}}}}}};
}

fs::path minimal_container(const std::string& name)
{
    const fs::path dir = scratch_dir(name);
    write_json_file(dir / "manifest.json", minimal_manifest());
    write_blob(dir / "fc.w", {0.5f, -2.0f});
    write_blob(dir / "fc.b", {0.25f});
    return dir;
}

}  // namespace

TEST_CASE("minimal one-layer manifest loads")
{
    const CnnModel m = load_model(minimal_container("minimal"));
    REQUIRE(m.layers.size() == 2);
    CHECK(m.layers[1].kind == LayerKind::Dense);
    CHECK(m.param("fc.w")[1] == -2.0f);
    CHECK(m.layers[1].out_shape == Shape{1});
}

TEST_CASE("missing blob is reported by name")
{
    const fs::path dir = scratch_dir("missing");
    auto j = minimal_manifest();
    j["layers"][1]["weight"] = "conv1.w";
    j["tensors"][0]["name"] = "conv1.w";
    write_json_file(dir / "manifest.json", j);
    write_blob(dir / "fc.b", {0.25f});
    const std::string msg = error_of([&] { load_model(dir); });
    CHECK(msg.find("conv1.w") != std::string::npos);
}

TEST_CASE("manifest violations are data errors naming layer and field")
{
    SUBCASE("unsupported layer kind")
    {
        const fs::path dir = minimal_container("maxpool");
        auto j = minimal_manifest();
        j["layers"][1]["type"] = "MaxPool";
        write_json_file(dir / "manifest.json", j);
        const std::string msg = error_of([&] { load_model(dir); });
        CHECK(msg.find("MaxPool") != std::string::npos);
    }
    SUBCASE("shape mismatch")
    {
        const fs::path dir = minimal_container("shape");
        auto j = minimal_manifest();
        j["input_shape"] = {3};
        write_json_file(dir / "manifest.json", j);
        const std::string msg = error_of([&] { load_model(dir); });
        CHECK(msg.find("fc") != std::string::npos);
        CHECK(msg.find("weight") != std::string::npos);
    }
    SUBCASE("blob size mismatch")
    {
        const fs::path dir = minimal_container("blobsize");
        write_blob(dir / "fc.w", {1.0f});
        CHECK_THROWS_AS(load_model(dir), DataError);
    }
    SUBCASE("major version mismatch")
    {
        const fs::path dir = minimal_container("version");
        auto j = minimal_manifest();
        j["format_version"] = "2.0";
        write_json_file(dir / "manifest.json", j);
        const std::string msg = error_of([&] { load_model(dir); });
        CHECK(msg.find("2.0") != std::string::npos);
    }
    SUBCASE("missing directory")
    {
        const std::string msg = error_of([&] { load_model("/nonexistent/model-dir"); });
        CHECK(msg.find("/nonexistent/model-dir") != std::string::npos);
    }
}

TEST_CASE("cnn round-trip is the identity on random models")
{
    std::mt19937 rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        testsupport::RandomCnnOptions opt;
        opt.bias = trial % 3 != 0;
        opt.epsilon = trial % 2 ? 0.001 : 1e-5;
        CnnModel m = testsupport::random_cnn(rng, opt);
        m.metadata.source_framework = "test";
        m.metadata.export_timestamp = "2026-01-01T00:00:00";
        const fs::path dir = scratch_dir("cnn-rt");
        save_model(m, dir);
        const CnnModel back = load_model(dir);
        CHECK(back.name == m.name);
        CHECK(back.input_shape == m.input_shape);
        CHECK(back.metadata.source_framework == "test");
        REQUIRE(back.layers.size() == m.layers.size());
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            CHECK(back.layers[i].kind == m.layers[i].kind);
            CHECK(back.layers[i].name == m.layers[i].name);
            CHECK(back.layers[i].out_shape == m.layers[i].out_shape);
            CHECK(back.layers[i].epsilon == m.layers[i].epsilon);
        }
        CHECK(back.params == m.params);
    }
}

TEST_CASE("snn round-trip is bit-exact in float and fixed point")
{
    std::mt19937 rng(78);
    for (int trial = 0; trial < 25; ++trial) {
        SnnModel snn = testsupport::random_snn(rng);
        snn.provenance.config.kappa = {100.0, 50.0};
        snn.provenance.stats.lambdas = {1.0, 2.5, 0.125};
        snn.provenance.stats.sample_count = 7;
        if (trial % 2) snn = quantize(apply_tre(snn, 0.5, 16), 8 + trial % 5);
        const fs::path dir = scratch_dir("snn-rt");
        save_snn_model(snn, dir);
        const SnnModel back = load_snn_model(dir);
        CHECK(back == snn);
    }
}

TEST_CASE("snn version mismatch is rejected")
{
    std::mt19937 rng(5);
    const fs::path dir = scratch_dir("snn-version");
    save_snn_model(testsupport::random_snn(rng), dir);
    auto j = read_json(dir / "manifest.json");
    j["format_version"] = "9.1";
    write_json_file(dir / "manifest.json", j);
    CHECK_THROWS_AS(load_snn_model(dir), DataError);
}

TEST_CASE("datasets")
{
    SUBCASE("one all-zero image")
    {
        DatasetBundle d;
        d.inputs = Tensor({1, 1, 2, 2}, 0.0f);
        d.labels = {0};
        const fs::path dir = scratch_dir("ds-zero");
        save_dataset(d, dir);
        const DatasetBundle back = load_dataset(dir);
        CHECK(back.size() == 1);
        CHECK(back.inputs == d.inputs);
        CHECK(back.labels == d.labels);
        CHECK(back.split == SplitTag::Test);
    }
    SUBCASE("out-of-range value cites its index")
    {
        DatasetBundle d;
        d.inputs = Tensor({2, 3}, 0.5f);
        d.inputs[4] = 1.5f;
        d.labels = {0, 1};
        const std::string msg = error_of([&] { validate(d); });
        CHECK(msg.find("index 4") != std::string::npos);
        CHECK(msg.find("1.5") != std::string::npos);

        // Same rejection on load of a tampered blob.
        d.inputs[4] = 1.0f;
        const fs::path dir = scratch_dir("ds-range");
        save_dataset(d, dir);
        std::vector<float> raw(d.inputs.data().begin(), d.inputs.data().end());
        raw[4] = 1.5f;
        write_blob(dir / read_json(dir / "manifest.json")["inputs"]["file"].get<std::string>(), raw);
        const std::string msg2 = error_of([&] { load_dataset(dir); });
        CHECK(msg2.find("index 4") != std::string::npos);
    }
    SUBCASE("label count mismatch")
    {
        DatasetBundle d;
        d.inputs = Tensor({2, 3}, 0.5f);
        d.labels = {0};
        CHECK_THROWS_AS(validate(d), DataError);
    }
}

TEST_CASE("calibration stats round-trip")
{
    CalibrationStats s;
    s.lambdas = {1.0, 4.191881, 0.1 + 0.2};
    s.sample_count = 512;
    s.epsilon = 1e-5;
    const fs::path file = scratch_dir("stats") / "stats.json";
    save_stats(s, file);
    CHECK(load_stats(file) == s);
}

TEST_CASE("committed fixture matches its golden file")
{
    const fs::path root = testsupport::fixture_dir();
    const auto golden = read_json(root / "golden.json");
    const CnnModel m = load_model(root / "cnn");
    CHECK(m.layers.size() == golden["layer_count"].get<std::size_t>());

    for (const auto& [name, hex] : golden["param_checksums_fnv1a64"].items()) {
        CAPTURE(name);
        REQUIRE(m.params.count(name) == 1);
        const std::uint64_t want = std::stoull(hex.get<std::string>(), nullptr, 16);
        CHECK(tensor_checksum(m.param(name)) == want);
    }
    CHECK(m.params.size() == golden["param_checksums_fnv1a64"].size());

    const DatasetBundle test = load_dataset(root / "test");
    const DatasetBundle calib = load_dataset(root / "calib");
    CHECK(test.size() == 512);
    CHECK(test.split == SplitTag::Test);
    CHECK(calib.split == SplitTag::Calibration);

    const auto& probes = golden["probe_logits"];
    REQUIRE(probes.size() == 16);
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const Tensor logits = cnn_forward(m, test.sample(i)).logits;
        REQUIRE(logits.size() == probes[i].size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            worst = std::max(worst, std::fabs(logits[k] - probes[i][k].get<double>()));
        }
    }
    MESSAGE("max |logit - golden| = " << worst);
    CHECK(worst <= 1e-5);
}

TEST_CASE("tensor checksum is FNV-1a over the byte image")
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const float v = 1.0f;
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    for (int i = 0; i < 4; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    CHECK(tensor_checksum(Tensor({1}, 1.0f)) == h);
}
