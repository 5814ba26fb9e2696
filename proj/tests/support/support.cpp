#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <unistd.h>

namespace testsupport {

using namespace eccsnn;

namespace {

struct Map {
    Shape shape;
    std::vector<double> v;
};

Map to_map(const Tensor& t)
{
    return {t.shape(), std::vector<double>(t.data().begin(), t.data().end())};
}

Map conv(const Map& in, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad)
{
    const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
    const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
    Map out{{O, OH, OW}, std::vector<double>(O * OH * OW, 0.0)};
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double s = b.empty() ? 0.0 : b[o];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t ky = 0; ky < KH; ++ky)
                        for (std::size_t kx = 0; kx < KW; ++kx) {
                            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                            s += static_cast<double>(w[((o * C + c) * KH + ky) * KW + kx]) *
                                 in.v[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
                        }
                out.v[(o * OH + oy) * OW + ox] = s;
            }
    return out;
}

Map dense(const Map& in, const Tensor& w, const Tensor& b)
{
    const std::size_t N = w.dim(0), M = w.dim(1);
    Map out{{N}, std::vector<double>(N, 0.0)};
    for (std::size_t i = 0; i < N; ++i) {
        double s = b.empty() ? 0.0 : b[i];
        for (std::size_t j = 0; j < M; ++j) s += static_cast<double>(w[i * M + j]) * in.v[j];
        out.v[i] = s;
    }
    return out;
}

Map pool(const Map& in, std::size_t k, std::size_t stride)
{
    const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
    const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
    Map out{{C, OH, OW}, std::vector<double>(C * OH * OW, 0.0)};
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double s = 0.0;
                for (std::size_t y = 0; y < k; ++y)
                    for (std::size_t x = 0; x < k; ++x) s += in.v[(c * H + oy * stride + y) * W + ox * stride + x];
                out.v[(c * OH + oy) * OW + ox] = s / static_cast<double>(k * k);
            }
    return out;
}

}  // namespace

std::filesystem::path fixture_dir()
{
    return ECCSNN_FIXTURE_DIR;
}

std::filesystem::path scratch_dir(const std::string& name)
{
    static const std::filesystem::path root = [] {
        auto p = std::filesystem::temp_directory_path() / ("eccsnn-tests-" + std::to_string(::getpid()));
        std::filesystem::create_directories(p);
        static struct Cleanup {
            std::filesystem::path dir;
            ~Cleanup()
            {
                std::error_code ec;
                std::filesystem::remove_all(dir, ec);
            }
        } cleanup{p};
        return p;
    }();
    auto dir = root / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Tensor random_tensor(const Shape& shape, std::mt19937& rng, float lo, float hi)
{
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

std::vector<double> naive_conv(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride,
                               std::size_t pad)
{
    return conv(to_map(in), w, b, stride, pad).v;
}

std::vector<double> naive_dense(const Tensor& in, const Tensor& w, const Tensor& b)
{
    return dense(to_map(in), w, b).v;
}

std::vector<double> naive_pool(const Tensor& in, std::size_t window, std::size_t stride)
{
    return pool(to_map(in), window, stride).v;
}

std::vector<double> naive_forward(const CnnModel& model, const Tensor& input)
{
    Map m = to_map(input);
    for (const auto& l : model.layers) {
        switch (l.kind) {
        case LayerKind::Input:
            break;
        case LayerKind::Conv2D:
            m = conv(m, model.param(l.weight), l.bias.empty() ? Tensor() : model.param(l.bias), l.stride, l.padding);
            break;
        case LayerKind::Dense:
            m = dense(m, model.param(l.weight), l.bias.empty() ? Tensor() : model.param(l.bias));
            break;
        case LayerKind::AvgPool:
            m = pool(m, l.window, l.stride);
            break;
        case LayerKind::BatchNorm: {
            const auto& g = model.param(l.gamma);
            const auto& be = model.param(l.beta);
            const auto& mu = model.param(l.mean);
            const auto& var = model.param(l.var);
            const std::size_t per = m.v.size() / g.size();
            for (std::size_t i = 0; i < m.v.size(); ++i) {
                const std::size_t c = i / per;
                m.v[i] = g[c] * (m.v[i] - mu[c]) / std::sqrt(static_cast<double>(var[c]) + l.epsilon) + be[c];
            }
            break;
        }
        case LayerKind::Relu:
            for (auto& x : m.v) x = std::max(0.0, x);
            break;
        case LayerKind::Flatten:
            m.shape = {m.v.size()};
            break;
        }
    }
    return m.v;
}

CnnModel random_cnn(std::mt19937& rng, const RandomCnnOptions& opt)
{
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    CnnModel m;
    m.name = "random";
    const std::size_t C = pick(1, 3), H = pick(4, 8), W = pick(4, 8);
    m.input_shape = {C, H, W};
    LayerSpec in;
    in.kind = LayerKind::Input;
    in.name = "input";
    m.layers.push_back(in);

    int uid = 0;
    auto add_bn = [&](std::size_t channels) {
        if (!opt.batchnorm) return;
        LayerSpec bn;
        bn.kind = LayerKind::BatchNorm;
        bn.name = "bn" + std::to_string(uid);
        bn.epsilon = opt.epsilon;
        bn.gamma = bn.name + ".gamma";
        bn.beta = bn.name + ".beta";
        bn.mean = bn.name + ".mean";
        bn.var = bn.name + ".var";
        m.params[bn.gamma] = random_tensor({channels}, rng, 0.5f, 1.5f);
        m.params[bn.beta] = random_tensor({channels}, rng, -0.2f, 0.2f);
        m.params[bn.mean] = random_tensor({channels}, rng, -0.3f, 0.3f);
        // Small variances make epsilon matter.
        m.params[bn.var] = random_tensor({channels}, rng, 0.0005f, 0.5f);
        m.layers.push_back(bn);
    };
    auto add_relu = [&] {
        LayerSpec r;
        r.kind = LayerKind::Relu;
        r.name = "relu" + std::to_string(uid);
        m.layers.push_back(r);
    };

    Shape shape = m.input_shape;
    const std::size_t convs = pick(1, 2);
    for (std::size_t k = 0; k < convs; ++k, ++uid) {
        LayerSpec c;
        c.kind = LayerKind::Conv2D;
        c.name = "conv" + std::to_string(uid);
        c.out_channels = pick(1, 4);
        c.kernel_h = pick(1, std::min<std::size_t>(3, shape[1]));
        c.kernel_w = pick(1, std::min<std::size_t>(3, shape[2]));
        c.stride = pick(1, 2);
        c.padding = pick(0, 1);
        c.weight = c.name + ".w";
        m.params[c.weight] = random_tensor({c.out_channels, shape[0], c.kernel_h, c.kernel_w}, rng);
        if (opt.bias) {
            c.bias = c.name + ".b";
            m.params[c.bias] = random_tensor({c.out_channels}, rng, -0.3f, 0.5f);
        }
        m.layers.push_back(c);
        shape = {c.out_channels, (shape[1] + 2 * c.padding - c.kernel_h) / c.stride + 1,
                 (shape[2] + 2 * c.padding - c.kernel_w) / c.stride + 1};
        add_bn(c.out_channels);
        add_relu();
        if (shape[1] >= 2 && shape[2] >= 2 && shape[1] % 2 == 0 && shape[2] % 2 == 0 && pick(0, 1)) {
            LayerSpec p;
            p.kind = LayerKind::AvgPool;
            p.name = "pool" + std::to_string(uid);
            p.window = 2;
            p.stride = 2;
            m.layers.push_back(p);
            shape = {shape[0], shape[1] / 2, shape[2] / 2};
        }
    }
    LayerSpec f;
    f.kind = LayerKind::Flatten;
    f.name = "flatten";
    m.layers.push_back(f);
    std::size_t width = shape[0] * shape[1] * shape[2];
    const std::size_t hidden = pick(0, 1);
    for (std::size_t k = 0; k <= hidden; ++k, ++uid) {
        const bool last = k == hidden;
        LayerSpec d;
        d.kind = LayerKind::Dense;
        d.name = "fc" + std::to_string(uid);
        d.units = last ? pick(2, 5) : pick(3, 8);
        d.weight = d.name + ".w";
        m.params[d.weight] = random_tensor({d.units, width}, rng);
        if (opt.bias) {
            d.bias = d.name + ".b";
            m.params[d.bias] = random_tensor({d.units}, rng, -0.3f, 0.5f);
        }
        m.layers.push_back(d);
        width = d.units;
        if (!last) {
            add_bn(d.units);
            add_relu();
        }
    }
    validate(m);
    return m;
}

std::vector<Synapse> enumerate_synapses(const SnnLayer& layer)
{
    std::vector<Synapse> out;
    switch (layer.kind) {
    case SnnLayerKind::Dense: {
        const std::size_t M = shape_size(layer.in_shape), N = layer.out_shape[0];
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < M; ++j) out.push_back({j, i, i * M + j});
        break;
    }
    case SnnLayerKind::Conv2D:
    case SnnLayerKind::AvgPool: {
        const bool is_pool = layer.kind == SnnLayerKind::AvgPool;
        const std::size_t C = layer.in_shape[0], H = layer.in_shape[1], W = layer.in_shape[2];
        const std::size_t O = layer.out_shape[0], OH = layer.out_shape[1], OW = layer.out_shape[2];
        const std::size_t KH = is_pool ? layer.window : layer.kernel_h;
        const std::size_t KW = is_pool ? layer.window : layer.kernel_w;
        const long pad = is_pool ? 0 : static_cast<long>(layer.padding);
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox)
                    for (std::size_t c = 0; c < C; ++c) {
                        if (is_pool && c != o) continue;
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const long iy = static_cast<long>(oy * layer.stride + ky) - pad;
                                const long ix = static_cast<long>(ox * layer.stride + kx) - pad;
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) {
                                    continue;
                                }
                                const std::size_t pre =
                                    (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
                                const std::size_t post = (o * OH + oy) * OW + ox;
                                out.push_back({pre, post, is_pool ? 0 : ((o * C + c) * KH + ky) * KW + kx});
                            }
                    }
        break;
    }
    }
    return out;
}

std::vector<std::uint32_t> naive_encode_counts(const std::vector<float>& x, double kappa0, int timesteps)
{
    const float peak = *std::max_element(x.begin(), x.end());
    std::vector<std::uint32_t> counts(x.size(), 0);
    if (peak == 0.0f) return counts;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = kappa0 * (static_cast<double>(x[i]) / peak);
        double v = 0.0;
        for (int t = 0; t < timesteps; ++t) {
            v += z;
            if (v >= kappa0) {
                v -= kappa0;
                ++counts[i];
            }
        }
    }
    return counts;
}

namespace {

template <typename Acc, typename Syn>
NaiveRun run_dense(const SnnModel& snn, const Tensor& input, int T)
{
    const std::size_t L = snn.layers.size();
    NaiveRun r;
    r.counts.resize(L + 1);
    r.potential.resize(L + 1);
    r.cumulative.resize(L + 1);
    r.spikes_per_step.resize(L + 1);

    // Dense post x pre weight matrices.
    std::vector<std::vector<std::vector<Acc>>> W(L);
    std::vector<std::vector<Acc>> bias(L), V(L), Cum(L);
    std::vector<Acc> thr(L);
    for (std::size_t n = 0; n < L; ++n) {
        const auto& layer = snn.layers[n];
        const auto& syn = std::get<Syn>(layer.synapses);
        const std::size_t M = shape_size(layer.in_shape), N = layer.neuron_count();
        W[n].assign(N, std::vector<Acc>(M, Acc{}));
        for (const auto& s : enumerate_synapses(layer)) W[n][s.post][s.pre] += static_cast<Acc>(syn.weights[s.weight]);
        bias[n].resize(N);
        for (std::size_t i = 0; i < N; ++i) bias[n][i] = static_cast<Acc>(syn.bias[i / (N / syn.bias.size())]);
        V[n].assign(N, Acc{});
        Cum[n].assign(N, Acc{});
        thr[n] = static_cast<Acc>(syn.threshold);
        r.counts[n + 1].assign(N, 0);
    }

    const std::size_t P = input.size();
    float peak = 0.0f;
    for (float x : input.data()) peak = std::max(peak, x);
    std::vector<double> enc_v(P, 0.0), enc_z(P, 0.0);
    if (peak > 0.0f) {
        for (std::size_t i = 0; i < P; ++i) enc_z[i] = snn.encoder.kappa0 * (static_cast<double>(input[i]) / peak);
    }
    r.counts[0].assign(P, 0);

    std::vector<std::uint8_t> prev;
    for (int t = 0; t < T; ++t) {
        std::uint32_t fired = 0;
        prev.assign(P, 0);
        for (std::size_t i = 0; i < P; ++i) {
            enc_v[i] += enc_z[i];
            prev[i] = enc_v[i] >= snn.encoder.kappa0;
            if (prev[i]) {
                enc_v[i] -= snn.encoder.kappa0;
                ++r.counts[0][i];
                ++fired;
            }
        }
        r.spikes_per_step[0].push_back(fired);
        for (std::size_t n = 0; n < L; ++n) {
            const std::size_t N = V[n].size();
            std::vector<std::uint8_t> next(N, 0);
            fired = 0;
            for (std::size_t i = 0; i < N; ++i) {
                Acc z = bias[n][i];
                for (std::size_t j = 0; j < prev.size(); ++j)
                    if (prev[j]) z += W[n][i][j];
                V[n][i] += z;
                Cum[n][i] += z;
                if (snn.layers[n].spiking && V[n][i] >= thr[n]) {
                    V[n][i] -= thr[n];
                    next[i] = 1;
                    ++r.counts[n + 1][i];
                    ++fired;
                }
            }
            r.spikes_per_step[n + 1].push_back(fired);
            prev = std::move(next);
        }
    }
    r.potential[0] = enc_v;
    r.cumulative[0].resize(P);
    for (std::size_t i = 0; i < P; ++i) r.cumulative[0][i] = enc_z[i] * T;
    for (std::size_t n = 0; n < L; ++n) {
        r.potential[n + 1].assign(V[n].begin(), V[n].end());
        r.cumulative[n + 1].assign(Cum[n].begin(), Cum[n].end());
    }
    return r;
}

}  // namespace

NaiveRun naive_simulate(const SnnModel& snn, const Tensor& input, int timesteps)
{
    if (snn.fixed_point()) return run_dense<std::int64_t, FixedSynapses>(snn, input, timesteps);
    return run_dense<double, FloatSynapses>(snn, input, timesteps);
}

SnnModel random_snn(std::mt19937& rng)
{
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SnnModel snn;
    snn.name = "random-snn";
    const std::size_t C = pick(1, 2), H = pick(2, 6), W = pick(2, 6);
    snn.input_shape = {C, H, W};
    snn.encoder.kappa0 = 1.0 + 99.0 * u(rng);
    snn.encoder.timesteps = 16;
    Shape shape = snn.input_shape;

    auto make_syn = [&](Shape wshape, std::size_t nbias) {
        FloatSynapses s;
        const float thr = static_cast<float>(0.5 + 2.0 * u(rng));
        s.threshold = thr;
        s.weights = random_tensor(wshape, rng, -0.4f * thr, 0.9f * thr);
        s.bias.resize(nbias);
        for (auto& b : s.bias) b = static_cast<float>((u(rng) - 0.3) * 0.2 * thr);
        return s;
    };

    if (pick(0, 1)) {
        SnnLayer c;
        c.kind = SnnLayerKind::Conv2D;
        c.name = "conv";
        c.in_shape = shape;
        c.kernel_h = pick(1, std::min<std::size_t>(3, H));
        c.kernel_w = pick(1, std::min<std::size_t>(3, W));
        c.stride = pick(1, 2);
        c.padding = pick(0, 1);
        const std::size_t O = pick(1, 3);
        c.out_shape = {O, (H + 2 * c.padding - c.kernel_h) / c.stride + 1, (W + 2 * c.padding - c.kernel_w) / c.stride + 1};
        c.synapses = make_syn({O, C, c.kernel_h, c.kernel_w}, O);
        shape = c.out_shape;
        snn.layers.push_back(c);
    }
    if (shape.size() == 3 && shape[1] >= 2 && shape[2] >= 2 && pick(0, 1)) {
        SnnLayer p;
        p.kind = SnnLayerKind::AvgPool;
        p.name = "pool";
        p.in_shape = shape;
        p.window = std::min<std::size_t>(2, std::min(shape[1], shape[2]));
        p.stride = 1;
        p.out_shape = {shape[0], shape[1] - p.window + 1, shape[2] - p.window + 1};
        auto s = make_syn({1}, shape[0]);
        s.weights[0] = static_cast<float>(s.threshold * (0.3 + 0.7 * u(rng)));
        p.synapses = s;
        shape = p.out_shape;
        snn.layers.push_back(p);
    }
    const std::size_t hidden = pick(0, 2);
    for (std::size_t k = 0; k <= hidden; ++k) {
        SnnLayer d;
        d.kind = SnnLayerKind::Dense;
        d.name = "fc" + std::to_string(k);
        d.in_shape = shape;
        const std::size_t N = pick(1, 6);
        d.out_shape = {N};
        d.synapses = make_syn({N, shape_size(shape)}, N);
        d.spiking = k != hidden;
        shape = d.out_shape;
        snn.layers.push_back(d);
    }
    validate(snn);
    return snn;
}

}  // namespace testsupport
