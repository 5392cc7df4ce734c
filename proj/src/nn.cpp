#include "semclip/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "semclip/util.hpp"

namespace semclip::nn {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'K', 'P'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    data.assign(n, 0.0);
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("ParameterStore: missing tensor " + name);
    return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("ParameterStore: missing tensor " + name);
    return it->second;
}

Tensor& ParameterStore::add(const std::string& name, std::vector<std::size_t> shape) {
    auto [it, inserted] = tensors.emplace(name, Tensor(std::move(shape)));
    if (!inserted) throw std::runtime_error("ParameterStore: duplicate tensor " + name);
    return it->second;
}

GradStore zeros_like(const ParameterStore& params) {
    GradStore g;
    for (const auto& [name, t] : params.tensors) g.emplace(name, Tensor(t.shape));
    return g;
}

Tensor& grad_at(GradStore& grads, const std::string& name) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::runtime_error("GradStore: missing tensor " + name);
    return it->second;
}

void save_checkpoint(const ParameterStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_le<std::uint16_t>(out, kVersion);
    write_le<std::uint64_t>(out, store.config_hash);
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(store.stage_tag.size()));
    out.write(store.stage_tag.data(), static_cast<std::streamsize>(store.stage_tag.size()));
    write_le<std::uint64_t>(out, store.seed);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.tensors.size()));
    for (const auto& [name, t] : store.tensors) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        for (double v : t.data) {
            const float f = static_cast<float>(v);
            std::uint32_t u;
            std::memcpy(&u, &f, 4);
            write_le<std::uint32_t>(out, u);
        }
    }
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

ParameterStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const auto version = read_le<std::uint16_t>(in);
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    ParameterStore store;
    store.config_hash = read_le<std::uint64_t>(in);
    const auto tag_len = read_le<std::uint16_t>(in);
    store.stage_tag.resize(tag_len);
    in.read(store.stage_tag.data(), tag_len);
    store.seed = read_le<std::uint64_t>(in);
    const auto count = read_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_le<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("checkpoint: truncated tensor name");
        const auto rank = read_le<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
        Tensor t(shape);
        for (auto& v : t.data) {
            const auto u = read_le<std::uint32_t>(in);
            float f;
            std::memcpy(&f, &u, 4);
            v = static_cast<double>(f);
        }
        store.tensors.emplace(std::move(name), std::move(t));
    }
    return store;
}

ParameterStore load_checkpoint(const std::string& path, std::uint64_t expected_config_hash) {
    ParameterStore store = load_checkpoint(path);
    if (store.config_hash != expected_config_hash)
        throw std::runtime_error("checkpoint: config hash mismatch (expected " +
                                 hex_u64(expected_config_hash) + ", found " +
                                 hex_u64(store.config_hash) + ")");
    return store;
}

std::uint64_t params_hash(const ParameterStore& store) {
    std::uint64_t h = fnv1a(&store.config_hash, 8);
    h = fnv1a(store.stage_tag, h);
    h = fnv1a(&store.seed, 8, h);
    for (const auto& [name, t] : store.tensors) {
        h = fnv1a(name, h);
        for (std::size_t d : t.shape) {
            const std::uint64_t dd = d;
            h = fnv1a(&dd, 8, h);
        }
        for (double v : t.data) {
            const float f = static_cast<float>(v);
            h = fnv1a(&f, 4, h);
        }
    }
    return h;
}

std::vector<double> dense_forward(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
    if (w.shape.size() != 2 || x.size() != w.cols() || b.size() != w.rows())
        throw std::invalid_argument("dense_forward: shape mismatch");
    std::vector<double> y(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* wr = w.data.data() + r * w.cols();
        double acc = b.data[r];
        for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
    return y;
}

std::vector<double> dense_backward(const Tensor& w, const std::vector<double>& x,
                                   const std::vector<double>& gy, Tensor& gw, Tensor& gb) {
    std::vector<double> gx(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double g = gy[r];
        gb.data[r] += g;
        const double* wr = w.data.data() + r * w.cols();
        double* gwr = gw.data.data() + r * w.cols();
        for (std::size_t c = 0; c < w.cols(); ++c) {
            gwr[c] += g * x[c];
            gx[c] += g * wr[c];
        }
    }
    return gx;
}

Activation activation_from_tag(const std::string& tag) {
    if (tag == "relu") return Activation::ReLU;
    if (tag == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation tag: " + tag);
}

std::vector<double> act_forward(Activation a, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = a == Activation::ReLU ? (x[i] > 0.0 ? x[i] : 0.0) : std::tanh(x[i]);
    return y;
}

std::vector<double> act_backward(Activation a, const std::vector<double>& x,
                                 const std::vector<double>& gy) {
    std::vector<double> gx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (a == Activation::ReLU) {
            gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
        } else {
            const double t = std::tanh(x[i]);
            gx[i] = gy[i] * (1.0 - t * t);
        }
    }
    return gx;
}

std::vector<double> af_forward(const Tensor& w1, const Tensor& b1, const Tensor& w2,
                               const Tensor& b2, Activation act, const std::vector<double>& feature,
                               double snr_scaled, AfTrace* trace) {
    if (w1.cols() != feature.size() + 1 || w2.rows() != feature.size())
        throw std::invalid_argument("af_forward: feature width mismatch");
    std::vector<double> input(feature);
    input.push_back(snr_scaled);
    const std::vector<double> u = dense_forward(w1, b1, input);
    const std::vector<double> h = act_forward(act, u);
    const std::vector<double> a = dense_forward(w2, b2, h);
    std::vector<double> out(feature.size());
    std::vector<double> mask(feature.size());
    for (std::size_t i = 0; i < feature.size(); ++i) {
        mask[i] = sigmoid(a[i]);
        out[i] = feature[i] * mask[i];
    }
    if (trace) {
        trace->input = std::move(input);
        trace->u = u;
        trace->h = h;
        trace->mask = std::move(mask);
    }
    return out;
}

std::vector<double> af_backward(const Tensor& w1, const Tensor& w2, Activation act,
                                const AfTrace& trace, const std::vector<double>& gout, Tensor& gw1,
                                Tensor& gb1, Tensor& gw2, Tensor& gb2, double* grad_snr) {
    const std::size_t d = gout.size();
    const std::vector<double>& f = trace.input;  // first d entries are the feature
    std::vector<double> ga(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double m = trace.mask[i];
        ga[i] = gout[i] * f[i] * m * (1.0 - m);  // d sigmoid
    }
    const std::vector<double> gh = dense_backward(w2, trace.h, ga, gw2, gb2);
    const std::vector<double> gu = act_backward(act, trace.u, gh);
    const std::vector<double> ginput = dense_backward(w1, trace.input, gu, gw1, gb1);
    std::vector<double> gf(d);
    for (std::size_t i = 0; i < d; ++i) gf[i] = gout[i] * trace.mask[i] + ginput[i];
    if (grad_snr) *grad_snr = ginput[d];
    return gf;
}

void Adam::step(ParameterStore& params, const GradStore& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        if (p.size() != g.size()) throw std::runtime_error("Adam: gradient shape mismatch");
        auto [mit, minserted] = m_.emplace(name, Tensor(p.shape));
        auto [vit, vinserted] = v_.emplace(name, Tensor(p.shape));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] = round_f32(p.data[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

}  // namespace semclip::nn
