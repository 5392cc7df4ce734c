#include "semclip/jscc.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "semclip/util.hpp"

namespace semclip::jscc {

std::vector<std::size_t> JsccConfig::encoder_dims() const {
    std::vector<std::size_t> dims{input_dim};
    if (encoder_widths.empty()) {
        dims.push_back(input_dim);
        dims.push_back(input_dim);
    } else {
        dims.insert(dims.end(), encoder_widths.begin(), encoder_widths.end());
    }
    dims.push_back(2 * channel_uses);
    return dims;
}

std::vector<std::size_t> JsccConfig::decoder_dims() const {
    std::vector<std::size_t> dims{2 * channel_uses};
    if (decoder_widths.empty()) {
        dims.push_back(input_dim);
        dims.push_back(input_dim);
    } else {
        dims.insert(dims.end(), decoder_widths.begin(), decoder_widths.end());
    }
    dims.push_back(input_dim);
    return dims;
}

std::size_t JsccConfig::af_hidden(std::size_t width) const {
    const std::size_t ratio = af_hidden_ratio == 0 ? 4 : af_hidden_ratio;
    return std::max<std::size_t>(16, width / ratio);
}

std::uint64_t JsccConfig::hash() const {
    std::ostringstream os;
    os << "jscc;n=" << input_dim << ";l=" << channel_uses << ";act=" << activation
       << ";af_ratio=" << af_hidden_ratio << ";snr_scale=" << snr_input_scale
       << ";use_af=" << (use_af ? 1 : 0) << ";power=" << power << ";enc=";
    for (std::size_t w : encoder_widths) os << w << ",";
    os << ";dec=";
    for (std::size_t w : decoder_widths) os << w << ",";
    return fnv1a(os.str());
}

JsccCodec::JsccCodec(JsccConfig cfg) : cfg_(std::move(cfg)), act_(nn::activation_from_tag(cfg_.activation)) {
    if (cfg_.input_dim == 0 || cfg_.channel_uses == 0)
        throw std::invalid_argument("JsccConfig: N and L must be positive");
}

namespace {

std::string dense_name(const std::string& prefix, std::size_t i, const char* part) {
    return prefix + ".dense" + std::to_string(i) + "." + part;
}

std::string af_name(const std::string& prefix, std::size_t i, const char* part) {
    return prefix + ".af" + std::to_string(i) + "." + part;
}

void init_dense(nn::ParameterStore& store, const std::string& wname, const std::string& bname,
                std::size_t rows, std::size_t cols, Rng& rng) {
    nn::Tensor& w = store.add(wname, {rows, cols});
    const double sigma = 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& v : w.data) v = round_f32(sigma * rng.gaussian());
    store.add(bname, {rows});
}

void init_stack(nn::ParameterStore& store, const std::string& prefix,
                const std::vector<std::size_t>& dims, const JsccConfig& cfg, Rng& rng) {
    const std::size_t ndense = dims.size() - 1;
    for (std::size_t i = 0; i < ndense; ++i) {
        init_dense(store, dense_name(prefix, i, "W"), dense_name(prefix, i, "b"), dims[i + 1],
                   dims[i], rng);
        const bool hidden = i + 1 < ndense;
        if (hidden && cfg.use_af) {
            const std::size_t width = dims[i + 1];
            const std::size_t h = cfg.af_hidden(width);
            init_dense(store, af_name(prefix, i, "W1"), af_name(prefix, i, "b1"), h, width + 1, rng);
            init_dense(store, af_name(prefix, i, "W2"), af_name(prefix, i, "b2"), width, h, rng);
        }
    }
}

}  // namespace

nn::ParameterStore JsccCodec::init_params(std::uint64_t seed) const {
    nn::ParameterStore store;
    store.config_hash = cfg_.hash();
    store.stage_tag = "jscc_init";
    store.seed = seed;
    Rng rng = Rng::derived(seed, 0x15ccULL);
    init_stack(store, "enc", cfg_.encoder_dims(), cfg_, rng);
    init_stack(store, "dec", cfg_.decoder_dims(), cfg_, rng);
    return store;
}

std::vector<double> JsccCodec::stack_forward(const nn::ParameterStore& params,
                                             const std::string& prefix,
                                             const std::vector<std::size_t>& dims,
                                             const std::vector<double>& input, double snr_db,
                                             StackTrace* trace) const {
    const std::size_t ndense = dims.size() - 1;
    const double snr_scaled = snr_db * cfg_.snr_input_scale;
    std::vector<double> x = input;
    for (std::size_t i = 0; i < ndense; ++i) {
        if (trace) trace->dense_in.push_back(x);
        std::vector<double> y =
            nn::dense_forward(params.at(dense_name(prefix, i, "W")),
                              params.at(dense_name(prefix, i, "b")), x);
        const bool hidden = i + 1 < ndense;
        if (!hidden) {
            x = std::move(y);
            break;
        }
        if (trace) trace->act_in.push_back(y);
        x = nn::act_forward(act_, y);
        if (cfg_.use_af) {
            nn::AfTrace af_trace;
            x = nn::af_forward(params.at(af_name(prefix, i, "W1")), params.at(af_name(prefix, i, "b1")),
                               params.at(af_name(prefix, i, "W2")), params.at(af_name(prefix, i, "b2")),
                               act_, x, snr_scaled, trace ? &af_trace : nullptr);
            if (trace) trace->af.push_back(std::move(af_trace));
        }
    }
    return x;
}

std::vector<double> JsccCodec::stack_backward(const nn::ParameterStore& params,
                                              const std::string& prefix,
                                              const std::vector<std::size_t>& dims,
                                              const StackTrace& trace,
                                              const std::vector<double>& grad_out,
                                              nn::GradStore& grads) const {
    const std::size_t ndense = dims.size() - 1;
    std::vector<double> g = grad_out;
    for (std::size_t ri = ndense; ri-- > 0;) {
        const bool hidden = ri + 1 < ndense;
        if (hidden) {
            if (cfg_.use_af) {
                g = nn::af_backward(params.at(af_name(prefix, ri, "W1")),
                                    params.at(af_name(prefix, ri, "W2")), act_, trace.af[ri], g,
                                    nn::grad_at(grads, af_name(prefix, ri, "W1")),
                                    nn::grad_at(grads, af_name(prefix, ri, "b1")),
                                    nn::grad_at(grads, af_name(prefix, ri, "W2")),
                                    nn::grad_at(grads, af_name(prefix, ri, "b2")));
            }
            g = nn::act_backward(act_, trace.act_in[ri], g);
        }
        g = nn::dense_backward(params.at(dense_name(prefix, ri, "W")), trace.dense_in[ri], g,
                               nn::grad_at(grads, dense_name(prefix, ri, "W")),
                               nn::grad_at(grads, dense_name(prefix, ri, "b")));
    }
    return g;
}

std::vector<double> JsccCodec::encode_prenorm(const nn::ParameterStore& params,
                                              const std::vector<double>& token, double snr_db,
                                              StackTrace* trace) const {
    if (token.size() != cfg_.input_dim)
        throw std::invalid_argument("jscc encode: token dimension mismatch");
    std::vector<double> out = stack_forward(params, "enc", cfg_.encoder_dims(), token, snr_db, trace);
    for (double v : out)
        if (!std::isfinite(v)) throw std::runtime_error("jscc encode: non-finite activation");
    return out;
}

channel::ChannelFrame JsccCodec::encode_item(const nn::ParameterStore& params,
                                             const std::vector<double>& token,
                                             double snr_db) const {
    return channel::power_normalize(channel::pack_complex(encode_prenorm(params, token, snr_db)),
                                    cfg_.power);
}

std::vector<channel::ChannelFrame> JsccCodec::encode(const nn::ParameterStore& params,
                                                     const tokens::TokenBatch& batch,
                                                     double snr_db) const {
    std::vector<channel::ChannelFrame> frames;
    frames.reserve(batch.size());
    for (const auto& row : batch.rows) frames.push_back(encode_item(params, row.values, snr_db));
    return frames;
}

std::vector<double> JsccCodec::decode_item(const nn::ParameterStore& params,
                                           const channel::ChannelFrame& frame, double snr_db,
                                           StackTrace* trace) const {
    if (frame.uses() != cfg_.channel_uses)
        throw std::invalid_argument("jscc decode: channel-use count mismatch");
    return stack_forward(params, "dec", cfg_.decoder_dims(), channel::unpack_complex(frame), snr_db,
                         trace);
}

tokens::TokenBatch JsccCodec::decode(const nn::ParameterStore& params,
                                     const std::vector<channel::ChannelFrame>& frames,
                                     double snr_db) const {
    tokens::TokenBatch out;
    out.rows.reserve(frames.size());
    for (const auto& f : frames) out.rows.push_back({decode_item(params, f, snr_db)});
    return out;
}

tokens::TokenBatch JsccCodec::pipeline_forward(const nn::ParameterStore& params,
                                               const tokens::TokenBatch& batch, double snr_db,
                                               const std::vector<std::vector<double>>& noise,
                                               std::vector<ItemTrace>* traces) const {
    if (noise.size() != batch.size())
        throw std::invalid_argument("pipeline_forward: noise batch size mismatch");
    tokens::TokenBatch decoded;
    decoded.rows.resize(batch.size());
    decoded.labels = batch.labels;
    if (traces) traces->assign(batch.size(), ItemTrace{});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ItemTrace local;
        ItemTrace* t = traces ? &(*traces)[i] : &local;
        t->prenorm = encode_prenorm(params, batch.rows[i].values, snr_db, &t->enc);
        const auto frame = channel::power_normalize(channel::pack_complex(t->prenorm), cfg_.power);
        t->sent = channel::unpack_complex(frame);
        if (noise[i].size() != t->sent.size())
            throw std::invalid_argument("pipeline_forward: noise vector length mismatch");
        t->received.resize(t->sent.size());
        for (std::size_t k = 0; k < t->sent.size(); ++k) t->received[k] = t->sent[k] + noise[i][k];
        decoded.rows[i].values =
            stack_forward(params, "dec", cfg_.decoder_dims(), t->received, snr_db, &t->dec);
    }
    return decoded;
}

void JsccCodec::pipeline_backward(const nn::ParameterStore& params,
                                  const std::vector<ItemTrace>& traces,
                                  const std::vector<std::vector<double>>& grad_decoded,
                                  nn::GradStore& grads) const {
    if (traces.size() != grad_decoded.size())
        throw std::invalid_argument("pipeline_backward: trace/grad size mismatch");
    const double lp = static_cast<double>(cfg_.channel_uses) * cfg_.power;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const ItemTrace& t = traces[i];
        // decoder (noise is a constant, so d received == d sent)
        std::vector<double> g =
            stack_backward(params, "dec", cfg_.decoder_dims(), t.dec, grad_decoded[i], grads);
        // power normalization: y = sqrt(L P) x / |x|
        const double nrm2v = dot(t.prenorm, t.prenorm);
        const double nrm = std::sqrt(nrm2v);
        const double scale = std::sqrt(lp) / nrm;
        const double proj = dot(t.prenorm, g) / nrm2v;
        std::vector<double> gpre(g.size());
        for (std::size_t k = 0; k < g.size(); ++k)
            gpre[k] = scale * (g[k] - proj * t.prenorm[k]);
        stack_backward(params, "enc", cfg_.encoder_dims(), t.enc, gpre, grads);
    }
}

}  // namespace semclip::jscc
