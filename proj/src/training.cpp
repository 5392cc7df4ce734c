#include "semclip/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace semclip::train {

void TrainConfig::validate() const {
    if (snr_lo_db > snr_hi_db) throw std::invalid_argument("TrainConfig: snr range out of order");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch size must be >= 2");
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (!(similarity_scale > 0.0))
        throw std::invalid_argument("TrainConfig: similarity scale must be > 0");
}

namespace {

void check_labels(const std::vector<int>& labels, std::size_t rows, std::size_t cols) {
    if (labels.size() != rows) throw std::invalid_argument("contrastive_ce: label count mismatch");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= cols)
            throw std::invalid_argument("contrastive_ce: label out of column range");
}

double logsumexp(const double* v, std::size_t n, std::size_t stride = 1) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(v[i * stride] - mx);
    return mx + std::log(z);
}

tokens::TokenBatch take_rows(const tokens::TokenBatch& data, const std::vector<std::size_t>& idx) {
    tokens::TokenBatch out;
    out.rows.reserve(idx.size());
    if (data.has_labels()) out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        out.rows.push_back(data.rows[i]);
        if (data.has_labels()) out.labels.push_back(data.labels[i]);
    }
    return out;
}

std::vector<std::vector<double>> draw_noise_batch(std::size_t items, std::size_t uses,
                                                  double sigma2, Rng& stream) {
    std::vector<std::vector<double>> noise(items);
    for (auto& n : noise)
        n = channel::unpack_complex(channel::make_noise_frame(uses, sigma2, stream));
    return noise;
}

}  // namespace

double contrastive_ce(const SimMatrix& sim, const std::vector<int>& labels) {
    check_labels(labels, sim.rows, sim.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < sim.rows; ++r) {
        const double* row = sim.data.data() + r * sim.cols;
        loss += logsumexp(row, sim.cols) - row[labels[r]];
    }
    return loss / static_cast<double>(sim.rows);
}

double contrastive_ce_columns(const SimMatrix& sim, const std::vector<int>& labels) {
    check_labels(labels, sim.rows, sim.cols);
    double loss = 0.0;
    for (std::size_t r = 0; r < sim.rows; ++r) {
        const std::size_t k = static_cast<std::size_t>(labels[r]);
        loss += logsumexp(sim.data.data() + k, sim.rows, sim.cols) - sim.at(r, k);
    }
    return loss / static_cast<double>(sim.rows);
}

SimMatrix cosine_matrix(const tokens::TokenBatch& a, const tokens::TokenBatch& b, double scale) {
    if (a.dim() != b.dim()) throw std::invalid_argument("cosine_matrix: dim mismatch");
    SimMatrix m;
    m.rows = a.size();
    m.cols = b.size();
    m.data.resize(m.rows * m.cols);
    std::vector<double> nb(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) {
        nb[j] = norm2(b.rows[j].values);
        if (nb[j] == 0.0) throw std::invalid_argument("cosine_matrix: zero-norm row");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double na = norm2(a.rows[i].values);
        if (na == 0.0) throw std::invalid_argument("cosine_matrix: zero-norm row");
        for (std::size_t j = 0; j < b.size(); ++j)
            m.at(i, j) = scale * dot(a.rows[i].values, b.rows[j].values) / (na * nb[j]);
    }
    return m;
}

double jscc_loss(const tokens::TokenBatch& sent, const tokens::TokenBatch& decoded, double scale) {
    if (sent.size() != decoded.size() || sent.size() < 2)
        throw std::invalid_argument("jscc_loss: need matching batches with B >= 2");
    const SimMatrix sim = cosine_matrix(sent, decoded, scale);
    std::vector<int> labels(sent.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i);
    return 0.5 * (contrastive_ce(sim, labels) + contrastive_ce_columns(sim, labels));
}

double jscc_loss_backward(const tokens::TokenBatch& sent, const tokens::TokenBatch& decoded,
                          double scale, std::vector<std::vector<double>>& grad_decoded) {
    const std::size_t batch = sent.size();
    if (batch != decoded.size() || batch < 2)
        throw std::invalid_argument("jscc_loss: need matching batches with B >= 2");
    const std::size_t dim = sent.dim();
    const SimMatrix sim = cosine_matrix(sent, decoded, scale);
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i);
    const double loss =
        0.5 * (contrastive_ce(sim, labels) + contrastive_ce_columns(sim, labels));

    // dL/dS: 0.5/B * (row softmax - I) + 0.5/B * (col softmax - I)
    std::vector<double> gs(batch * batch, 0.0);
    const double w = 0.5 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double lse = logsumexp(sim.data.data() + i * batch, batch);
        for (std::size_t j = 0; j < batch; ++j)
            gs[i * batch + j] += w * (std::exp(sim.at(i, j) - lse) - (i == j ? 1.0 : 0.0));
    }
    for (std::size_t j = 0; j < batch; ++j) {
        const double lse = logsumexp(sim.data.data() + j, batch, batch);
        for (std::size_t i = 0; i < batch; ++i)
            gs[i * batch + j] += w * (std::exp(sim.at(i, j) - lse) - (i == j ? 1.0 : 0.0));
    }

    grad_decoded.assign(batch, std::vector<double>(dim, 0.0));
    std::vector<double> ns(batch), nd(batch);
    for (std::size_t i = 0; i < batch; ++i) ns[i] = norm2(sent.rows[i].values);
    for (std::size_t j = 0; j < batch; ++j) nd[j] = norm2(decoded.rows[j].values);
    for (std::size_t j = 0; j < batch; ++j) {
        const auto& dj = decoded.rows[j].values;
        for (std::size_t i = 0; i < batch; ++i) {
            const double g = gs[i * batch + j] * scale;
            if (g == 0.0) continue;
            const auto& si = sent.rows[i].values;
            const double cos_ij = sim.at(i, j) / scale;
            const double a = g / (ns[i] * nd[j]);
            const double b = g * cos_ij / (nd[j] * nd[j]);
            for (std::size_t d = 0; d < dim; ++d)
                grad_decoded[j][d] += a * si[d] - b * dj[d];
        }
    }
    return loss;
}

namespace {

SimMatrix tapl_sim(const tokens::TokenBatch& decoded, const tapl::TextFeatureSet& text,
                   double scale) {
    if (decoded.size() == 0) throw std::invalid_argument("tapl_loss: empty batch");
    if (decoded.dim() != text.dim) throw std::invalid_argument("tapl_loss: feature dim mismatch");
    if (text.batch != 1 && text.batch != decoded.size())
        throw std::invalid_argument("tapl_loss: text feature batch mismatch");
    SimMatrix sim;
    sim.rows = decoded.size();
    sim.cols = text.classes;
    sim.data.resize(sim.rows * sim.cols);
    for (std::size_t b = 0; b < sim.rows; ++b) {
        const auto& s = decoded.rows[b].values;
        const double ns = norm2(s);
        if (ns == 0.0) throw std::invalid_argument("tapl_loss: zero-norm image feature");
        const std::size_t tb = text.per_sample() ? b : 0;
        for (std::size_t k = 0; k < sim.cols; ++k) {
            const double* t = text.row(tb, k);
            double dotv = 0.0, nt = 0.0;
            for (std::size_t i = 0; i < text.dim; ++i) {
                dotv += s[i] * t[i];
                nt += t[i] * t[i];
            }
            if (nt == 0.0) throw std::invalid_argument("tapl_loss: zero-norm text feature");
            sim.at(b, k) = scale * dotv / (ns * std::sqrt(nt));
        }
    }
    return sim;
}

}  // namespace

TaplLossTerms tapl_loss(const tokens::TokenBatch& decoded, const tapl::TextFeatureSet& text,
                        const std::vector<int>& labels, double scale) {
    const SimMatrix sim = tapl_sim(decoded, text, scale);
    TaplLossTerms terms;
    terms.image_to_text = contrastive_ce(sim, labels);
    terms.text_to_image = contrastive_ce_columns(sim, labels);
    return terms;
}

TaplLossTerms tapl_loss_backward(const tokens::TokenBatch& decoded,
                                 const tapl::TextFeatureSet& text, const std::vector<int>& labels,
                                 double scale, std::vector<double>& grad_text) {
    const SimMatrix sim = tapl_sim(decoded, text, scale);
    check_labels(labels, sim.rows, sim.cols);
    const std::size_t batch = sim.rows;
    const std::size_t classes = sim.cols;
    TaplLossTerms terms;
    terms.image_to_text = contrastive_ce(sim, labels);
    terms.text_to_image = contrastive_ce_columns(sim, labels);

    // dL/dS from both directions; the column direction normalizes over the
    // batch within each ground-truth class column.
    std::vector<double> gs(batch * classes, 0.0);
    const double w = 0.5 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const double lse = logsumexp(sim.data.data() + b * classes, classes);
        for (std::size_t k = 0; k < classes; ++k)
            gs[b * classes + k] +=
                w * (std::exp(sim.at(b, k) - lse) -
                     (static_cast<std::size_t>(labels[b]) == k ? 1.0 : 0.0));
    }
    std::vector<std::size_t> class_count(classes, 0);
    for (int l : labels) ++class_count[static_cast<std::size_t>(l)];
    for (std::size_t k = 0; k < classes; ++k) {
        if (class_count[k] == 0) continue;
        const double lse = logsumexp(sim.data.data() + k, batch, classes);
        const double nk = static_cast<double>(class_count[k]);
        for (std::size_t b = 0; b < batch; ++b) {
            const double sm = std::exp(sim.at(b, k) - lse);
            gs[b * classes + k] +=
                w * (nk * sm - (static_cast<std::size_t>(labels[b]) == k ? 1.0 : 0.0));
        }
    }

    grad_text.assign(text.data.size(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& s = decoded.rows[b].values;
        const double ns = norm2(s);
        const std::size_t tb = text.per_sample() ? b : 0;
        for (std::size_t k = 0; k < classes; ++k) {
            const double g = gs[b * classes + k] * scale;
            if (g == 0.0) continue;
            const double* t = text.row(tb, k);
            double nt = 0.0;
            for (std::size_t i = 0; i < text.dim; ++i) nt += t[i] * t[i];
            nt = std::sqrt(nt);
            const double cos_bk = sim.at(b, k) / scale;
            double* gt = grad_text.data() + (tb * classes + k) * text.dim;
            const double a = g / (ns * nt);
            const double c = g * cos_bk / (nt * nt);
            for (std::size_t i = 0; i < text.dim; ++i) gt[i] += a * s[i] - c * t[i];
        }
    }
    return terms;
}

double sample_snr(const TrainConfig& cfg, Rng& stream) {
    if (cfg.snr_lo_db > cfg.snr_hi_db)
        throw std::invalid_argument("sample_snr: snr range out of order");
    if (cfg.snr_lo_db == cfg.snr_hi_db) return cfg.snr_lo_db;
    return stream.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
}

void write_loss_trace(const LossTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write loss trace: " + path);
    out << "step,loss,snr_db\n";
    char buf[96];
    for (const auto& p : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", p.step, p.loss, p.snr_db);
        out << buf;
    }
}

LossTrace train_stage1(const tokens::TokenBatch& data, const jscc::JsccCodec& codec,
                       nn::ParameterStore& params, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) throw std::invalid_argument("train_stage1: need at least 2 tokens");
    const std::size_t batch_size = std::min(cfg.batch_size, data.size());
    Rng batch_stream = Rng::derived(cfg.seed, 0xba7cULL);
    Rng snr_stream = Rng::derived(cfg.seed, 0x54a2ULL);
    Rng noise_stream = Rng::derived(cfg.seed, 0x401eULL);
    nn::Adam opt(cfg.learning_rate);
    LossTrace trace;
    trace.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = batch_stream.sample_indices(data.size(), batch_size);
        const tokens::TokenBatch batch = take_rows(data, idx);
        const double snr_db = sample_snr(cfg, snr_stream);
        const double sigma2 = channel::snr_to_noise_variance(snr_db, codec.config().power);
        const auto noise =
            draw_noise_batch(batch.size(), codec.config().channel_uses, sigma2, noise_stream);

        std::vector<jscc::ItemTrace> traces;
        const tokens::TokenBatch decoded = codec.pipeline_forward(params, batch, snr_db, noise, &traces);
        std::vector<std::vector<double>> grad_decoded;
        const double loss = jscc_loss_backward(batch, decoded, cfg.similarity_scale, grad_decoded);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_stage1: non-finite loss at step " +
                                     std::to_string(step) + " (snr_db=" + std::to_string(snr_db) + ")");
        nn::GradStore grads = nn::zeros_like(params);
        codec.pipeline_backward(params, traces, grad_decoded, grads);
        opt.step(params, grads);
        trace.push_back({step, loss, snr_db});
    }
    params.stage_tag = "jscc_stage1";
    return trace;
}

LossTrace train_stage2(const tokens::TokenBatch& data, const jscc::JsccCodec& codec,
                       const nn::ParameterStore& jscc_params, const tapl::TaplConfig& tapl_cfg,
                       nn::ParameterStore& tapl_params, const tapl::ClassSet& classes,
                       const tapl::ToyTextEncoder& text_encoder, const TrainConfig& cfg) {
    cfg.validate();
    if (!data.has_labels()) throw std::invalid_argument("train_stage2: labeled data required");
    data.validate(classes.size());
    const std::size_t batch_size = std::min(cfg.batch_size, data.size());
    Rng batch_stream = Rng::derived(cfg.seed, 0xba7dULL);
    Rng snr_stream = Rng::derived(cfg.seed, 0x54a3ULL);
    Rng noise_stream = Rng::derived(cfg.seed, 0x401fULL);
    nn::Adam opt(cfg.learning_rate);

    const nn::Tensor& a = text_encoder.projection();
    const std::size_t embed_dim = tapl_cfg.embed_dim;
    const std::size_t ctx_len = tapl_cfg.context_len;

    LossTrace trace;
    trace.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = batch_stream.sample_indices(data.size(), batch_size);
        const tokens::TokenBatch batch = take_rows(data, idx);
        const double snr_db = sample_snr(cfg, snr_stream);
        const double sigma2 = channel::snr_to_noise_variance(snr_db, codec.config().power);
        const auto noise =
            draw_noise_batch(batch.size(), codec.config().channel_uses, sigma2, noise_stream);
        const tokens::TokenBatch decoded = codec.pipeline_forward(jscc_params, batch, snr_db, noise);

        std::vector<tapl::MetaTrace> meta_traces(decoded.size());
        std::vector<std::vector<double>> pis(decoded.size());
        for (std::size_t b = 0; b < decoded.size(); ++b)
            pis[b] = tapl::meta_net_forward(tapl_params, decoded.rows[b].values, &meta_traces[b]);

        const tapl::PromptContext ctx = tapl::context_from_store(tapl_params);
        const tapl::TextFeatureSet text =
            tapl::build_text_features(pis, ctx, classes, text_encoder);

        std::vector<double> grad_text;
        const TaplLossTerms terms =
            tapl_loss_backward(decoded, text, batch.labels, cfg.similarity_scale, grad_text);
        const double loss = terms.total();
        if (!std::isfinite(loss))
            throw std::runtime_error("train_stage2: non-finite loss at step " +
                                     std::to_string(step));

        nn::GradStore grads = nn::zeros_like(tapl_params);
        nn::Tensor& ge = nn::grad_at(grads, "ctx.e");
        std::vector<double> at_g(embed_dim);
        for (std::size_t b = 0; b < decoded.size(); ++b) {
            std::vector<double> gpi(embed_dim, 0.0);
            for (std::size_t k = 0; k < classes.size(); ++k) {
                const double* gt = grad_text.data() + (b * classes.size() + k) * text.dim;
                // backward through T(seq) = A mean(seq) + b
                std::fill(at_g.begin(), at_g.end(), 0.0);
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    const double g = gt[r];
                    if (g == 0.0) continue;
                    const double* ar = a.data.data() + r * embed_dim;
                    for (std::size_t c = 0; c < embed_dim; ++c) at_g[c] += g * ar[c];
                }
                const double seq_len =
                    static_cast<double>(ctx_len + classes.classes[k].vectors.size());
                const double wpi = static_cast<double>(ctx_len) / seq_len;
                const double we = 1.0 / seq_len;
                for (std::size_t c = 0; c < embed_dim; ++c) {
                    gpi[c] += wpi * at_g[c];
                    // every context slot enters the mean identically
                    for (std::size_t m = 0; m < ctx_len; ++m) ge.at(m, c) += we * at_g[c];
                }
            }
            tapl::meta_net_backward(tapl_params, meta_traces[b], gpi, grads);
        }
        opt.step(tapl_params, grads);
        trace.push_back({step, loss, snr_db});
    }
    tapl_params.stage_tag = "tapl_stage2";
    return trace;
}

// ---- finite-difference harness ----

namespace {

double fd_rel_error(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    return std::abs(analytic - fd) / denom;
}

constexpr double kFdStep = 1e-5;

/// Max relative error of analytic vs central-difference gradients of a
/// scalar function over a parameter vector accessed via closures.
template <typename Eval>
double fd_check_vector(std::vector<double>& theta, const std::vector<double>& analytic,
                       Eval&& eval) {
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + kFdStep;
        const double up = eval();
        theta[i] = keep - kFdStep;
        const double down = eval();
        theta[i] = keep;
        worst = std::max(worst, fd_rel_error(analytic[i], (up - down) / (2.0 * kFdStep)));
    }
    return worst;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.gaussian();
    return v;
}

double check_dense(std::size_t dims, std::uint64_t seed) {
    Rng rng = Rng::derived(seed, 0xd1ULL);
    nn::Tensor w({dims, dims});
    for (auto& v : w.data) v = rng.gaussian();
    nn::Tensor b({dims});
    for (auto& v : b.data) v = 0.1 * rng.gaussian();
    std::vector<double> x = random_vec(dims, rng);
    const std::vector<double> r = random_vec(dims, rng);

    auto eval = [&]() { return dot(nn::dense_forward(w, b, x), r); };
    nn::Tensor gw(w.shape), gb(b.shape);
    const std::vector<double> gx = nn::dense_backward(w, x, r, gw, gb);

    double worst = fd_check_vector(x, gx, eval);
    worst = std::max(worst, fd_check_vector(w.data, gw.data, eval));
    worst = std::max(worst, fd_check_vector(b.data, gb.data, eval));
    return worst;
}

double check_af(std::size_t dims, std::uint64_t seed) {
    Rng rng = Rng::derived(seed, 0xafULL);
    const std::size_t hidden = std::max<std::size_t>(4, dims / 2);
    nn::Tensor w1({hidden, dims + 1}), b1({hidden}), w2({dims, hidden}), b2({dims});
    for (auto& v : w1.data) v = rng.gaussian();
    for (auto& v : b1.data) v = 0.3 * rng.gaussian();
    for (auto& v : w2.data) v = rng.gaussian();
    for (auto& v : b2.data) v = 0.3 * rng.gaussian();
    std::vector<double> f = random_vec(dims, rng);
    std::vector<double> mu{0.25};
    const std::vector<double> r = random_vec(dims, rng);
    const auto act = nn::Activation::ReLU;

    auto eval = [&]() { return dot(nn::af_forward(w1, b1, w2, b2, act, f, mu[0]), r); };
    nn::AfTrace trace;
    nn::af_forward(w1, b1, w2, b2, act, f, mu[0], &trace);
    nn::Tensor gw1(w1.shape), gb1(b1.shape), gw2(w2.shape), gb2(b2.shape);
    double gmu = 0.0;
    const std::vector<double> gf = nn::af_backward(w1, w2, act, trace, r, gw1, gb1, gw2, gb2, &gmu);

    double worst = fd_check_vector(f, gf, eval);
    worst = std::max(worst, fd_check_vector(mu, {gmu}, eval));
    worst = std::max(worst, fd_check_vector(w1.data, gw1.data, eval));
    worst = std::max(worst, fd_check_vector(b1.data, gb1.data, eval));
    worst = std::max(worst, fd_check_vector(w2.data, gw2.data, eval));
    worst = std::max(worst, fd_check_vector(b2.data, gb2.data, eval));
    return worst;
}

double check_meta(std::size_t dims, std::uint64_t seed) {
    Rng rng = Rng::derived(seed, 0x3e7aULL);
    tapl::TaplConfig cfg;
    cfg.token_dim = dims;
    cfg.embed_dim = dims;
    nn::ParameterStore params = tapl::init_tapl_params(cfg, seed);
    const std::vector<double> token = random_vec(dims, rng);
    const std::vector<double> r = random_vec(dims, rng);

    auto eval = [&]() { return dot(tapl::meta_net_forward(params, token), r); };
    tapl::MetaTrace trace;
    tapl::meta_net_forward(params, token, &trace);
    nn::GradStore grads = nn::zeros_like(params);
    tapl::meta_net_backward(params, trace, r, grads);

    double worst = 0.0;
    for (const char* name : {"meta.dense0.W", "meta.dense0.b", "meta.dense1.W", "meta.dense1.b"})
        worst = std::max(worst,
                         fd_check_vector(params.at(name).data, nn::grad_at(grads, name).data, eval));
    return worst;
}

double check_text_path(std::size_t dims, std::uint64_t seed) {
    // Eq.-(3)-style path: loss = <r, t_{b,k}> summed over classes, grads
    // wrt pi and the context embeddings through the toy text encoder.
    Rng rng = Rng::derived(seed, 0x7e7aULL);
    const std::size_t ctx_len = 2;
    tapl::ToyTextEncoder encoder(dims, dims, seed);
    tapl::PromptContext ctx{nn::Tensor({ctx_len, dims})};
    for (auto& v : ctx.embeddings.data) v = 0.3 * rng.gaussian();
    tapl::ClassSet classes;
    classes.classes.push_back({"a", {random_vec(dims, rng)}});
    classes.classes.push_back({"b", {random_vec(dims, rng), random_vec(dims, rng)}});
    std::vector<double> pi = random_vec(dims, rng, 0.5);
    std::vector<std::vector<double>> rs;
    for (std::size_t k = 0; k < classes.size(); ++k) rs.push_back(random_vec(dims, rng));

    auto eval = [&]() {
        const auto text = tapl::build_text_features({pi}, ctx, classes, encoder);
        double v = 0.0;
        for (std::size_t k = 0; k < classes.size(); ++k)
            for (std::size_t i = 0; i < dims; ++i) v += rs[k][i] * text.row(0, k)[i];
        return v;
    };

    const nn::Tensor& a = encoder.projection();
    std::vector<double> gpi(dims, 0.0);
    nn::Tensor ge({ctx_len, dims});
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const double seq_len = static_cast<double>(ctx_len + classes.classes[k].vectors.size());
        std::vector<double> at_g(dims, 0.0);
        for (std::size_t r = 0; r < dims; ++r)
            for (std::size_t c = 0; c < dims; ++c) at_g[c] += rs[k][r] * a.at(r, c);
        for (std::size_t c = 0; c < dims; ++c) {
            gpi[c] += at_g[c] * static_cast<double>(ctx_len) / seq_len;
            for (std::size_t m = 0; m < ctx_len; ++m) ge.at(m, c) += at_g[c] / seq_len;
        }
    }

    double worst = fd_check_vector(pi, gpi, eval);
    worst = std::max(worst, fd_check_vector(ctx.embeddings.data, ge.data, eval));
    return worst;
}

double check_stage1(std::size_t dims, std::uint64_t seed) {
    Rng rng = Rng::derived(seed, 0x57a6e1ULL);
    jscc::JsccConfig cfg;
    cfg.input_dim = dims;
    cfg.channel_uses = std::max<std::size_t>(2, dims / 2);
    cfg.encoder_widths = {dims};
    cfg.decoder_widths = {dims};
    jscc::JsccCodec codec(cfg);
    nn::ParameterStore params = codec.init_params(seed);

    const std::size_t batch_size = 4;
    tokens::TokenBatch batch;
    for (std::size_t i = 0; i < batch_size; ++i) batch.rows.push_back({random_vec(dims, rng)});
    const double snr_db = 4.0;
    const double sigma2 = channel::snr_to_noise_variance(snr_db, cfg.power);
    Rng noise_rng = Rng::derived(seed, 0x90ULL);
    std::vector<std::vector<double>> noise(batch_size);
    for (auto& n : noise)
        n = channel::unpack_complex(channel::make_noise_frame(cfg.channel_uses, sigma2, noise_rng));

    const double scale = 5.0;
    auto eval = [&]() {
        const auto decoded = codec.pipeline_forward(params, batch, snr_db, noise);
        return jscc_loss(batch, decoded, scale);
    };

    std::vector<jscc::ItemTrace> traces;
    const auto decoded = codec.pipeline_forward(params, batch, snr_db, noise, &traces);
    std::vector<std::vector<double>> grad_decoded;
    jscc_loss_backward(batch, decoded, scale, grad_decoded);
    nn::GradStore grads = nn::zeros_like(params);
    codec.pipeline_backward(params, traces, grad_decoded, grads);

    double worst = 0.0;
    for (auto& [name, tensor] : params.tensors)
        worst = std::max(worst, fd_check_vector(tensor.data, nn::grad_at(grads, name).data, eval));
    return worst;
}

double check_stage2(std::size_t dims, std::uint64_t seed) {
    Rng rng = Rng::derived(seed, 0x57a6e2ULL);
    tapl::TaplConfig tcfg;
    tcfg.token_dim = dims;
    tcfg.embed_dim = dims;
    tcfg.context_len = 2;
    nn::ParameterStore params = tapl::init_tapl_params(tcfg, seed);
    // make the meta output non-trivial so the check exercises both layers
    for (auto& v : params.at("meta.dense1.W").data) v = rng.gaussian();
    for (auto& v : params.at("ctx.e").data) v = 0.3 * rng.gaussian();
    tapl::ToyTextEncoder encoder(dims, dims, seed);
    tapl::ClassSet classes;
    classes.classes.push_back({"a", {random_vec(dims, rng)}});
    classes.classes.push_back({"b", {random_vec(dims, rng)}});
    classes.classes.push_back({"c", {random_vec(dims, rng), random_vec(dims, rng)}});

    const std::size_t batch_size = 4;
    tokens::TokenBatch decoded;
    decoded.labels = {0, 2, 1, 2};
    for (std::size_t i = 0; i < batch_size; ++i) decoded.rows.push_back({random_vec(dims, rng)});
    const double scale = 5.0;

    auto eval = [&]() {
        std::vector<std::vector<double>> pis(batch_size);
        for (std::size_t b = 0; b < batch_size; ++b)
            pis[b] = tapl::meta_net_forward(params, decoded.rows[b].values);
        const auto text = tapl::build_text_features(pis, tapl::context_from_store(params), classes,
                                                    encoder);
        return tapl_loss(decoded, text, decoded.labels, scale).total();
    };

    // analytic grads via the stage-2 backward pieces
    std::vector<tapl::MetaTrace> meta_traces(batch_size);
    std::vector<std::vector<double>> pis(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b)
        pis[b] = tapl::meta_net_forward(params, decoded.rows[b].values, &meta_traces[b]);
    const auto text =
        tapl::build_text_features(pis, tapl::context_from_store(params), classes, encoder);
    std::vector<double> grad_text;
    tapl_loss_backward(decoded, text, decoded.labels, scale, grad_text);

    nn::GradStore grads = nn::zeros_like(params);
    nn::Tensor& ge = nn::grad_at(grads, "ctx.e");
    const nn::Tensor& a = encoder.projection();
    for (std::size_t b = 0; b < batch_size; ++b) {
        std::vector<double> gpi(dims, 0.0);
        for (std::size_t k = 0; k < classes.size(); ++k) {
            const double* gt = grad_text.data() + (b * classes.size() + k) * dims;
            std::vector<double> at_g(dims, 0.0);
            for (std::size_t r = 0; r < dims; ++r) {
                if (gt[r] == 0.0) continue;
                for (std::size_t c = 0; c < dims; ++c) at_g[c] += gt[r] * a.at(r, c);
            }
            const double seq_len =
                static_cast<double>(tcfg.context_len + classes.classes[k].vectors.size());
            for (std::size_t c = 0; c < dims; ++c) {
                gpi[c] += at_g[c] * static_cast<double>(tcfg.context_len) / seq_len;
                for (std::size_t m = 0; m < tcfg.context_len; ++m)
                    ge.at(m, c) += at_g[c] / seq_len;
            }
        }
        tapl::meta_net_backward(params, meta_traces[b], gpi, grads);
    }

    double worst = 0.0;
    for (auto& [name, tensor] : params.tensors)
        worst = std::max(worst, fd_check_vector(tensor.data, nn::grad_at(grads, name).data, eval));
    return worst;
}

}  // namespace

std::vector<std::string> grad_check_tags() {
    return {"dense", "af", "meta_net", "text_path", "stage1_loss", "stage2_loss"};
}

double grad_check(const std::string& tag, std::size_t dims, std::uint64_t seed) {
    if (dims < 2) throw std::invalid_argument("grad_check: dims must be >= 2");
    if (tag == "dense") return check_dense(dims, seed);
    if (tag == "af") return check_af(dims, seed);
    if (tag == "meta_net") return check_meta(dims, seed);
    if (tag == "text_path") return check_text_path(dims, seed);
    if (tag == "stage1_loss") return check_stage1(dims, seed);
    if (tag == "stage2_loss") return check_stage2(dims, seed);
    throw std::invalid_argument("grad_check: unknown tag " + tag);
}

}  // namespace semclip::train
