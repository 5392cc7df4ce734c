#include "semclip/tapl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "semclip/util.hpp"

namespace semclip::tapl {

std::size_t TaplConfig::meta_hidden() const { return std::max<std::size_t>(8, token_dim / 16); }

std::uint64_t TaplConfig::hash() const {
    std::ostringstream os;
    os << "tapl;n=" << token_dim << ";d=" << embed_dim << ";m=" << context_len
       << ";act=" << activation << ";ctx_sigma=" << context_init_sigma;
    return fnv1a(os.str());
}

void ClassSet::validate(std::size_t embed_dim) const {
    if (classes.size() < 2) throw std::invalid_argument("ClassSet: need G >= 2 classes");
    for (const auto& c : classes) {
        if (c.vectors.empty())
            throw std::invalid_argument("ClassSet: class '" + c.name + "' has empty embedding");
        for (const auto& v : c.vectors)
            if (v.size() != embed_dim)
                throw std::invalid_argument("ClassSet: embedding dim mismatch for '" + c.name + "'");
    }
}

ToyTextEncoder::ToyTextEncoder(std::size_t feature_dim, std::size_t embed_dim, std::uint64_t seed)
    : a_({feature_dim, embed_dim}), b_(feature_dim) {
    Rng rng = Rng::derived(seed, 0x7e47ULL);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (auto& v : a_.data) v = round_f32(sigma * rng.gaussian());
    for (auto& v : b_) v = round_f32(0.02 * rng.gaussian());
}

ToyTextEncoder::ToyTextEncoder(nn::Tensor a, std::vector<double> b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.shape.size() != 2 || b_.size() != a_.rows())
        throw std::invalid_argument("ToyTextEncoder: bad projection shapes");
}

std::vector<double> ToyTextEncoder::encode(const std::vector<std::vector<double>>& sequence) const {
    if (sequence.empty()) throw std::invalid_argument("toy_text_encoder: empty sequence");
    const std::size_t d = a_.cols();
    std::vector<double> mean(d, 0.0);
    for (const auto& v : sequence) {
        if (v.size() != d) throw std::invalid_argument("toy_text_encoder: embedding dim mismatch");
        for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(sequence.size());
    for (auto& m : mean) m *= inv;
    std::vector<double> out(a_.rows());
    for (std::size_t r = 0; r < a_.rows(); ++r) {
        const double* ar = a_.data.data() + r * d;
        double acc = b_[r];
        for (std::size_t c = 0; c < d; ++c) acc += ar[c] * mean[c];
        out[r] = acc;
    }
    return out;
}

nn::ParameterStore init_tapl_params(const TaplConfig& cfg, std::uint64_t seed) {
    nn::ParameterStore store;
    store.config_hash = cfg.hash();
    store.stage_tag = "tapl_init";
    store.seed = seed;
    Rng rng = Rng::derived(seed, 0x7a91ULL);

    nn::Tensor& ctx = store.add("ctx.e", {cfg.context_len, cfg.embed_dim});
    for (auto& v : ctx.data) v = round_f32(cfg.context_init_sigma * rng.gaussian());

    const std::size_t h = cfg.meta_hidden();
    nn::Tensor& w0 = store.add("meta.dense0.W", {h, cfg.token_dim});
    const double s0 = 1.0 / std::sqrt(static_cast<double>(cfg.token_dim));
    for (auto& v : w0.data) v = round_f32(s0 * rng.gaussian());
    store.add("meta.dense0.b", {h});
    nn::Tensor& w1 = store.add("meta.dense1.W", {cfg.embed_dim, h});
    const double s1 = 0.1 / std::sqrt(static_cast<double>(h));  // small so pi starts near 0
    for (auto& v : w1.data) v = round_f32(s1 * rng.gaussian());
    store.add("meta.dense1.b", {cfg.embed_dim});
    return store;
}

PromptContext context_from_store(const nn::ParameterStore& store) {
    return PromptContext{store.at("ctx.e")};
}

PromptContext context_from_words(const std::vector<std::string>& words, std::size_t embed_dim) {
    if (words.empty()) throw std::invalid_argument("context_from_words: empty word list");
    PromptContext ctx{nn::Tensor({words.size(), embed_dim})};
    for (std::size_t m = 0; m < words.size(); ++m) {
        Rng rng = Rng::derived(fnv1a(words[m]), 0x30bdULL);
        for (std::size_t d = 0; d < embed_dim; ++d)
            ctx.embeddings.at(m, d) = round_f32(0.02 * rng.gaussian());
    }
    return ctx;
}

std::vector<double> meta_net_forward(const nn::ParameterStore& params,
                                     const std::vector<double>& token, MetaTrace* trace) {
    const nn::Tensor& w0 = params.at("meta.dense0.W");
    if (token.size() != w0.cols())
        throw std::invalid_argument("meta_net_forward: token dimension mismatch");
    std::vector<double> u = nn::dense_forward(w0, params.at("meta.dense0.b"), token);
    std::vector<double> h = nn::act_forward(nn::Activation::ReLU, u);
    std::vector<double> pi =
        nn::dense_forward(params.at("meta.dense1.W"), params.at("meta.dense1.b"), h);
    if (trace) {
        trace->input = token;
        trace->u = std::move(u);
        trace->h = std::move(h);
    }
    return pi;
}

void meta_net_backward(const nn::ParameterStore& params, const MetaTrace& trace,
                       const std::vector<double>& grad_pi, nn::GradStore& grads) {
    std::vector<double> gh =
        nn::dense_backward(params.at("meta.dense1.W"), trace.h, grad_pi,
                           nn::grad_at(grads, "meta.dense1.W"), nn::grad_at(grads, "meta.dense1.b"));
    std::vector<double> gu = nn::act_backward(nn::Activation::ReLU, trace.u, gh);
    nn::dense_backward(params.at("meta.dense0.W"), trace.input, gu,
                       nn::grad_at(grads, "meta.dense0.W"), nn::grad_at(grads, "meta.dense0.b"));
}

TextFeatureSet build_text_features(const std::vector<std::vector<double>>& conditional,
                                   const PromptContext& ctx, const ClassSet& classes,
                                   const TextEncoder& encoder) {
    const std::size_t d = encoder.embed_dim();
    const std::size_t m = ctx.length();
    if (ctx.dim() != d) throw std::invalid_argument("build_text_features: context dim mismatch");
    classes.validate(d);
    if (conditional.empty()) throw std::invalid_argument("build_text_features: empty batch");
    for (const auto& pi : conditional)
        if (pi.size() != d)
            throw std::invalid_argument("build_text_features: conditional vector dim mismatch");

    TextFeatureSet out;
    out.batch = conditional.size();
    out.classes = classes.size();
    out.dim = encoder.feature_dim();
    out.data.resize(out.batch * out.classes * out.dim);

    std::vector<std::vector<double>> sequence;
    for (std::size_t b = 0; b < out.batch; ++b) {
        const auto& pi = conditional[b];
        for (std::size_t k = 0; k < out.classes; ++k) {
            sequence.clear();
            for (std::size_t i = 0; i < m; ++i) {
                std::vector<double> v(d);
                for (std::size_t c = 0; c < d; ++c) v[c] = pi[c] + ctx.embeddings.at(i, c);
                sequence.push_back(std::move(v));
            }
            for (const auto& cv : classes.classes[k].vectors) sequence.push_back(cv);
            const std::vector<double> t = encoder.encode(sequence);
            std::copy(t.begin(), t.end(), out.row(b, k));
        }
    }
    return out;
}

TextFeatureSet build_text_features(const PromptContext& ctx, const ClassSet& classes,
                                   const TextEncoder& encoder) {
    const std::vector<std::vector<double>> zero{std::vector<double>(encoder.embed_dim(), 0.0)};
    return build_text_features(zero, ctx, classes, encoder);
}

std::vector<double> pool_conditional(const std::vector<std::vector<double>>& conditional) {
    if (conditional.empty()) throw std::invalid_argument("pool_conditional: empty batch");
    std::vector<double> mean(conditional.front().size(), 0.0);
    for (const auto& pi : conditional)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += pi[i];
    for (auto& v : mean) v /= static_cast<double>(conditional.size());
    return mean;
}

ProbabilityMatrix task_probabilities(const tokens::TokenBatch& decoded, const TextFeatureSet& text,
                                     double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("task_probabilities: temperature must be > 0");
    if (decoded.size() == 0) throw std::invalid_argument("task_probabilities: empty batch");
    if (decoded.dim() != text.dim)
        throw std::invalid_argument("task_probabilities: feature dim mismatch");
    if (text.batch != 1 && text.batch != decoded.size())
        throw std::invalid_argument("task_probabilities: text feature batch mismatch");

    ProbabilityMatrix probs;
    probs.batch = decoded.size();
    probs.classes = text.classes;
    probs.data.resize(probs.batch * probs.classes);
    std::vector<double> logits(text.classes);
    for (std::size_t b = 0; b < probs.batch; ++b) {
        const auto& s = decoded.rows[b].values;
        const double ns = norm2(s);
        if (ns == 0.0) throw std::invalid_argument("task_probabilities: zero-norm image feature");
        const std::size_t tb = text.per_sample() ? b : 0;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < text.classes; ++k) {
            const double* t = text.row(tb, k);
            double dotv = 0.0, nt = 0.0;
            for (std::size_t i = 0; i < text.dim; ++i) {
                dotv += s[i] * t[i];
                nt += t[i] * t[i];
            }
            if (nt == 0.0) throw std::invalid_argument("task_probabilities: zero-norm text feature");
            logits[k] = dotv / (ns * std::sqrt(nt)) / temperature;
            mx = std::max(mx, logits[k]);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < text.classes; ++k) z += std::exp(logits[k] - mx);
        for (std::size_t k = 0; k < text.classes; ++k)
            probs.data[b * probs.classes + k] = std::exp(logits[k] - mx) / z;
    }
    return probs;
}

std::vector<int> classify(const ProbabilityMatrix& probs) {
    if (probs.batch == 0) throw std::invalid_argument("classify: empty batch");
    std::vector<int> pred(probs.batch);
    for (std::size_t b = 0; b < probs.batch; ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < probs.classes; ++k)
            if (probs.at(b, k) > probs.at(b, best)) best = k;
        pred[b] = static_cast<int>(best);
    }
    return pred;
}

std::vector<std::size_t> retrieve(const std::vector<double>& query_text_feature,
                                  const tokens::TokenBatch& decoded) {
    if (decoded.size() == 0) throw std::invalid_argument("retrieve: empty batch");
    std::vector<double> score(decoded.size());
    for (std::size_t b = 0; b < decoded.size(); ++b)
        score[b] = cosine(query_text_feature, decoded.rows[b].values);
    std::vector<std::size_t> order(decoded.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return order;
}

std::vector<std::string> load_classnames(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open classname file: " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

}  // namespace semclip::tapl
