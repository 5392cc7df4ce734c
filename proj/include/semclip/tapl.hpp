#ifndef SEMCLIP_TAPL_HPP
#define SEMCLIP_TAPL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "semclip/nn.hpp"
#include "semclip/tokens.hpp"

namespace semclip::tapl {

struct TaplConfig {
    std::size_t token_dim = 64;    // N
    std::size_t embed_dim = 64;    // D
    std::size_t context_len = 4;   // M
    std::string activation = "relu";
    double context_init_sigma = 0.02;

    std::size_t meta_hidden() const;  // max(8, N / 16)
    std::uint64_t hash() const;
};

/// M learnable context embedding vectors; lives in the TAPL store as
/// "ctx.e" (M x D).
struct PromptContext {
    nn::Tensor embeddings;  // M x D

    std::size_t length() const { return embeddings.rows(); }
    std::size_t dim() const { return embeddings.cols(); }
};

/// Embedding sequence (>= 1 vectors of dim D) for one classname.
struct ClassnameEmbedding {
    std::string name;
    std::vector<std::vector<double>> vectors;
};

struct ClassSet {
    std::vector<ClassnameEmbedding> classes;

    std::size_t size() const { return classes.size(); }
    void validate(std::size_t embed_dim) const;
};

/// Text features: per-sample (B x G x N) or shared across the batch
/// (batch == 1).
struct TextFeatureSet {
    std::size_t batch = 0;
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> data;  // [b][k][n] row-major

    const double* row(std::size_t b, std::size_t k) const {
        return data.data() + (b * classes + k) * dim;
    }
    double* row(std::size_t b, std::size_t k) { return data.data() + (b * classes + k) * dim; }
    bool per_sample() const { return batch > 1; }
};

struct ProbabilityMatrix {
    std::size_t batch = 0;
    std::size_t classes = 0;
    std::vector<double> data;  // B x G, rows sum to 1

    double at(std::size_t b, std::size_t k) const { return data[b * classes + k]; }
};

/// Frozen text encoder contract: embedding sequences of dim D in,
/// dim-N features out.
class TextEncoder {
  public:
    virtual ~TextEncoder() = default;
    virtual std::size_t embed_dim() const = 0;
    virtual std::size_t feature_dim() const = 0;
    virtual std::vector<double> encode(const std::vector<std::vector<double>>& sequence) const = 0;
};

/// T(seq) = A * mean(seq) + b with a seeded random affine map. Frozen but
/// differentiable in its inputs: d out / d seq_i = A / len(seq).
class ToyTextEncoder : public TextEncoder {
  public:
    ToyTextEncoder(std::size_t feature_dim, std::size_t embed_dim, std::uint64_t seed);
    ToyTextEncoder(nn::Tensor a, std::vector<double> b);

    std::size_t embed_dim() const override { return a_.cols(); }
    std::size_t feature_dim() const override { return a_.rows(); }
    std::vector<double> encode(const std::vector<std::vector<double>>& sequence) const override;

    const nn::Tensor& projection() const { return a_; }
    const std::vector<double>& bias() const { return b_; }

  private:
    nn::Tensor a_;
    std::vector<double> b_;
};

nn::ParameterStore init_tapl_params(const TaplConfig& cfg, std::uint64_t seed);
PromptContext context_from_store(const nn::ParameterStore& store);

/// Deterministic word embeddings for a context override string ("a photo
/// of a" -> 4 vectors); each word hashes to its own seeded Gaussian draw.
PromptContext context_from_words(const std::vector<std::string>& words, std::size_t embed_dim);

struct MetaTrace {
    std::vector<double> input;
    std::vector<double> u;  // hidden pre-activation
    std::vector<double> h;  // hidden post-activation
};

/// pi = W2 * act(W1 * s_hat + b1) + b2.
std::vector<double> meta_net_forward(const nn::ParameterStore& params,
                                     const std::vector<double>& token, MetaTrace* trace = nullptr);
/// Accumulates meta parameter grads for one sample; input grad is not
/// needed (the decoded token is a constant in stage 2).
void meta_net_backward(const nn::ParameterStore& params, const MetaTrace& trace,
                       const std::vector<double>& grad_pi, nn::GradStore& grads);

/// Eq-style prompt feature: encode [(pi+e_1),...,(pi+e_M), c_k...] per
/// class. With conditional.size() == B the result is per-sample
/// (B x G x N); a single row gives the shared/unconditional set.
TextFeatureSet build_text_features(const std::vector<std::vector<double>>& conditional,
                                   const PromptContext& ctx, const ClassSet& classes,
                                   const TextEncoder& encoder);
/// Unconditional (pi = 0) features, shared across the batch.
TextFeatureSet build_text_features(const PromptContext& ctx, const ClassSet& classes,
                                   const TextEncoder& encoder);
/// Pooled approximation: one pi averaged over the batch.
std::vector<double> pool_conditional(const std::vector<std::vector<double>>& conditional);

/// p[b,k] = softmax_k( cos(s_hat_b, t_{b,k}) / temperature ).
ProbabilityMatrix task_probabilities(const tokens::TokenBatch& decoded, const TextFeatureSet& text,
                                     double temperature = 1.0);

std::vector<int> classify(const ProbabilityMatrix& probs);

/// Image indices by descending cos(query, s_hat_b); ties keep lower index.
std::vector<std::size_t> retrieve(const std::vector<double>& query_text_feature,
                                  const tokens::TokenBatch& decoded);

/// One classname per line; blank lines skipped.
std::vector<std::string> load_classnames(const std::string& path);

}  // namespace semclip::tapl

#endif
