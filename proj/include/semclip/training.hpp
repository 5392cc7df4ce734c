#ifndef SEMCLIP_TRAINING_HPP
#define SEMCLIP_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "semclip/jscc.hpp"
#include "semclip/nn.hpp"
#include "semclip/tapl.hpp"
#include "semclip/tokens.hpp"
#include "semclip/util.hpp"

namespace semclip::train {

struct TrainConfig {
    double snr_lo_db = -10.0;
    double snr_hi_db = 10.0;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t steps = 2000;
    std::uint64_t seed = 0;
    double similarity_scale = 100.0;  // scale 1 reproduces the losses literally

    void validate() const;
};

/// Row-major similarity matrix wrapper for the contrastive losses.
struct SimMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

/// Mean softmax cross-entropy over rows at the labeled columns.
double contrastive_ce(const SimMatrix& sim, const std::vector<int>& labels);

/// Column-direction counterpart: for each row r, softmax over column
/// labels[r] with target entry r. Equals contrastive_ce on the transposed
/// matrix when labels form the identity.
double contrastive_ce_columns(const SimMatrix& sim, const std::vector<int>& labels);

SimMatrix cosine_matrix(const tokens::TokenBatch& a, const tokens::TokenBatch& b, double scale);

/// Symmetric contrastive token-reconstruction loss over cos(s, s_hat^T)
/// and its transpose with labels [0..B-1].
double jscc_loss(const tokens::TokenBatch& sent, const tokens::TokenBatch& decoded, double scale);
/// Loss plus dL/d(decoded rows); the sent batch is a constant.
double jscc_loss_backward(const tokens::TokenBatch& sent, const tokens::TokenBatch& decoded,
                          double scale, std::vector<std::vector<double>>& grad_decoded);

struct TaplLossTerms {
    double image_to_text = 0.0;
    double text_to_image = 0.0;
    double total() const { return 0.5 * (image_to_text + text_to_image); }
};

/// Symmetric image/text contrastive loss on per-sample prompt features
/// with ground-truth class labels.
TaplLossTerms tapl_loss(const tokens::TokenBatch& decoded, const tapl::TextFeatureSet& text,
                        const std::vector<int>& labels, double scale);
/// Loss plus dL/dt_{b,k}; decoded tokens are constants in stage 2.
TaplLossTerms tapl_loss_backward(const tokens::TokenBatch& decoded,
                                 const tapl::TextFeatureSet& text, const std::vector<int>& labels,
                                 double scale, std::vector<double>& grad_text);

double sample_snr(const TrainConfig& cfg, Rng& stream);

struct LossTracePoint {
    std::size_t step;
    double loss;
    double snr_db;
};
using LossTrace = std::vector<LossTracePoint>;

void write_loss_trace(const LossTrace& trace, const std::string& path);

/// Stage 1: train the JSCC codec alone with the symmetric reconstruction
/// loss; SNR resampled per step; aborts on non-finite loss.
LossTrace train_stage1(const tokens::TokenBatch& data, const jscc::JsccCodec& codec,
                       nn::ParameterStore& params, const TrainConfig& cfg);

/// Stage 2: JSCC frozen; trains meta-net and context embeddings against
/// the prompt-alignment loss.
LossTrace train_stage2(const tokens::TokenBatch& data, const jscc::JsccCodec& codec,
                       const nn::ParameterStore& jscc_params, const tapl::TaplConfig& tapl_cfg,
                       nn::ParameterStore& tapl_params, const tapl::ClassSet& classes,
                       const tapl::ToyTextEncoder& text_encoder, const TrainConfig& cfg);

/// Central finite-difference check (step 1e-5) of a registered
/// differentiable component; returns the max relative error.
double grad_check(const std::string& tag, std::size_t dims, std::uint64_t seed);
std::vector<std::string> grad_check_tags();

}  // namespace semclip::train

#endif
