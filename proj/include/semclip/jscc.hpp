#ifndef SEMCLIP_JSCC_HPP
#define SEMCLIP_JSCC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "semclip/channel.hpp"
#include "semclip/nn.hpp"
#include "semclip/tokens.hpp"

namespace semclip::jscc {

struct AfModuleSpec {
    std::size_t feature_dim = 0;
    std::size_t hidden_dim = 0;
};

/// SNR-adaptive codec layout. Encoder: Dense(N->w) + act + AF per hidden
/// width, then Dense(->2L). Decoder mirrors it from 2L back to N.
struct JsccConfig {
    std::size_t input_dim = 64;                  // N
    std::size_t channel_uses = 32;               // L
    std::vector<std::size_t> encoder_widths{};   // hidden widths; empty -> {N, N}
    std::vector<std::size_t> decoder_widths{};   // hidden widths; empty -> {N, N}
    std::string activation = "relu";
    std::size_t af_hidden_ratio = 4;             // hidden = max(16, width / ratio)
    double snr_input_scale = 0.05;               // dB -> AF conditioning input
    bool use_af = true;
    double power = 1.0;

    std::vector<std::size_t> encoder_dims() const;  // N, w..., 2L
    std::vector<std::size_t> decoder_dims() const;  // 2L, w..., N
    std::size_t af_hidden(std::size_t width) const;
    std::uint64_t hash() const;
};

/// Per-item activation record for one pass through a dense/AF stack.
struct StackTrace {
    std::vector<std::vector<double>> dense_in;   // input of each dense layer
    std::vector<std::vector<double>> act_in;     // pre-activation of hidden layers
    std::vector<nn::AfTrace> af;                 // AF traces (when enabled)
};

/// Full encode -> normalize -> noise -> decode record for one item.
struct ItemTrace {
    StackTrace enc;
    std::vector<double> prenorm;   // encoder output, 2L reals
    std::vector<double> sent;      // after power normalization
    std::vector<double> received;  // after noise
    StackTrace dec;
};

class JsccCodec {
  public:
    explicit JsccCodec(JsccConfig cfg);

    const JsccConfig& config() const { return cfg_; }

    nn::ParameterStore init_params(std::uint64_t seed) const;

    /// Dense/AF stack output before packing and power normalization.
    std::vector<double> encode_prenorm(const nn::ParameterStore& params,
                                       const std::vector<double>& token, double snr_db,
                                       StackTrace* trace = nullptr) const;

    channel::ChannelFrame encode_item(const nn::ParameterStore& params,
                                      const std::vector<double>& token, double snr_db) const;
    std::vector<channel::ChannelFrame> encode(const nn::ParameterStore& params,
                                              const tokens::TokenBatch& batch,
                                              double snr_db) const;

    std::vector<double> decode_item(const nn::ParameterStore& params,
                                    const channel::ChannelFrame& frame, double snr_db,
                                    StackTrace* trace = nullptr) const;
    tokens::TokenBatch decode(const nn::ParameterStore& params,
                              const std::vector<channel::ChannelFrame>& frames,
                              double snr_db) const;

    /// encode -> power-normalize -> add given noise -> decode, recording
    /// everything needed for the backward pass. noise[i] holds 2L reals.
    tokens::TokenBatch pipeline_forward(const nn::ParameterStore& params,
                                        const tokens::TokenBatch& batch, double snr_db,
                                        const std::vector<std::vector<double>>& noise,
                                        std::vector<ItemTrace>* traces = nullptr) const;

    /// Backpropagate dL/d(decoded) through decoder, channel, power
    /// normalization, and encoder; accumulates into grads.
    void pipeline_backward(const nn::ParameterStore& params, const std::vector<ItemTrace>& traces,
                           const std::vector<std::vector<double>>& grad_decoded,
                           nn::GradStore& grads) const;

  private:
    std::vector<double> stack_forward(const nn::ParameterStore& params, const std::string& prefix,
                                      const std::vector<std::size_t>& dims,
                                      const std::vector<double>& input, double snr_db,
                                      StackTrace* trace) const;
    std::vector<double> stack_backward(const nn::ParameterStore& params, const std::string& prefix,
                                       const std::vector<std::size_t>& dims, const StackTrace& trace,
                                       const std::vector<double>& grad_out,
                                       nn::GradStore& grads) const;

    JsccConfig cfg_;
    nn::Activation act_;
};

}  // namespace semclip::jscc

#endif
