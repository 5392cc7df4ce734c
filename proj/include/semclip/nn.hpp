#ifndef SEMCLIP_NN_HPP
#define SEMCLIP_NN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace semclip::nn {

/// Dense row-major tensor of doubles. Parameter tensors are kept
/// f32-exact (see util::round_f32) so checkpoints round-trip bit-exactly.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
};

/// Named, shaped parameter map with checkpoint metadata.
struct ParameterStore {
    std::uint64_t config_hash = 0;
    std::string stage_tag;
    std::uint64_t seed = 0;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    Tensor& add(const std::string& name, std::vector<std::size_t> shape);
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

/// Gradient accumulator with the same keys/shapes as the store it mirrors.
using GradStore = std::map<std::string, Tensor>;

GradStore zeros_like(const ParameterStore& params);
Tensor& grad_at(GradStore& grads, const std::string& name);

/// Checkpoint container: magic "SCKP", version u16, config hash u64,
/// stage tag (u16 len + bytes), seed u64, tensor count u32, then per
/// tensor: name length u32, name, rank u32, dims u64 each, f32-LE payload.
void save_checkpoint(const ParameterStore& store, const std::string& path);
ParameterStore load_checkpoint(const std::string& path);
ParameterStore load_checkpoint(const std::string& path, std::uint64_t expected_config_hash);

/// FNV-1a over the serialized representation; stable identity of a store.
std::uint64_t params_hash(const ParameterStore& store);

// ---- dense / activation primitives (single item) ----

std::vector<double> dense_forward(const Tensor& w, const Tensor& b, const std::vector<double>& x);
/// Accumulates dW, db; returns dL/dx.
std::vector<double> dense_backward(const Tensor& w, const std::vector<double>& x,
                                   const std::vector<double>& gy, Tensor& gw, Tensor& gb);

enum class Activation { ReLU, Tanh };
Activation activation_from_tag(const std::string& tag);

std::vector<double> act_forward(Activation a, const std::vector<double>& x);
std::vector<double> act_backward(Activation a, const std::vector<double>& x,
                                 const std::vector<double>& gy);

// ---- attention-feature module ----

/// Sigmoid feature-scaling block conditioned on the (scaled) channel SNR:
///   u = W1 * [f; mu] + b1,  h = act(u),  a = W2 * h + b2,
///   m = sigmoid(a),         out = f * m.
struct AfTrace {
    std::vector<double> input;  // [f; mu]
    std::vector<double> u;
    std::vector<double> h;
    std::vector<double> mask;
};

std::vector<double> af_forward(const Tensor& w1, const Tensor& b1, const Tensor& w2,
                               const Tensor& b2, Activation act, const std::vector<double>& feature,
                               double snr_scaled, AfTrace* trace = nullptr);

/// Returns dL/dfeature; accumulates parameter grads; writes dL/dmu if
/// grad_snr is non-null.
std::vector<double> af_backward(const Tensor& w1, const Tensor& w2, Activation act,
                                const AfTrace& trace, const std::vector<double>& gout, Tensor& gw1,
                                Tensor& gb1, Tensor& gw2, Tensor& gb2, double* grad_snr = nullptr);

// ---- optimizer ----

/// Plain Adam with constant step size. After each update parameters are
/// rounded back to f32-exact values to preserve the checkpoint contract.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParameterStore& params, const GradStore& grads);

  private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

}  // namespace semclip::nn

#endif
