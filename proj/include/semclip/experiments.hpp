#ifndef SEMCLIP_EXPERIMENTS_HPP
#define SEMCLIP_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semclip/jscc.hpp"
#include "semclip/tapl.hpp"
#include "semclip/tokens.hpp"
#include "semclip/training.hpp"

namespace semclip::exp {

enum class Method { semclip, semclip_no_tapl, semclip_no_af, clip_ft_direct };

Method method_from_tag(const std::string& tag);
std::string method_tag(Method m);
std::vector<Method> all_methods();

/// Desk-scale experiment configuration: synthetic cluster task plus the
/// training stack hyperparameters. Every field participates in the
/// config hash.
struct DeskConfig {
    std::size_t token_dim = 64;        // N
    std::size_t embed_dim = 64;        // D
    std::size_t channel_uses = 32;     // L
    std::size_t num_classes = 16;      // G
    std::size_t context_len = 4;       // M
    std::size_t per_class_train = 32;
    std::size_t per_class_eval = 24;
    double spread = 0.05;
    double prompt_offset = 0.5;        // modality-gap offset of class prompts

    double snr_lo_db = -10.0;
    double snr_hi_db = 10.0;
    double fixed_snr_db = 0.0;         // training SNR for the no-AF ablation
    std::size_t stage1_steps = 2000;
    std::size_t stage2_steps = 600;
    std::size_t batch_size = 64;
    double stage1_lr = 3e-3;
    double stage2_lr = 5e-3;
    double similarity_scale = 20.0;

    std::uint64_t data_seed = 11;
    std::uint64_t encoder_seed = 7;

    std::uint64_t hash() const;
};

struct ExperimentConfig {
    DeskConfig desk;
    Method method = Method::semclip;
    std::vector<double> snr_list{-10.0, -5.0, 0.0, 5.0, 10.0};
    std::vector<std::uint64_t> seeds{1};
    std::vector<std::string> metrics{"top1_accuracy", "recall_at1"};

    void validate() const;
    std::uint64_t hash() const;
};

struct ReportRow {
    std::string method;
    double snr_db;
    std::string metric;
    double value;
    std::uint64_t seed;
    std::uint64_t config_hash;
};

/// Synthetic cluster task: train/eval token batches drawn around shared
/// unit-norm centers, plus class prompts whose text features sit at
/// center_k + offset (the desk-scale stand-in for the image/text
/// modality gap). The offset comes from the encoder seed, so it is a
/// property of the encoder pair, shared across datasets.
struct SynthTask {
    std::string name;
    std::vector<tokens::TokenVector> centers;
    tokens::TokenBatch train;
    tokens::TokenBatch eval;
    tapl::ClassSet classes;
    tapl::ToyTextEncoder text_encoder;
    tapl::TaplConfig tapl_cfg;
};

SynthTask make_synth_task(const DeskConfig& cfg, const std::string& name,
                          std::uint64_t data_seed, std::uint64_t encoder_seed);
SynthTask make_synth_task(const DeskConfig& cfg);

/// Trained artifacts for one (method, seed) cell. Non-TAPL methods keep
/// their untrained TAPL store: its context is the frozen prompt.
struct TrainedMethod {
    Method method;
    jscc::JsccConfig codec_cfg;
    std::optional<nn::ParameterStore> jscc_params;  // absent for clip_ft_direct
    std::optional<nn::ParameterStore> tapl_params;
    bool tapl_trained = false;
    train::LossTrace stage1_trace;
    train::LossTrace stage2_trace;
};

TrainedMethod train_method(Method method, const SynthTask& task, const DeskConfig& cfg,
                           std::uint64_t seed);

/// Uncoded analog feature transmission: pack to N/2 symbols (zero-pad if
/// odd), power-normalize, AWGN, unpack. No learned codec, no TAPL.
tokens::TokenBatch baseline_clip_ft(const tokens::TokenBatch& batch, double snr_db, Rng& stream);

/// Transmit the task's eval batch through the method's pipeline at the
/// given SNR; deterministic for a given stream.
tokens::TokenBatch decode_eval_batch(const TrainedMethod& trained, const SynthTask& task,
                                     double snr_db, Rng& stream);

double eval_classification(const TrainedMethod& trained, const SynthTask& task, double snr_db,
                           Rng& stream);
double eval_retrieval(const TrainedMethod& trained, const SynthTask& task, double snr_db,
                      Rng& stream);

/// Accuracy of Eq.-(2) classification on the original tokens with the
/// task's frozen prompts: the no-transmission reference.
double upper_bound_accuracy(const SynthTask& task);

std::vector<ReportRow> snr_sweep(const ExperimentConfig& cfg);
std::vector<ReportRow> ablation_suite(const ExperimentConfig& cfg);

/// Train on the config's task, evaluate zero-shot on a disjoint-class
/// task at 0 dB. Rejects class overlap between the two sets.
std::vector<ReportRow> cross_dataset_eval(const ExperimentConfig& cfg,
                                          std::uint64_t alternate_data_seed,
                                          const std::string& alternate_name = "setB");

void write_report(const std::vector<ReportRow>& rows, const std::string& path);
std::vector<ReportRow> parse_report(const std::string& path);

/// Accuracy-vs-SNR line chart, one polyline per method, as standalone SVG.
void emit_snr_plot(const std::vector<ReportRow>& rows, const std::string& metric,
                   const std::string& path);

struct BandwidthPoint {
    std::string method;
    std::size_t channel_uses;
    double value;
};

/// Accuracy vs bandwidth ratio R = L / (C*W*H) for the given image spec.
void emit_bandwidth_plot(const std::vector<BandwidthPoint>& points, const tokens::ImageSpec& spec,
                         const std::string& metric, const std::string& path);

}  // namespace semclip::exp

#endif
