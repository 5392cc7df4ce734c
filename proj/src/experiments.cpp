#include "semclip/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "semclip/channel.hpp"
#include "semclip/util.hpp"

namespace semclip::exp {

Method method_from_tag(const std::string& tag) {
    if (tag == "semclip") return Method::semclip;
    if (tag == "semclip_no_tapl") return Method::semclip_no_tapl;
    if (tag == "semclip_no_af") return Method::semclip_no_af;
    if (tag == "clip_ft_direct") return Method::clip_ft_direct;
    throw std::invalid_argument("unknown method tag: " + tag);
}

std::string method_tag(Method m) {
    switch (m) {
        case Method::semclip: return "semclip";
        case Method::semclip_no_tapl: return "semclip_no_tapl";
        case Method::semclip_no_af: return "semclip_no_af";
        case Method::clip_ft_direct: return "clip_ft_direct";
    }
    throw std::invalid_argument("unknown method");
}

std::vector<Method> all_methods() {
    return {Method::semclip, Method::semclip_no_tapl, Method::semclip_no_af,
            Method::clip_ft_direct};
}

std::uint64_t DeskConfig::hash() const {
    std::ostringstream os;
    os << "desk;n=" << token_dim << ";d=" << embed_dim << ";l=" << channel_uses
       << ";g=" << num_classes << ";m=" << context_len << ";pct=" << per_class_train
       << ";pce=" << per_class_eval << ";spread=" << spread << ";offset=" << prompt_offset
       << ";snr=" << snr_lo_db << "," << snr_hi_db << ";fixed=" << fixed_snr_db
       << ";s1=" << stage1_steps << ";s2=" << stage2_steps << ";b=" << batch_size
       << ";lr1=" << stage1_lr << ";lr2=" << stage2_lr << ";scale=" << similarity_scale
       << ";dseed=" << data_seed << ";eseed=" << encoder_seed;
    return fnv1a(os.str());
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: need at least one seed");
    if (snr_list.empty()) throw std::invalid_argument("ExperimentConfig: empty snr list");
    if (metrics.empty()) throw std::invalid_argument("ExperimentConfig: empty metric list");
    for (const auto& m : metrics)
        if (m != "top1_accuracy" && m != "recall_at1")
            throw std::invalid_argument("ExperimentConfig: unknown metric " + m);
}

std::uint64_t ExperimentConfig::hash() const {
    std::ostringstream os;
    os << "exp;" << hex_u64(desk.hash()) << ";method=" << method_tag(method) << ";snr=";
    for (double s : snr_list) os << s << ",";
    os << ";seeds=";
    for (auto s : seeds) os << s << ",";
    os << ";metrics=";
    for (const auto& m : metrics) os << m << ",";
    return fnv1a(os.str());
}

namespace {

tapl::TaplConfig make_tapl_config(const DeskConfig& cfg) {
    tapl::TaplConfig t;
    t.token_dim = cfg.token_dim;
    t.embed_dim = cfg.embed_dim;
    t.context_len = cfg.context_len;
    return t;
}

jscc::JsccConfig make_codec_config(const DeskConfig& cfg, bool use_af) {
    jscc::JsccConfig j;
    j.input_dim = cfg.token_dim;
    j.channel_uses = cfg.channel_uses;
    j.use_af = use_af;
    return j;
}

std::vector<double> scaled_to_norm(std::vector<double> v, double target_norm) {
    const double n = norm2(v);
    for (auto& x : v) x = x / n * target_norm;
    return v;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("accuracy: size mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

Rng eval_stream(std::uint64_t seed, Method method, std::size_t snr_index, std::uint64_t purpose) {
    return Rng::derived(seed, fnv1a(method_tag(method)) ^ purpose, snr_index);
}

}  // namespace

SynthTask make_synth_task(const DeskConfig& cfg, const std::string& name, std::uint64_t data_seed,
                          std::uint64_t encoder_seed) {
    if (cfg.token_dim != cfg.embed_dim)
        throw std::invalid_argument("make_synth_task: prompt construction needs N == D");
    SynthTask task{name,
                   tokens::synth_cluster_centers(cfg.num_classes, cfg.token_dim, data_seed),
                   {},
                   {},
                   {},
                   tapl::ToyTextEncoder(cfg.token_dim, cfg.embed_dim, encoder_seed),
                   make_tapl_config(cfg)};

    // one draw, split into train/eval so both share the centers
    const std::size_t per_class = cfg.per_class_train + cfg.per_class_eval;
    const tokens::TokenBatch all =
        tokens::synth_cluster_tokens(cfg.num_classes, per_class, cfg.token_dim, cfg.spread, data_seed);
    for (std::size_t g = 0; g < cfg.num_classes; ++g) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t idx = g * per_class + i;
            tokens::TokenBatch& dst = i < cfg.per_class_train ? task.train : task.eval;
            dst.rows.push_back(all.rows[idx]);
            dst.labels.push_back(all.labels[idx]);
        }
    }

    // Class prompts are built so that with zero context the encoded text
    // feature lands on center_k + offset. The offset vector models the
    // image/text modality gap; it comes from the encoder seed and is
    // shared by every dataset evaluated against this encoder pair.
    Rng offset_rng = Rng::derived(encoder_seed, 0x0ff5e7ULL);
    std::vector<double> offset(cfg.token_dim);
    for (auto& v : offset) v = offset_rng.gaussian();
    if (cfg.prompt_offset > 0.0)
        offset = scaled_to_norm(std::move(offset), cfg.prompt_offset);
    else
        std::fill(offset.begin(), offset.end(), 0.0);

    const nn::Tensor& a = task.text_encoder.projection();
    const std::vector<double>& bias = task.text_encoder.bias();
    const double seq_len = static_cast<double>(cfg.context_len + 1);
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
        std::vector<double> rhs(cfg.token_dim);
        for (std::size_t i = 0; i < cfg.token_dim; ++i)
            rhs[i] = task.centers[k].values[i] + offset[i] - bias[i];
        std::vector<double> ck = solve_linear(a.data, rhs, cfg.token_dim);
        for (auto& v : ck) v *= seq_len;
        char label[32];
        std::snprintf(label, sizeof(label), "%s_%02zu", name.c_str(), k);
        task.classes.classes.push_back({label, {std::move(ck)}});
    }
    return task;
}

SynthTask make_synth_task(const DeskConfig& cfg) {
    return make_synth_task(cfg, "setA", cfg.data_seed, cfg.encoder_seed);
}

TrainedMethod train_method(Method method, const SynthTask& task, const DeskConfig& cfg,
                           std::uint64_t seed) {
    TrainedMethod out;
    out.method = method;
    out.codec_cfg = make_codec_config(cfg, method != Method::semclip_no_af);
    if (method == Method::clip_ft_direct) {
        out.tapl_params = tapl::init_tapl_params(task.tapl_cfg, seed);
        return out;
    }

    jscc::JsccCodec codec(out.codec_cfg);
    nn::ParameterStore params = codec.init_params(seed);

    train::TrainConfig t1;
    t1.snr_lo_db = cfg.snr_lo_db;
    t1.snr_hi_db = cfg.snr_hi_db;
    if (method == Method::semclip_no_af) {
        t1.snr_lo_db = cfg.fixed_snr_db;
        t1.snr_hi_db = cfg.fixed_snr_db;
    }
    t1.batch_size = cfg.batch_size;
    t1.learning_rate = cfg.stage1_lr;
    t1.steps = cfg.stage1_steps;
    t1.seed = seed;
    t1.similarity_scale = cfg.similarity_scale;
    out.stage1_trace = train::train_stage1(task.train, codec, params, t1);
    out.jscc_params = std::move(params);

    nn::ParameterStore tapl_params = tapl::init_tapl_params(task.tapl_cfg, seed);
    if (method == Method::semclip) {
        train::TrainConfig t2 = t1;
        t2.learning_rate = cfg.stage2_lr;
        t2.steps = cfg.stage2_steps;
        out.stage2_trace = train::train_stage2(task.train, codec, *out.jscc_params, task.tapl_cfg,
                                               tapl_params, task.classes, task.text_encoder, t2);
        out.tapl_trained = true;
    }
    out.tapl_params = std::move(tapl_params);
    return out;
}

tokens::TokenBatch baseline_clip_ft(const tokens::TokenBatch& batch, double snr_db, Rng& stream) {
    if (batch.size() == 0) throw std::invalid_argument("baseline_clip_ft: empty batch");
    const std::size_t dim = batch.dim();
    const double sigma2 = channel::snr_to_noise_variance(snr_db, 1.0);
    tokens::TokenBatch out;
    out.rows.resize(batch.size());
    out.labels = batch.labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> reals = batch.rows[i].values;
        if (reals.size() % 2 != 0) reals.push_back(0.0);
        auto frame = channel::power_normalize(channel::pack_complex(reals), 1.0);
        frame = channel::awgn_transmit(frame, sigma2, stream);
        std::vector<double> decoded = channel::unpack_complex(frame);
        decoded.resize(dim);
        out.rows[i].values = std::move(decoded);
    }
    return out;
}

tokens::TokenBatch decode_eval_batch(const TrainedMethod& trained, const SynthTask& task,
                                     double snr_db, Rng& stream) {
    if (trained.method == Method::clip_ft_direct)
        return baseline_clip_ft(task.eval, snr_db, stream);
    const jscc::JsccCodec codec(trained.codec_cfg);
    const nn::ParameterStore& params = *trained.jscc_params;
    const double sigma2 = channel::snr_to_noise_variance(snr_db, trained.codec_cfg.power);
    tokens::TokenBatch decoded;
    decoded.rows.reserve(task.eval.size());
    decoded.labels = task.eval.labels;
    for (const auto& row : task.eval.rows) {
        auto frame = codec.encode_item(params, row.values, snr_db);
        frame = channel::awgn_transmit(frame, sigma2, stream);
        decoded.rows.push_back({codec.decode_item(params, frame, snr_db)});
    }
    return decoded;
}

namespace {

tapl::TextFeatureSet eval_text_features(const TrainedMethod& trained, const SynthTask& task,
                                        const tokens::TokenBatch& decoded, bool pooled) {
    const tapl::PromptContext ctx = tapl::context_from_store(*trained.tapl_params);
    if (!trained.tapl_trained)
        return tapl::build_text_features(ctx, task.classes, task.text_encoder);
    std::vector<std::vector<double>> pis(decoded.size());
    for (std::size_t b = 0; b < decoded.size(); ++b)
        pis[b] = tapl::meta_net_forward(*trained.tapl_params, decoded.rows[b].values);
    if (pooled) {
        const std::vector<std::vector<double>> one{tapl::pool_conditional(pis)};
        return tapl::build_text_features(one, ctx, task.classes, task.text_encoder);
    }
    return tapl::build_text_features(pis, ctx, task.classes, task.text_encoder);
}

}  // namespace

double eval_classification(const TrainedMethod& trained, const SynthTask& task, double snr_db,
                           Rng& stream) {
    const tokens::TokenBatch decoded = decode_eval_batch(trained, task, snr_db, stream);
    const auto text = eval_text_features(trained, task, decoded, /*pooled=*/false);
    const auto probs = tapl::task_probabilities(decoded, text, 1.0);
    return accuracy(tapl::classify(probs), task.eval.labels);
}

double eval_retrieval(const TrainedMethod& trained, const SynthTask& task, double snr_db,
                      Rng& stream) {
    const tokens::TokenBatch decoded = decode_eval_batch(trained, task, snr_db, stream);
    // retrieval queries are single text vectors, so the conditional vector
    // is pooled over the received batch
    const auto text = eval_text_features(trained, task, decoded, /*pooled=*/true);
    std::set<int> present(task.eval.labels.begin(), task.eval.labels.end());
    std::size_t hits = 0;
    for (int k : present) {
        const double* t = text.row(0, static_cast<std::size_t>(k));
        const std::vector<double> query(t, t + text.dim);
        const auto ranked = tapl::retrieve(query, decoded);
        if (task.eval.labels[ranked.front()] == k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(present.size());
}

double upper_bound_accuracy(const SynthTask& task) {
    tapl::PromptContext zero_ctx{nn::Tensor({task.tapl_cfg.context_len, task.tapl_cfg.embed_dim})};
    const auto text = tapl::build_text_features(zero_ctx, task.classes, task.text_encoder);
    const auto probs = tapl::task_probabilities(task.eval, text, 1.0);
    return accuracy(tapl::classify(probs), task.eval.labels);
}

namespace {

std::vector<ReportRow> run_cells(const ExperimentConfig& cfg, const SynthTask& train_task,
                                 const SynthTask& eval_task, const std::vector<Method>& methods,
                                 const std::vector<double>& snr_list) {
    const std::uint64_t config_hash = cfg.hash();
    const bool want_cls =
        std::count(cfg.metrics.begin(), cfg.metrics.end(), "top1_accuracy") != 0;
    const bool want_ret = std::count(cfg.metrics.begin(), cfg.metrics.end(), "recall_at1") != 0;
    std::vector<ReportRow> rows;
    for (const Method method : methods) {
        for (const std::uint64_t seed : cfg.seeds) {
            const TrainedMethod trained = train_method(method, train_task, cfg.desk, seed);
            for (std::size_t si = 0; si < snr_list.size(); ++si) {
                const double snr = snr_list[si];
                if (want_cls) {
                    Rng stream = eval_stream(seed, method, si, 0xc1a55ULL);
                    rows.push_back({method_tag(method), snr, "top1_accuracy",
                                    eval_classification(trained, eval_task, snr, stream), seed,
                                    config_hash});
                }
                if (want_ret) {
                    Rng stream = eval_stream(seed, method, si, 0x4e74ULL);
                    rows.push_back({method_tag(method), snr, "recall_at1",
                                    eval_retrieval(trained, eval_task, snr, stream), seed,
                                    config_hash});
                }
            }
        }
    }
    return rows;
}

}  // namespace

std::vector<ReportRow> snr_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const SynthTask task = make_synth_task(cfg.desk);
    return run_cells(cfg, task, task, all_methods(), cfg.snr_list);
}

std::vector<ReportRow> ablation_suite(const ExperimentConfig& cfg) {
    cfg.validate();
    const SynthTask task = make_synth_task(cfg.desk);
    return run_cells(cfg, task, task,
                     {Method::semclip, Method::semclip_no_tapl, Method::semclip_no_af},
                     cfg.snr_list);
}

std::vector<ReportRow> cross_dataset_eval(const ExperimentConfig& cfg,
                                          std::uint64_t alternate_data_seed,
                                          const std::string& alternate_name) {
    cfg.validate();
    const SynthTask task_a = make_synth_task(cfg.desk);
    const SynthTask task_b =
        make_synth_task(cfg.desk, alternate_name, alternate_data_seed, cfg.desk.encoder_seed);

    std::set<std::string> names_a;
    for (const auto& c : task_a.classes.classes) names_a.insert(c.name);
    for (const auto& c : task_b.classes.classes)
        if (names_a.count(c.name))
            throw std::invalid_argument("cross_dataset_eval: class '" + c.name +
                                        "' overlaps the training set");
    if (alternate_data_seed == cfg.desk.data_seed)
        throw std::invalid_argument("cross_dataset_eval: evaluation data equals training data");

    return run_cells(cfg, task_a, task_b, all_methods(), {0.0});
}

void write_report(const std::vector<ReportRow>& rows, const std::string& path) {
    if (rows.empty()) throw std::invalid_argument("write_report: no rows");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_report: cannot open " + path);
    out << "# semclip experiment report\n";
    out << "# clip_ft_direct = uncoded analog token transmission "
           "(power-normalized, no learned codec, fixed prompts)\n";
    out << "method,snr_db,metric,value,seed,config_hash\n";
    char buf[256];
    std::set<std::uint64_t> hashes;
    for (const auto& r : rows) {
        if (r.value < 0.0 || r.value > 1.0)
            throw std::invalid_argument("write_report: metric value outside [0,1]");
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%s,%.17g,%llu,%s\n", r.method.c_str(), r.snr_db,
                      r.metric.c_str(), r.value, static_cast<unsigned long long>(r.seed),
                      hex_u64(r.config_hash).c_str());
        out << buf;
        hashes.insert(r.config_hash);
    }
    out << "# config_hash=";
    bool first = true;
    for (auto h : hashes) {
        if (!first) out << ";";
        out << hex_u64(h);
        first = false;
    }
    out << "\n";
    if (!out) throw std::runtime_error("write_report: write failed: " + path);
}

std::vector<ReportRow> parse_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_report: cannot open " + path);
    std::vector<ReportRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("method,", 0) == 0) continue;
        std::istringstream ss(line);
        ReportRow r;
        std::string field;
        std::getline(ss, r.method, ',');
        std::getline(ss, field, ',');
        r.snr_db = std::stod(field);
        std::getline(ss, r.metric, ',');
        std::getline(ss, field, ',');
        r.value = std::stod(field);
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        std::getline(ss, field, ',');
        r.config_hash = std::stoull(field, nullptr, 16);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- SVG rendering ----

namespace {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // x, y(mean over seeds)
};

const char* series_color(std::size_t i) {
    static const char* colors[] = {"#1f6fb2", "#d1495b", "#3a9d23", "#8a5fbf", "#b26f1f", "#444"};
    return colors[i % 6];
}

void render_chart(const std::vector<Series>& series, const std::string& x_label,
                  const std::string& y_label, const std::string& path) {
    if (series.empty()) throw std::invalid_argument("emit_plots: nothing to plot");
    double xmin = 1e300, xmax = -1e300;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
    if (xmin == xmax) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    const double w = 640, h = 480, ml = 70, mr = 160, mt = 30, mb = 55;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - y * (h - mt - mb); };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("emit_plots: cannot open " + path);
    char buf[512];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                  h - mb, w - mr, h - mb);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                  mt, ml, h - mb);
    out << buf;
    for (int i = 0; i <= 5; ++i) {
        const double y = 0.2 * i;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                      ml - 6, py(y) + 4, y);
        out << buf;
        std::snprintf(
            buf, sizeof(buf),
            "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", ml, py(y),
            w - mr, py(y));
        out << buf;
    }
    for (int i = 0; i <= 4; ++i) {
        const double x = xmin + (xmax - xmin) * i / 4.0;
        std::snprintf(
            buf, sizeof(buf),
            "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.3g</text>\n",
            px(x), h - mb + 18, x);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\">%s</text>\n",
                  (ml + w - mr) / 2, h - 12, x_label.c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"18\" y=\"%.1f\" font-size=\"13\" text-anchor=\"middle\" "
                  "transform=\"rotate(-90 18 %.1f)\">%s</text>\n",
                  (mt + h - mb) / 2, (mt + h - mb) / 2, y_label.c_str());
    out << buf;

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        std::string pts;
        for (const auto& [x, y] : s.points) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(x), py(y));
            pts += buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      pts.c_str(), series_color(si));
        out << buf;
        for (const auto& [x, y] : s.points) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(x), py(y),
                          series_color(si));
            out << buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      w - mr + 10, mt + 18.0 * static_cast<double>(si) + 10, series_color(si),
                      s.label.c_str());
        out << buf;
    }
    out << "</svg>\n";
}

}  // namespace

void emit_snr_plot(const std::vector<ReportRow>& rows, const std::string& metric,
                   const std::string& path) {
    // mean over seeds per (method, snr)
    std::map<std::string, std::map<double, std::pair<double, std::size_t>>> agg;
    for (const auto& r : rows) {
        if (r.metric != metric) continue;
        auto& cell = agg[r.method][r.snr_db];
        cell.first += r.value;
        cell.second += 1;
    }
    if (agg.empty()) throw std::invalid_argument("emit_snr_plot: no rows for metric " + metric);
    std::vector<Series> series;
    for (const auto& [method, cells] : agg) {
        Series s{method, {}};
        for (const auto& [snr, cell] : cells)
            s.points.emplace_back(snr, cell.first / static_cast<double>(cell.second));
        series.push_back(std::move(s));
    }
    render_chart(series, "test SNR (dB)", metric, path);
}

void emit_bandwidth_plot(const std::vector<BandwidthPoint>& points, const tokens::ImageSpec& spec,
                         const std::string& metric, const std::string& path) {
    if (points.empty()) throw std::invalid_argument("emit_bandwidth_plot: no points");
    std::map<std::string, Series> by_method;
    for (const auto& p : points) {
        Series& s = by_method[p.method];
        s.label = p.method;
        s.points.emplace_back(std::log10(channel::bandwidth_ratio(p.channel_uses, spec)), p.value);
    }
    std::vector<Series> series;
    for (auto& [_, s] : by_method) {
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
    }
    render_chart(series, "log10 bandwidth ratio R", metric, path);
}

}  // namespace semclip::exp
