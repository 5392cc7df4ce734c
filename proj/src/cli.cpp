#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "semclip/config.hpp"
#include "semclip/experiments.hpp"

namespace semclip::config {

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg = parse_config_text("");  // applies env override + validation
        return cfg;
    }
    return parse_config(path);
}

RunManifest make_manifest(const RunConfig& cfg, const std::string& command) {
    RunManifest m;
    m.config_hash = cfg.hash();
    m.seed = cfg.get_u64("seed");
    m.command = command;
    m.timestamp = now_iso8601();
    m.seed_overridden_by_env = cfg.seed_overridden_by_env;
    return m;
}

int cmd_tokens_synth(const std::string& config_path, const std::string& out_path) {
    const RunConfig cfg = load_config_or_default(config_path);
    const auto batch = tokens::synth_cluster_tokens(cfg.get_size("g"), cfg.get_size("per_class_train"),
                                                    cfg.get_size("n"), cfg.get_double("spread"),
                                                    cfg.get_u64("data_seed"));
    tokens::save_feature_cache(batch, out_path);
    write_manifest(make_manifest(cfg, "tokens synth"), cfg, out_path + ".manifest");
    std::cout << "wrote " << batch.size() << " x " << batch.dim() << " tokens to " << out_path
              << "\n";
    return 0;
}

int cmd_tokens_encode(const std::string& config_path, const std::string& image_path,
                      std::size_t height, std::size_t width, std::size_t channels,
                      const std::string& out_path) {
    const RunConfig cfg = load_config_or_default(config_path);
    const tokens::ImageSpec spec{height, width, channels};
    spec.validate();
    std::ifstream in(image_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image file: " + image_path);
    std::vector<float> raw(spec.pixel_count());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!in || in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)))
        throw std::runtime_error("image file does not match HxWxC f32 layout");
    std::vector<double> image(raw.begin(), raw.end());

    tokens::TokenBatch batch;
    batch.rows.push_back(
        tokens::toy_image_encoder(image, spec, cfg.get_size("n"), cfg.get_u64("seed")));
    tokens::save_feature_cache(batch, out_path);
    write_manifest(make_manifest(cfg, "tokens encode"), cfg, out_path + ".manifest");
    std::cout << "encoded 1 x " << batch.dim() << " token to " << out_path << "\n";
    return 0;
}

int cmd_tokens_inspect(const std::string& cache_path) {
    const auto info = tokens::inspect_feature_cache(cache_path);
    nlohmann::json j{{"path", cache_path},
                     {"version", info.version},
                     {"dim", info.dim},
                     {"count", info.count},
                     {"dtype", info.dtype == tokens::CacheDtype::f32 ? "f32" : "f64"},
                     {"has_labels", info.has_labels}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_channel_probe(double snr_db, std::size_t symbols, double power, std::uint64_t seed) {
    const auto r = channel::probe({snr_db, power, seed}, symbols);
    nlohmann::json j{{"snr_db_configured", r.snr_db_configured},
                     {"snr_db_measured", r.snr_db_measured},
                     {"noise_mean_re", r.noise_mean_re},
                     {"noise_mean_im", r.noise_mean_im},
                     {"noise_variance_measured", r.noise_variance_measured},
                     {"symbols", r.symbols},
                     {"power", power},
                     {"seed", seed}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_exp_train(const std::string& config_path, const std::string& out_dir) {
    const RunConfig cfg = load_config_or_default(config_path);
    const exp::ExperimentConfig ec = to_experiment_config(cfg);
    const exp::SynthTask task = exp::make_synth_task(ec.desk);
    const std::uint64_t seed = cfg.get_u64("seed");
    const exp::Method method = ec.method;

    const exp::TrainedMethod trained = exp::train_method(method, task, ec.desk, seed);
    RunManifest manifest = make_manifest(cfg, "exp train " + exp::method_tag(method));
    if (trained.jscc_params) {
        const std::string path = out_dir + "/jscc_" + exp::method_tag(method) + ".ckpt";
        nn::save_checkpoint(*trained.jscc_params, path);
        manifest.checkpoint_hashes["jscc"] = nn::params_hash(*trained.jscc_params);
        train::write_loss_trace(trained.stage1_trace, out_dir + "/stage1_trace.csv");
    }
    if (trained.tapl_params) {
        const std::string path = out_dir + "/tapl_" + exp::method_tag(method) + ".ckpt";
        nn::save_checkpoint(*trained.tapl_params, path);
        manifest.checkpoint_hashes["tapl"] = nn::params_hash(*trained.tapl_params);
        if (trained.tapl_trained)
            train::write_loss_trace(trained.stage2_trace, out_dir + "/stage2_trace.csv");
    }
    write_manifest(manifest, cfg, out_dir + "/run.manifest");
    std::cout << "trained " << exp::method_tag(method) << " (seed " << seed << ") into " << out_dir
              << "\n";
    return 0;
}

int run_report_command(const std::string& config_path, const std::string& out_path,
                       const std::string& kind) {
    const RunConfig cfg = load_config_or_default(config_path);
    const exp::ExperimentConfig ec = to_experiment_config(cfg);
    std::vector<exp::ReportRow> rows;
    if (kind == "sweep")
        rows = exp::snr_sweep(ec);
    else if (kind == "ablate")
        rows = exp::ablation_suite(ec);
    else
        rows = exp::cross_dataset_eval(ec, cfg.get_u64("data_seed_b"));
    exp::write_report(rows, out_path);
    write_manifest(make_manifest(cfg, "exp " + kind), cfg, out_path + ".manifest");
    std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_exp_plot(const std::string& report_path, const std::string& metric,
                 const std::string& out_path, const std::vector<std::string>& bw_pairs,
                 std::size_t bw_h, std::size_t bw_w, std::size_t bw_c) {
    if (bw_pairs.empty()) {
        const auto rows = exp::parse_report(report_path);
        exp::emit_snr_plot(rows, metric, out_path);
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }
    // bandwidth mode: each pair is L=report.csv; the mean metric value in
    // the report becomes one point per method.
    std::vector<exp::BandwidthPoint> points;
    for (const auto& pair : bw_pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--bw expects L=report.csv, got: " + pair);
        const std::size_t l = std::stoull(pair.substr(0, eq));
        const auto rows = exp::parse_report(pair.substr(eq + 1));
        std::map<std::string, std::pair<double, std::size_t>> agg;
        for (const auto& r : rows) {
            if (r.metric != metric) continue;
            agg[r.method].first += r.value;
            agg[r.method].second += 1;
        }
        for (const auto& [method, cell] : agg)
            points.push_back({method, l, cell.first / static_cast<double>(cell.second)});
    }
    exp::emit_bandwidth_plot(points, tokens::ImageSpec{bw_h, bw_w, bw_c}, metric, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"semclip: zero-shot semantic communication over an AWGN channel"};
    app.require_subcommand(1);

    std::string config_path, out_path, cache_path, image_path, report_path;
    std::string metric = "top1_accuracy";
    std::size_t height = 8, width = 8, channels = 3, symbols = 1000000;
    double snr_db = 0.0, power = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> bw_pairs;
    std::size_t bw_h = 336, bw_w = 336, bw_c = 3;

    auto* tokens_cmd = app.add_subcommand("tokens", "token cache utilities");
    tokens_cmd->require_subcommand(1);
    auto* synth = tokens_cmd->add_subcommand("synth", "write a synthetic cluster token cache");
    synth->add_option("--config", config_path, "key=value config file");
    synth->add_option("--out", out_path, "output cache path")->required();
    auto* encode = tokens_cmd->add_subcommand("encode", "encode a raw f32 image with the toy encoder");
    encode->add_option("--config", config_path, "key=value config file");
    encode->add_option("--image", image_path, "raw little-endian f32 image file")->required();
    encode->add_option("--height", height)->required();
    encode->add_option("--width", width)->required();
    encode->add_option("--channels", channels)->required();
    encode->add_option("--out", out_path, "output cache path")->required();
    auto* inspect = tokens_cmd->add_subcommand("inspect", "print cache header as JSON");
    inspect->add_option("--cache", cache_path, "cache path")->required();

    auto* channel_cmd = app.add_subcommand("channel", "channel diagnostics");
    channel_cmd->require_subcommand(1);
    auto* probe = channel_cmd->add_subcommand("probe", "measure realized SNR and noise moments");
    probe->add_option("--snr-db", snr_db, "configured SNR in dB")->required();
    probe->add_option("--symbols", symbols, "number of symbols");
    probe->add_option("--power", power, "average power budget P");
    probe->add_option("--seed", seed, "stream seed");

    auto* exp_cmd = app.add_subcommand("exp", "experiments");
    exp_cmd->require_subcommand(1);
    auto* train_cmd = exp_cmd->add_subcommand("train", "train one method, write checkpoints");
    train_cmd->add_option("--config", config_path);
    train_cmd->add_option("--out-dir", out_path, "output directory")->required();
    auto* sweep = exp_cmd->add_subcommand("sweep", "SNR sweep over all methods");
    sweep->add_option("--config", config_path);
    sweep->add_option("--out", out_path, "report CSV path")->required();
    auto* ablate = exp_cmd->add_subcommand("ablate", "TAPL/AF ablation sweep");
    ablate->add_option("--config", config_path);
    ablate->add_option("--out", out_path, "report CSV path")->required();
    auto* crossdata = exp_cmd->add_subcommand("crossdata", "cross-distribution zero-shot eval");
    crossdata->add_option("--config", config_path);
    crossdata->add_option("--out", out_path, "report CSV path")->required();
    auto* plot = exp_cmd->add_subcommand("plot", "render report CSV to SVG");
    plot->add_option("--report", report_path, "report CSV (SNR figure mode)");
    plot->add_option("--metric", metric, "metric column to plot");
    plot->add_option("--out", out_path, "output SVG path")->required();
    plot->add_option("--bw", bw_pairs, "bandwidth mode: repeatable L=report.csv pairs");
    plot->add_option("--bw-height", bw_h, "image height for R accounting");
    plot->add_option("--bw-width", bw_w, "image width for R accounting");
    plot->add_option("--bw-channels", bw_c, "image channels for R accounting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_tokens_synth(config_path, out_path);
        if (encode->parsed())
            return cmd_tokens_encode(config_path, image_path, height, width, channels, out_path);
        if (inspect->parsed()) return cmd_tokens_inspect(cache_path);
        if (probe->parsed()) return cmd_channel_probe(snr_db, symbols, power, seed);
        if (train_cmd->parsed()) return cmd_exp_train(config_path, out_path);
        if (sweep->parsed()) return run_report_command(config_path, out_path, "sweep");
        if (ablate->parsed()) return run_report_command(config_path, out_path, "ablate");
        if (crossdata->parsed()) return run_report_command(config_path, out_path, "crossdata");
        if (plot->parsed())
            return cmd_exp_plot(report_path, metric, out_path, bw_pairs, bw_h, bw_w, bw_c);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help() << "\n";
    return 2;
}

}  // namespace semclip::config
