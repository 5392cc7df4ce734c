#include "semclip/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "semclip/util.hpp"

namespace semclip::config {

namespace {

struct KeySpec {
    const char* key;
    const char* default_value;
};

// Flat key=value schema. Defaults are the desk-scale operating point and
// are echoed in full into every manifest.
const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> keys = {
        {"seed", "1"},
        {"seeds", "1,2,3"},
        {"method", "semclip"},
        {"snr_range", "-10,10"},
        {"snr_list", "-10,-5,0,5,10"},
        {"fixed_snr_db", "0"},
        {"batch_size", "64"},
        {"stage1_steps", "2000"},
        {"stage2_steps", "600"},
        {"stage1_lr", "0.003"},
        {"stage2_lr", "0.005"},
        {"similarity_scale", "20"},
        {"n", "64"},
        {"l", "32"},
        {"g", "16"},
        {"m", "4"},
        {"d", "64"},
        {"per_class_train", "32"},
        {"per_class_eval", "24"},
        {"spread", "0.05"},
        {"prompt_offset", "0.5"},
        {"data_seed", "11"},
        {"data_seed_b", "29"},
        {"encoder_seed", "7"},
        {"metrics", "top1_accuracy,recall_at1"},
    };
    return keys;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double d;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' is not a number: " + v);
    }
    if (pos != v.size())
        throw std::invalid_argument("config: trailing characters in '" + key + "': " + v);
    return d;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long u;
    try {
        u = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' is not an unsigned integer: " + v);
    }
    if (pos != v.size())
        throw std::invalid_argument("config: trailing characters in '" + key + "': " + v);
    return u;
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

void validate(const RunConfig& cfg) {
    const auto range = cfg.get_double_list("snr_range");
    if (range.size() != 2)
        throw std::invalid_argument("config: snr_range must be 'lo,hi'");
    if (range[0] > range[1])
        throw std::invalid_argument("config: snr_range out of order (lo > hi)");
    if (cfg.get_size("batch_size") < 2)
        throw std::invalid_argument("config: batch_size must be >= 2");
    if (cfg.get_size("g") < 2) throw std::invalid_argument("config: g must be >= 2");
    for (const char* k : {"n", "l", "m", "d", "per_class_train", "per_class_eval"})
        if (cfg.get_size(k) == 0)
            throw std::invalid_argument(std::string("config: ") + k + " must be positive");
    if (!(cfg.get_double("spread") > 0.0))
        throw std::invalid_argument("config: spread must be > 0");
    if (cfg.get_double("prompt_offset") < 0.0)
        throw std::invalid_argument("config: prompt_offset must be >= 0");
    for (const char* k : {"stage1_lr", "stage2_lr"})
        if (cfg.get_double(k) < 0.0)
            throw std::invalid_argument(std::string("config: ") + k + " must be >= 0");
    if (!(cfg.get_double("similarity_scale") > 0.0))
        throw std::invalid_argument("config: similarity_scale must be > 0");
    exp::method_from_tag(cfg.get("method"));
    if (cfg.get_u64_list("seeds").empty())
        throw std::invalid_argument("config: seeds must be non-empty");
    if (cfg.get_double_list("snr_list").empty())
        throw std::invalid_argument("config: snr_list must be non-empty");
    for (const auto& m : split_csv(cfg.get("metrics")))
        if (m != "top1_accuracy" && m != "recall_at1")
            throw std::invalid_argument("config: unknown metric " + m);
}

}  // namespace

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const { return parse_double(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_u64(key, get(key)); }

std::size_t RunConfig::get_size(const std::string& key) const {
    return static_cast<std::size_t>(get_u64(key));
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_csv(get(key))) out.push_back(parse_double(key, item));
    return out;
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_csv(get(key))) out.push_back(parse_u64(key, item));
    return out;
}

std::string RunConfig::canonical_text() const {
    std::string text;
    for (const auto& [k, v] : values) {
        text += k;
        text += '=';
        text += v;
        text += '\n';
    }
    return text;
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical_text()); }

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    for (const auto& spec : schema()) keys.emplace_back(spec.key);
    return keys;
}

RunConfig default_config() {
    RunConfig cfg;
    for (const auto& spec : schema()) cfg.values[spec.key] = spec.default_value;
    return cfg;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg = default_config();
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (!cfg.values.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "'");
        if (seen[key])
            throw std::invalid_argument("config: duplicate key '" + key + "'");
        seen[key] = true;
        cfg.values[key] = value;
    }
    if (const char* env = std::getenv("SEMCLIP_SEED")) {
        cfg.values["seed"] = trim(env);
        cfg.seed_overridden_by_env = true;
    }
    validate(cfg);
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

exp::ExperimentConfig to_experiment_config(const RunConfig& cfg) {
    exp::ExperimentConfig ec;
    exp::DeskConfig& d = ec.desk;
    d.token_dim = cfg.get_size("n");
    d.embed_dim = cfg.get_size("d");
    d.channel_uses = cfg.get_size("l");
    d.num_classes = cfg.get_size("g");
    d.context_len = cfg.get_size("m");
    d.per_class_train = cfg.get_size("per_class_train");
    d.per_class_eval = cfg.get_size("per_class_eval");
    d.spread = cfg.get_double("spread");
    d.prompt_offset = cfg.get_double("prompt_offset");
    const auto range = cfg.get_double_list("snr_range");
    d.snr_lo_db = range[0];
    d.snr_hi_db = range[1];
    d.fixed_snr_db = cfg.get_double("fixed_snr_db");
    d.stage1_steps = cfg.get_size("stage1_steps");
    d.stage2_steps = cfg.get_size("stage2_steps");
    d.batch_size = cfg.get_size("batch_size");
    d.stage1_lr = cfg.get_double("stage1_lr");
    d.stage2_lr = cfg.get_double("stage2_lr");
    d.similarity_scale = cfg.get_double("similarity_scale");
    d.data_seed = cfg.get_u64("data_seed");
    d.encoder_seed = cfg.get_u64("encoder_seed");
    ec.method = exp::method_from_tag(cfg.get("method"));
    ec.snr_list = cfg.get_double_list("snr_list");
    ec.seeds = cfg.get_u64_list("seeds");
    ec.metrics = split_csv(cfg.get("metrics"));
    ec.validate();
    return ec;
}

train::TrainConfig to_train_config(const RunConfig& cfg) {
    train::TrainConfig t;
    const auto range = cfg.get_double_list("snr_range");
    t.snr_lo_db = range[0];
    t.snr_hi_db = range[1];
    t.batch_size = cfg.get_size("batch_size");
    t.learning_rate = cfg.get_double("stage1_lr");
    t.steps = cfg.get_size("stage1_steps");
    t.seed = cfg.get_u64("seed");
    t.similarity_scale = cfg.get_double("similarity_scale");
    t.validate();
    return t;
}

std::uint64_t RunManifest::hash() const {
    std::uint64_t h = fnv1a(&config_hash, 8);
    h = fnv1a(&seed, 8, h);
    h = fnv1a(artifact_version, h);
    h = fnv1a(command, h);
    for (const auto& [name, ch] : checkpoint_hashes) {
        h = fnv1a(name, h);
        h = fnv1a(&ch, 8, h);
    }
    return h;
}

void write_manifest(const RunManifest& manifest, const RunConfig& cfg, const std::string& out_path) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("manifest: cannot open " + out_path);
    out << "manifest_hash=" << hex_u64(manifest.hash()) << "\n";
    out << "config_hash=" << hex_u64(manifest.config_hash) << "\n";
    out << "seed=" << manifest.seed << "\n";
    out << "seed_source=" << (manifest.seed_overridden_by_env ? "env" : "config") << "\n";
    out << "artifact_version=" << manifest.artifact_version << "\n";
    out << "command=" << manifest.command << "\n";
    out << "timestamp=" << manifest.timestamp << "\n";
    for (const auto& [name, h] : manifest.checkpoint_hashes)
        out << "checkpoint." << name << "=" << hex_u64(h) << "\n";
    for (const auto& [k, v] : cfg.values) out << "config." << k << "=" << v << "\n";
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    RunManifest m;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "config_hash") m.config_hash = std::stoull(value, nullptr, 16);
        else if (key == "seed") m.seed = std::stoull(value);
        else if (key == "seed_source") m.seed_overridden_by_env = (value == "env");
        else if (key == "artifact_version") m.artifact_version = value;
        else if (key == "command") m.command = value;
        else if (key == "timestamp") m.timestamp = value;
        else if (key.rfind("checkpoint.", 0) == 0)
            m.checkpoint_hashes[key.substr(11)] = std::stoull(value, nullptr, 16);
    }
    return m;
}

}  // namespace semclip::config
