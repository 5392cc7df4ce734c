#include "semclip/tokens.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "semclip/util.hpp"

namespace semclip::tokens {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'T', 'K'};
constexpr std::uint16_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ofstream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, buf, sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw std::runtime_error("feature cache: truncated header");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

std::uint32_t f32_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

float bits_f32(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

std::uint64_t f64_bits(double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    return u;
}

double bits_f64(std::uint64_t u) {
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

std::string labels_path(const std::string& path) { return path + ".labels"; }

}  // namespace

void ImageSpec::validate() const {
    if (height == 0 || width == 0 || channels == 0)
        throw std::invalid_argument("ImageSpec: dimensions must be strictly positive");
}

void TokenBatch::validate(std::size_t num_classes) const {
    const std::size_t n = dim();
    for (const auto& r : rows) {
        if (r.dim() != n) throw std::invalid_argument("TokenBatch: inconsistent row dims");
        for (double v : r.values)
            if (!std::isfinite(v)) throw std::invalid_argument("TokenBatch: non-finite entry");
    }
    if (!labels.empty()) {
        if (labels.size() != rows.size())
            throw std::invalid_argument("TokenBatch: label count mismatch");
        for (int l : labels) {
            if (l < 0) throw std::invalid_argument("TokenBatch: negative label");
            if (num_classes && static_cast<std::size_t>(l) >= num_classes)
                throw std::invalid_argument("TokenBatch: label out of range");
        }
    }
}

TokenVector toy_image_encoder(const std::vector<double>& image, const ImageSpec& spec,
                              std::size_t out_dim, std::uint64_t seed) {
    spec.validate();
    if (out_dim < 8) throw std::invalid_argument("toy_image_encoder: out_dim must be >= 8");
    const std::size_t pixels = spec.pixel_count();
    if (image.size() != pixels)
        throw std::invalid_argument("toy_image_encoder: image size does not match ImageSpec");
    for (double v : image)
        if (!std::isfinite(v)) throw std::invalid_argument("toy_image_encoder: non-finite pixel");

    // Position-addressed random projection: weight (j, p) comes straight
    // from the hash, so the map is a pure function of (image, seed) and any
    // pixel change moves output entries through a nonzero weight.
    TokenVector out;
    out.values.resize(out_dim);
    const double inv = 1.0 / static_cast<double>(pixels);
    for (std::size_t j = 0; j < out_dim; ++j) {
        double acc = hash_to_signed_unit(mix64(seed, j, 0xb1a5ULL));  // per-entry bias
        for (std::size_t p = 0; p < pixels; ++p)
            acc += hash_to_signed_unit(mix64(seed, j, p)) * image[p] * inv;
        out.values[j] = round_f32(acc);
    }
    return out;
}

std::vector<TokenVector> synth_cluster_centers(std::size_t num_classes, std::size_t dim,
                                               std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("synth_cluster_tokens: need G >= 2");
    Rng rng = Rng::derived(seed, 0xce17e25ULL);
    std::vector<TokenVector> centers(num_classes);
    for (auto& c : centers) {
        c.values.resize(dim);
        double nsq = 0.0;
        for (auto& v : c.values) {
            v = rng.gaussian();
            nsq += v * v;
        }
        const double inv = 1.0 / std::sqrt(nsq);
        for (auto& v : c.values) v = round_f32(v * inv);
    }
    return centers;
}

TokenBatch synth_cluster_tokens(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                double spread, std::uint64_t seed) {
    if (!(spread > 0.0)) throw std::invalid_argument("synth_cluster_tokens: spread must be > 0");
    const auto centers = synth_cluster_centers(num_classes, dim, seed);
    Rng rng = Rng::derived(seed, 0x5a3b1e5ULL);
    TokenBatch batch;
    batch.rows.reserve(num_classes * per_class);
    batch.labels.reserve(num_classes * per_class);
    for (std::size_t g = 0; g < num_classes; ++g) {
        for (std::size_t i = 0; i < per_class; ++i) {
            TokenVector row;
            row.values.resize(dim);
            for (std::size_t d = 0; d < dim; ++d)
                row.values[d] = round_f32(centers[g].values[d] + spread * rng.gaussian());
            batch.rows.push_back(std::move(row));
            batch.labels.push_back(static_cast<int>(g));
        }
    }
    return batch;
}

TokenVector l2_normalize(const TokenVector& v) {
    const double n = norm2(v.values);
    if (n == 0.0) throw std::invalid_argument("l2_normalize: zero vector");
    TokenVector out;
    out.values.resize(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out.values[i] = v.values[i] / n;
    return out;
}

void save_feature_cache(const TokenBatch& batch, const std::string& path, CacheDtype dtype) {
    batch.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("feature cache: cannot open for writing: " + path);
    write_bytes(out, kMagic, 4);
    write_le<std::uint16_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.dim()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(batch.size()));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    for (const auto& row : batch.rows) {
        for (double v : row.values) {
            if (dtype == CacheDtype::f32)
                write_le<std::uint32_t>(out, f32_bits(static_cast<float>(v)));
            else
                write_le<std::uint64_t>(out, f64_bits(v));
        }
    }
    if (!out) throw std::runtime_error("feature cache: write failed: " + path);
    out.close();

    if (batch.has_labels()) {
        std::ofstream lab(labels_path(path), std::ios::trunc);
        if (!lab) throw std::runtime_error("feature cache: cannot write labels sidecar");
        for (int l : batch.labels) lab << l << "\n";
    }
}

TokenBatch load_feature_cache(const std::string& path, std::size_t expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("feature cache: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("feature cache: bad magic in " + path);
    const auto version = read_le<std::uint16_t>(in);
    if (version != kVersion) throw std::runtime_error("feature cache: unsupported version");
    const auto dim = read_le<std::uint32_t>(in);
    const auto count = read_le<std::uint64_t>(in);
    const auto dtype_raw = read_le<std::uint8_t>(in);
    if (dtype_raw != 1 && dtype_raw != 2)
        throw std::runtime_error("feature cache: unknown dtype tag");
    const auto dtype = static_cast<CacheDtype>(dtype_raw);
    if (expected_dim && dim != expected_dim)
        throw std::runtime_error("feature cache: dimension mismatch");

    TokenBatch batch;
    batch.rows.resize(count);
    for (auto& row : batch.rows) {
        row.values.resize(dim);
        for (auto& v : row.values) {
            if (dtype == CacheDtype::f32) {
                unsigned char buf[4];
                in.read(reinterpret_cast<char*>(buf), 4);
                if (!in) throw std::runtime_error("feature cache: truncated payload");
                std::uint32_t u = 0;
                for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
                v = static_cast<double>(bits_f32(u));
            } else {
                unsigned char buf[8];
                in.read(reinterpret_cast<char*>(buf), 8);
                if (!in) throw std::runtime_error("feature cache: truncated payload");
                std::uint64_t u = 0;
                for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
                v = bits_f64(u);
            }
        }
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw std::runtime_error("feature cache: trailing bytes after payload");

    std::ifstream lab(labels_path(path));
    if (lab) {
        int l;
        while (lab >> l) batch.labels.push_back(l);
        if (batch.labels.size() != batch.rows.size())
            throw std::runtime_error("feature cache: labels sidecar count mismatch");
    }
    return batch;
}

CacheInfo inspect_feature_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("feature cache: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("feature cache: bad magic in " + path);
    CacheInfo info{};
    info.version = read_le<std::uint16_t>(in);
    info.dim = read_le<std::uint32_t>(in);
    info.count = read_le<std::uint64_t>(in);
    info.dtype = static_cast<CacheDtype>(read_le<std::uint8_t>(in));
    info.has_labels = static_cast<bool>(std::ifstream(labels_path(path)));
    return info;
}

}  // namespace semclip::tokens
