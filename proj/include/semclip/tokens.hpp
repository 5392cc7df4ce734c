#ifndef SEMCLIP_TOKENS_HPP
#define SEMCLIP_TOKENS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace semclip::tokens {

struct ImageSpec {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t pixel_count() const { return height * width * channels; }
    void validate() const;
};

/// One N-dimensional semantic feature vector.
struct TokenVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

/// B token rows plus optional integer class labels.
struct TokenBatch {
    std::vector<TokenVector> rows;
    std::vector<int> labels;  // empty or size() == rows.size()

    std::size_t size() const { return rows.size(); }
    std::size_t dim() const { return rows.empty() ? 0 : rows.front().dim(); }
    bool has_labels() const { return !labels.empty(); }
    void validate(std::size_t num_classes = 0) const;
};

/// Deterministic stand-in for a frozen pretrained image encoder: a seeded
/// random affine projection of the raw pixels. Pure function of
/// (image, seed); any single-pixel change moves at least one output entry.
TokenVector toy_image_encoder(const std::vector<double>& image, const ImageSpec& spec,
                              std::size_t out_dim, std::uint64_t seed);

/// G unit-norm cluster centers plus per-class Gaussian samples around them.
/// Labels are [0..0, 1..1, ...], per_class entries each. Values are
/// f32-exact so caches round-trip bit-exactly.
TokenBatch synth_cluster_tokens(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                                double spread, std::uint64_t seed);

/// The centers used by synth_cluster_tokens for the same (G, N, seed).
std::vector<TokenVector> synth_cluster_centers(std::size_t num_classes, std::size_t dim,
                                               std::uint64_t seed);

TokenVector l2_normalize(const TokenVector& v);

enum class CacheDtype : std::uint8_t { f32 = 1, f64 = 2 };

/// FeatureCache binary format: magic "SCTK", version u16, N u32, count u64,
/// dtype u8, then count*N little-endian values (row-major). Labels, when
/// present, go to a plain-text sidecar at path + ".labels".
void save_feature_cache(const TokenBatch& batch, const std::string& path,
                        CacheDtype dtype = CacheDtype::f32);
TokenBatch load_feature_cache(const std::string& path, std::size_t expected_dim = 0);

struct CacheInfo {
    std::uint16_t version;
    std::uint32_t dim;
    std::uint64_t count;
    CacheDtype dtype;
    bool has_labels;
};
CacheInfo inspect_feature_cache(const std::string& path);

/// Adapter contract for a real pretrained encoder pair. The toy encoders
/// satisfy the same surfaces; nothing in the pipeline depends on a real
/// model being present.
class EncoderAdapter {
  public:
    virtual ~EncoderAdapter() = default;
    virtual std::size_t feature_dim() const = 0;
    virtual TokenBatch encode_images(const std::vector<std::vector<double>>& images,
                                     const ImageSpec& spec) = 0;
    virtual TokenVector encode_embedding_sequence(
        const std::vector<std::vector<double>>& sequence) = 0;
};

}  // namespace semclip::tokens

#endif
