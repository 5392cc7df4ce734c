#ifndef SEMCLIP_UTIL_HPP
#define SEMCLIP_UTIL_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace semclip {

/// splitmix64 finalizer; used wherever a stateless, position-addressable
/// pseudo-random value is needed (toy encoder weights, word embeddings).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// mix64 of a (seed, a, b) triple, for 2-D indexed weight tables.
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(mix64(seed) ^ a) ^ b);
}

/// Map a 64-bit hash to a double in [-1, 1).
inline double hash_to_signed_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

/// Seeded random stream. Gaussian draws use the Marsaglia polar method so
/// the sequence is fully determined by the seed, independent of the
/// standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double w = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * w;
        have_spare_ = true;
        return u * w;
    }

    std::uint64_t next_u64() { return gen_(); }

    /// k distinct indices from [0, n), partial Fisher-Yates.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

    /// Independent stream keyed by (seed, tag, index); sweep cells use
    /// disjoint reproducible streams derived this way.
    static Rng derived(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
        return Rng(mix64(seed, tag, index));
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// FNV-1a over a byte range; the project-wide stable hash for configs,
/// checkpoints, and manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

/// Round to the nearest f32-representable value. Parameters and generated
/// token data are kept f32-exact so the f32-LE file formats round-trip
/// bit-exactly.
inline double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string hex_u64(std::uint64_t v);

/// Solve A x = b (dense, square) by Gaussian elimination with partial
/// pivoting. Throws on singular A.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& v);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace semclip

#endif
