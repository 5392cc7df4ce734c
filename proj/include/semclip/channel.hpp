#ifndef SEMCLIP_CHANNEL_HPP
#define SEMCLIP_CHANNEL_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "semclip/tokens.hpp"
#include "semclip/util.hpp"

namespace semclip::channel {

/// L complex channel symbols for one item. Per-item power is |z|^2 / L.
struct ChannelFrame {
    std::vector<std::complex<double>> symbols;

    std::size_t uses() const { return symbols.size(); }
    double power() const;
};

struct ChannelConfig {
    double snr_db = 0.0;
    double power = 1.0;
    std::uint64_t seed = 0;
};

/// First L reals become real parts, last L imaginary parts. Isometric.
ChannelFrame pack_complex(const std::vector<double>& reals);
std::vector<double> unpack_complex(const ChannelFrame& frame);

/// Scale so the per-item power equals P exactly: z * sqrt(L*P) / |z|.
ChannelFrame power_normalize(const ChannelFrame& frame, double power);

/// sigma^2 = P * 10^(-mu/10).
double snr_to_noise_variance(double snr_db, double power);

/// z_hat = z + n with n_i ~ CN(0, sigma^2): each real component gets
/// variance sigma^2 / 2. Draw order per symbol is (re, im).
ChannelFrame awgn_transmit(const ChannelFrame& frame, double noise_variance, Rng& stream);
ChannelFrame awgn_transmit(const ChannelFrame& frame, const ChannelConfig& cfg);

/// Pre-drawn noise frame for gradient checks and per-step training noise.
ChannelFrame make_noise_frame(std::size_t uses, double noise_variance, Rng& stream);
ChannelFrame add_noise(const ChannelFrame& frame, const ChannelFrame& noise);

/// R = L / (C * W * H).
double bandwidth_ratio(std::size_t channel_uses, const tokens::ImageSpec& spec);

struct ProbeResult {
    double snr_db_configured;
    double snr_db_measured;
    double noise_mean_re;
    double noise_mean_im;
    double noise_variance_measured;
    std::size_t symbols;
};

/// Monte-Carlo estimate of the realized SNR and noise moments over n
/// normalized random symbols.
ProbeResult probe(const ChannelConfig& cfg, std::size_t symbols);

}  // namespace semclip::channel

#endif
