#include "semclip/channel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace semclip::channel {

double ChannelFrame::power() const {
    if (symbols.empty()) return 0.0;
    double e = 0.0;
    for (const auto& z : symbols) e += std::norm(z);
    return e / static_cast<double>(symbols.size());
}

ChannelFrame pack_complex(const std::vector<double>& reals) {
    if (reals.size() % 2 != 0)
        throw std::invalid_argument("pack_complex: odd-length real vector");
    const std::size_t uses = reals.size() / 2;
    ChannelFrame frame;
    frame.symbols.resize(uses);
    for (std::size_t i = 0; i < uses; ++i)
        frame.symbols[i] = std::complex<double>(reals[i], reals[uses + i]);
    return frame;
}

std::vector<double> unpack_complex(const ChannelFrame& frame) {
    const std::size_t uses = frame.uses();
    std::vector<double> reals(2 * uses);
    for (std::size_t i = 0; i < uses; ++i) {
        reals[i] = frame.symbols[i].real();
        reals[uses + i] = frame.symbols[i].imag();
    }
    return reals;
}

ChannelFrame power_normalize(const ChannelFrame& frame, double power) {
    if (!(power > 0.0)) throw std::invalid_argument("power_normalize: power must be > 0");
    double energy = 0.0;
    for (const auto& z : frame.symbols) energy += std::norm(z);
    if (energy == 0.0) throw std::invalid_argument("power_normalize: zero frame");
    const double scale = std::sqrt(static_cast<double>(frame.uses()) * power / energy);
    ChannelFrame out;
    out.symbols.resize(frame.uses());
    for (std::size_t i = 0; i < frame.uses(); ++i) out.symbols[i] = frame.symbols[i] * scale;
    return out;
}

double snr_to_noise_variance(double snr_db, double power) {
    if (!(power > 0.0)) throw std::invalid_argument("snr_to_noise_variance: power must be > 0");
    return power * std::pow(10.0, -snr_db / 10.0);
}

ChannelFrame make_noise_frame(std::size_t uses, double noise_variance, Rng& stream) {
    ChannelFrame noise;
    noise.symbols.resize(uses);
    const double comp_sigma = std::sqrt(noise_variance / 2.0);
    for (auto& n : noise.symbols) {
        const double re = comp_sigma * stream.gaussian();
        const double im = comp_sigma * stream.gaussian();
        n = std::complex<double>(re, im);
    }
    return noise;
}

ChannelFrame add_noise(const ChannelFrame& frame, const ChannelFrame& noise) {
    if (noise.uses() != frame.uses()) throw std::invalid_argument("add_noise: length mismatch");
    ChannelFrame out = frame;
    for (std::size_t i = 0; i < out.uses(); ++i) out.symbols[i] += noise.symbols[i];
    return out;
}

ChannelFrame awgn_transmit(const ChannelFrame& frame, double noise_variance, Rng& stream) {
    if (noise_variance == 0.0) return frame;
    return add_noise(frame, make_noise_frame(frame.uses(), noise_variance, stream));
}

ChannelFrame awgn_transmit(const ChannelFrame& frame, const ChannelConfig& cfg) {
    Rng stream = Rng::derived(cfg.seed, 0xa36fULL);
    return awgn_transmit(frame, snr_to_noise_variance(cfg.snr_db, cfg.power), stream);
}

double bandwidth_ratio(std::size_t channel_uses, const tokens::ImageSpec& spec) {
    spec.validate();
    if (channel_uses == 0) throw std::invalid_argument("bandwidth_ratio: L must be positive");
    return static_cast<double>(channel_uses) / static_cast<double>(spec.pixel_count());
}

ProbeResult probe(const ChannelConfig& cfg, std::size_t symbols) {
    if (symbols == 0) throw std::invalid_argument("probe: need at least one symbol");
    const double sigma2 = snr_to_noise_variance(cfg.snr_db, cfg.power);
    Rng signal_stream = Rng::derived(cfg.seed, 0x51ULL);
    Rng noise_stream = Rng::derived(cfg.seed, 0xa36fULL);

    ChannelFrame sent;
    sent.symbols.resize(symbols);
    for (auto& z : sent.symbols) z = std::complex<double>(signal_stream.gaussian(), signal_stream.gaussian());
    sent = power_normalize(sent, cfg.power);

    const ChannelFrame received = awgn_transmit(sent, sigma2, noise_stream);

    double signal_energy = 0.0, noise_energy = 0.0, mean_re = 0.0, mean_im = 0.0;
    for (std::size_t i = 0; i < symbols; ++i) {
        const auto n = received.symbols[i] - sent.symbols[i];
        signal_energy += std::norm(sent.symbols[i]);
        noise_energy += std::norm(n);
        mean_re += n.real();
        mean_im += n.imag();
    }
    ProbeResult r{};
    r.snr_db_configured = cfg.snr_db;
    r.snr_db_measured =
        noise_energy > 0.0 ? 10.0 * std::log10(signal_energy / noise_energy)
                           : std::numeric_limits<double>::infinity();
    r.noise_mean_re = mean_re / static_cast<double>(symbols);
    r.noise_mean_im = mean_im / static_cast<double>(symbols);
    r.noise_variance_measured = noise_energy / static_cast<double>(symbols);
    r.symbols = symbols;
    return r;
}

}  // namespace semclip::channel
