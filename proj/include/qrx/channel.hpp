// Tapped-delay-line fading with Jakes Doppler, generated directly in the
// frequency domain per resource element (the link model is post-FFT; CP and
// the time-domain waveform are not simulated).
//
// Each tap evolves as a sum-of-sinusoids Rayleigh process whose ensemble
// time autocorrelation is J0(2 pi f_D tau); an optional Rician tap adds a
// deterministic phasor with the configured K-factor. Tap delays are scaled
// so the profile realizes a requested RMS delay spread.

#pragma once

#include <optional>

#include "qrx/grid.hpp"

namespace qrx {

constexpr double kSpeedOfLight = 299792458.0;

struct ChannelTap {
    double delay_ns = 0.0;
    double power_db = 0.0;
    std::optional<double> k_factor_db;  // present on the (single) LoS tap
};

struct ChannelProfile {
    std::string name;
    std::vector<ChannelTap> taps;
    // Per-draw fading parameters; training and sweeps overwrite these.
    double rms_delay_spread_ns = 0.0;  // 0 keeps the profile's nominal delays
    double velocity_mps = 0.0;

    void validate() const {
        if (taps.empty()) throw ConfigError("channel profile '" + name + "' has no taps");
        int los = 0;
        for (const auto& t : taps) {
            if (t.delay_ns < 0) throw ConfigError("negative tap delay in profile '" + name + "'");
            if (t.k_factor_db) ++los;
        }
        if (los > 1) throw ConfigError("profile '" + name + "' has more than one LoS tap");
    }

    // Average tap powers normalized to unit total.
    std::vector<double> normalized_powers() const {
        std::vector<double> p;
        double total = 0.0;
        for (const auto& t : taps) {
            p.push_back(std::pow(10.0, t.power_db / 10.0));
            total += p.back();
        }
        for (auto& v : p) v /= total;
        return p;
    }

    double nominal_rms_ds_ns() const {
        const auto p = normalized_powers();
        double mean = 0.0, second = 0.0;
        for (std::size_t i = 0; i < taps.size(); ++i) {
            mean += p[i] * taps[i].delay_ns;
            second += p[i] * taps[i].delay_ns * taps[i].delay_ns;
        }
        return std::sqrt(std::max(0.0, second - mean * mean));
    }

    double max_doppler_hz(double carrier_hz) const {
        return velocity_mps * carrier_hz / kSpeedOfLight;
    }
};

struct ChannelRealization {
    int n_rx = 0;
    int n_sym = 0;
    int n_sc = 0;
    std::vector<cplx> h;  // (rx, sym, sc)
    double noise_var = 0.0;

    ChannelRealization() = default;
    ChannelRealization(int rx, int sym, int sc, double nv)
        : n_rx(rx), n_sym(sym), n_sc(sc),
          h(static_cast<std::size_t>(rx) * sym * sc), noise_var(nv) {}

    cplx& at(int rx, int sym, int sc) {
        return h[(static_cast<std::size_t>(rx) * n_sym + sym) * n_sc + sc];
    }
    cplx at(int rx, int sym, int sc) const {
        return h[(static_cast<std::size_t>(rx) * n_sym + sym) * n_sc + sc];
    }
};

struct ReceivedGrid {
    int n_rx = 0;
    int n_sym = 0;
    int n_sc = 0;
    std::vector<cplx> y;  // (rx, sym, sc)

    ReceivedGrid() = default;
    ReceivedGrid(int rx, int sym, int sc)
        : n_rx(rx), n_sym(sym), n_sc(sc), y(static_cast<std::size_t>(rx) * sym * sc) {}

    cplx& at(int rx, int sym, int sc) {
        return y[(static_cast<std::size_t>(rx) * n_sym + sym) * n_sc + sc];
    }
    cplx at(int rx, int sym, int sc) const {
        return y[(static_cast<std::size_t>(rx) * n_sym + sym) * n_sc + sc];
    }
};

namespace detail {

constexpr int kJakesSinusoids = 24;

// One tap's complex gain over the slot's symbol instants.
inline void jakes_series(double f_doppler, double amplitude, const LinkConfig& cfg, Rng& rng,
                         std::vector<cplx>& out) {
    const double t_sym = cfg.symbol_duration_s();
    double phase[kJakesSinusoids], omega[kJakesSinusoids];
    for (int i = 0; i < kJakesSinusoids; ++i) {
        const double arrival = rng.uniform(0.0, 2.0 * M_PI);
        omega[i] = 2.0 * M_PI * f_doppler * std::cos(arrival);
        phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double scale = amplitude / std::sqrt(static_cast<double>(kJakesSinusoids));
    out.resize(static_cast<std::size_t>(cfg.n_sym));
    for (int n = 0; n < cfg.n_sym; ++n) {
        const double t = n * t_sym;
        double re = 0.0, im = 0.0;
        for (int i = 0; i < kJakesSinusoids; ++i) {
            const double a = omega[i] * t + phase[i];
            re += std::cos(a);
            im += std::sin(a);
        }
        out[static_cast<std::size_t>(n)] = cplx(re * scale, im * scale);
    }
}

} // namespace detail

// sigma^2 = 1 / (10^(EbN0/10) * M * rate) with unit symbol energy. Pilot
// overhead is deliberately not charged to Eb; the same convention applies to
// every receiver, so comparisons stay fair.
inline double snr_to_noise_var(double ebn0_db, const LinkConfig& cfg) {
    return 1.0 /
           (std::pow(10.0, ebn0_db / 10.0) * cfg.bits_per_symbol * cfg.code_rate);
}

inline ChannelRealization generate_channel(const ChannelProfile& profile, const LinkConfig& cfg,
                                           double noise_var, Rng& rng) {
    profile.validate();
    const auto powers = profile.normalized_powers();
    const double f_d = profile.max_doppler_hz(cfg.carrier_hz);

    // Scale nominal delays to the requested RMS delay spread.
    const double nominal = profile.nominal_rms_ds_ns();
    const double delay_scale =
        (profile.rms_delay_spread_ns > 0.0 && nominal > 0.0)
            ? profile.rms_delay_spread_ns / nominal
            : 1.0;

    ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, noise_var);
    std::vector<cplx> series;
    std::vector<cplx> delay_phasor(static_cast<std::size_t>(cfg.n_sc));
    for (std::size_t tap = 0; tap < profile.taps.size(); ++tap) {
        const double tau_s = profile.taps[tap].delay_ns * delay_scale * 1e-9;
        for (int k = 0; k < cfg.n_sc; ++k) {
            const double ang = -2.0 * M_PI * (k * cfg.scs_hz) * tau_s;
            delay_phasor[static_cast<std::size_t>(k)] = cplx(std::cos(ang), std::sin(ang));
        }
        for (int rx = 0; rx < cfg.n_rx; ++rx) {
            if (profile.taps[tap].k_factor_db) {
                const double k_lin = std::pow(10.0, *profile.taps[tap].k_factor_db / 10.0);
                const double los_amp = std::sqrt(powers[tap] * k_lin / (k_lin + 1.0));
                const double nlos_amp = std::sqrt(powers[tap] / (k_lin + 1.0));
                detail::jakes_series(f_d, nlos_amp, cfg, rng, series);
                // Deterministic phasor at a random arrival angle and phase.
                const double arrival = rng.uniform(0.0, 2.0 * M_PI);
                const double w = 2.0 * M_PI * f_d * std::cos(arrival);
                const double phi = rng.uniform(0.0, 2.0 * M_PI);
                for (int n = 0; n < cfg.n_sym; ++n) {
                    const double a = w * n * cfg.symbol_duration_s() + phi;
                    series[static_cast<std::size_t>(n)] += los_amp * cplx(std::cos(a), std::sin(a));
                }
            } else {
                detail::jakes_series(f_d, std::sqrt(powers[tap]), cfg, rng, series);
            }
            for (int n = 0; n < cfg.n_sym; ++n) {
                const cplx g = series[static_cast<std::size_t>(n)];
                for (int k = 0; k < cfg.n_sc; ++k)
                    chan.at(rx, n, k) += g * delay_phasor[static_cast<std::size_t>(k)];
            }
        }
    }
    return chan;
}

// y = h x + n with circularly-symmetric complex Gaussian noise, i.i.d.
// across antennas and resource elements.
inline ReceivedGrid apply_channel(const ResourceGrid& grid, const ChannelRealization& chan,
                                  Rng& rng) {
    if (grid.n_sym != chan.n_sym || grid.n_sc != chan.n_sc)
        throw ConfigError("apply_channel: grid/channel dimension mismatch");
    ReceivedGrid out(chan.n_rx, chan.n_sym, chan.n_sc);
    const double noise_scale = std::sqrt(chan.noise_var / 2.0);
    for (int rx = 0; rx < chan.n_rx; ++rx)
        for (int n = 0; n < chan.n_sym; ++n)
            for (int k = 0; k < chan.n_sc; ++k) {
                const cplx noise(noise_scale * rng.gaussian(), noise_scale * rng.gaussian());
                out.at(rx, n, k) = chan.at(rx, n, k) * grid.at(n, k) + noise;
            }
    return out;
}

} // namespace qrx
