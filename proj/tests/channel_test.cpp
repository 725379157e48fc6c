#include <gtest/gtest.h>

#include "qrx/channel.hpp"

using namespace qrx;

namespace {

LinkConfig small_cfg() {
    LinkConfig cfg;
    cfg.n_sym = 14;
    cfg.n_sc = 12;
    cfg.n_rx = 1;
    cfg.dmrs_symbols = {2, 11};
    return cfg;
}

ChannelProfile single_tap() {
    ChannelProfile p;
    p.name = "flat";
    p.taps = {{0.0, 0.0, std::nullopt}};
    return p;
}

ChannelProfile three_tap() {
    ChannelProfile p;
    p.name = "multi";
    p.taps = {{0.0, 0.0, std::nullopt}, {120.0, -3.0, std::nullopt}, {350.0, -9.0, std::nullopt}};
    p.rms_delay_spread_ns = 80.0;
    return p;
}

} // namespace

TEST(SnrToNoiseVar, FormulaCases) {
    LinkConfig qpsk_uncoded;
    qpsk_uncoded.bits_per_symbol = 2;
    qpsk_uncoded.code_rate = 1.0;
    EXPECT_NEAR(snr_to_noise_var(0.0, qpsk_uncoded), 0.5, 1e-12);
    EXPECT_NEAR(snr_to_noise_var(10.0, qpsk_uncoded), 0.05, 1e-12);

    LinkConfig qam64;
    qam64.bits_per_symbol = 6;
    qam64.code_rate = 0.5;
    EXPECT_NEAR(snr_to_noise_var(0.0, qam64), 1.0 / 3.0, 1e-12);
}

TEST(Profile, NormalizationAndValidation) {
    auto p = three_tap();
    auto powers = p.normalized_powers();
    double total = 0;
    for (double v : powers) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);

    ChannelProfile two_los;
    two_los.name = "bad";
    two_los.taps = {{0.0, 0.0, 10.0}, {50.0, -3.0, 5.0}};
    EXPECT_THROW(two_los.validate(), ConfigError);
}

TEST(Profile, RmsDelaySpreadMatchesHandComputation) {
    ChannelProfile p;
    p.name = "hand";
    p.taps = {{0.0, 0.0, std::nullopt}, {100.0, 0.0, std::nullopt}};
    // Equal powers at 0 and 100 ns: mean 50, rms spread 50.
    EXPECT_NEAR(p.nominal_rms_ds_ns(), 50.0, 1e-9);
}

TEST(Channel, StaticFlatFadingIsConstantAndRayleigh) {
    auto cfg = small_cfg();
    auto profile = single_tap();  // v = 0
    double mean_sq = 0.0;
    int below_median = 0;
    const int n_draws = 4000;
    for (int i = 0; i < n_draws; ++i) {
        Rng rng(1000 + i);
        auto chan = generate_channel(profile, cfg, 0.1, rng);
        const cplx h0 = chan.at(0, 0, 0);
        for (int n = 0; n < cfg.n_sym; ++n)
            for (int k = 0; k < cfg.n_sc; ++k)
                ASSERT_NEAR(std::abs(chan.at(0, n, k) - h0), 0.0, 1e-9);
        mean_sq += std::norm(h0);
        if (std::norm(h0) < std::log(2.0)) ++below_median;  // Exp(1) median
    }
    EXPECT_NEAR(mean_sq / n_draws, 1.0, 0.05);
    EXPECT_NEAR(static_cast<double>(below_median) / n_draws, 0.5, 0.03);
}

TEST(Channel, ZeroVelocityMultiTapVariesOnlyInFrequency) {
    auto cfg = small_cfg();
    auto profile = three_tap();  // velocity 0
    Rng rng(7);
    auto chan = generate_channel(profile, cfg, 0.1, rng);
    for (int k = 0; k < cfg.n_sc; ++k)
        for (int n = 1; n < cfg.n_sym; ++n)
            ASSERT_NEAR(std::abs(chan.at(0, n, k) - chan.at(0, 0, k)), 0.0, 1e-9);
    // Frequency selectivity: some pair of subcarriers differs noticeably.
    double max_diff = 0.0;
    for (int k = 1; k < cfg.n_sc; ++k)
        max_diff = std::max(max_diff, std::abs(chan.at(0, k, 0) - chan.at(0, 0, k)));
    EXPECT_GT(max_diff, 1e-3);
}

TEST(Channel, JakesAutocorrelationMatchesBesselOracle) {
    LinkConfig cfg;
    cfg.n_sym = 41;
    cfg.n_sc = 1;
    cfg.n_rx = 1;
    cfg.dmrs_symbols = {0};
    cfg.scs_hz = 30e3;
    auto profile = single_tap();
    // f_D such that tau * f_D spans [0, 2] across the slot.
    const double f_d = 2.0 / (40.0 * cfg.symbol_duration_s());
    profile.velocity_mps = f_d * kSpeedOfLight / cfg.carrier_hz;

    const int n_real = 3000;
    std::vector<cplx> acc(static_cast<std::size_t>(cfg.n_sym), cplx(0, 0));
    for (int r = 0; r < n_real; ++r) {
        Rng rng(5000 + r);
        auto chan = generate_channel(profile, cfg, 0.1, rng);
        const cplx ref = std::conj(chan.at(0, 0, 0));
        for (int n = 0; n < cfg.n_sym; ++n)
            acc[static_cast<std::size_t>(n)] += chan.at(0, n, 0) * ref;
    }
    for (int n = 0; n < cfg.n_sym; ++n) {
        const double measured = acc[static_cast<std::size_t>(n)].real() / n_real;
        const double expected =
            std::cyl_bessel_j(0.0, 2.0 * M_PI * f_d * n * cfg.symbol_duration_s());
        EXPECT_NEAR(measured, expected, 0.06) << "lag " << n;
    }
}

TEST(ApplyChannel, NoiselessIdentityChannelReturnsInput) {
    auto cfg = small_cfg();
    ResourceGrid grid(cfg.n_sym, cfg.n_sc);
    Rng rng(3);
    for (auto& s : grid.symbols) s = cplx(rng.gaussian(), rng.gaussian());
    ChannelRealization chan(1, cfg.n_sym, cfg.n_sc, 0.0);
    for (auto& h : chan.h) h = cplx(1.0, 0.0);
    auto y = apply_channel(grid, chan, rng);
    for (std::size_t i = 0; i < grid.symbols.size(); ++i)
        EXPECT_NEAR(std::abs(y.y[i] - grid.symbols[i]), 0.0, 1e-15);
}

TEST(ApplyChannel, ZeroGridYieldsPureNoiseAtConfiguredVariance) {
    LinkConfig cfg;
    cfg.n_sym = 100;
    cfg.n_sc = 100;
    cfg.n_rx = 1;
    cfg.dmrs_symbols = {0};
    ResourceGrid grid(cfg.n_sym, cfg.n_sc);  // all zeros
    ChannelRealization chan(1, cfg.n_sym, cfg.n_sc, 0.36);
    for (auto& h : chan.h) h = cplx(0.7, -0.4);
    Rng rng(11);
    auto y = apply_channel(grid, chan, rng);
    double var = 0.0;
    for (const auto& v : y.y) var += std::norm(v);
    var /= static_cast<double>(y.y.size());
    EXPECT_NEAR(var, 0.36, 0.36 * 0.03);
}

TEST(ApplyChannel, ResidualVarianceMatchesSigmaWithinOnePercent) {
    LinkConfig cfg;
    cfg.n_sym = 1000;
    cfg.n_sc = 1000;  // 1e6 resource elements
    cfg.n_rx = 1;
    cfg.dmrs_symbols = {0};
    ResourceGrid grid(cfg.n_sym, cfg.n_sc);
    Rng rng(13);
    for (auto& s : grid.symbols) {
        const double re = rng.bit() ? M_SQRT1_2 : -M_SQRT1_2;
        const double im = rng.bit() ? M_SQRT1_2 : -M_SQRT1_2;
        s = cplx(re, im);
    }
    const double sigma2 = 0.25;
    ChannelRealization chan(1, cfg.n_sym, cfg.n_sc, sigma2);
    for (auto& h : chan.h) h = cplx(0.9, 0.3);
    auto y = apply_channel(grid, chan, rng);
    double var = 0.0;
    for (std::size_t i = 0; i < y.y.size(); ++i)
        var += std::norm(y.y[i] - chan.h[i] * grid.symbols[i]);
    var /= static_cast<double>(y.y.size());
    EXPECT_NEAR(var, sigma2, sigma2 * 0.01);
}

TEST(Channel, RicianTapConcentratesAroundLosAmplitude) {
    auto cfg = small_cfg();
    ChannelProfile p;
    p.name = "los";
    p.taps = {{0.0, 0.0, 20.0}};  // K = 100: nearly deterministic magnitude
    double mean_mag = 0.0, var_mag = 0.0;
    const int n_draws = 500;
    std::vector<double> mags;
    for (int i = 0; i < n_draws; ++i) {
        Rng rng(900 + i);
        auto chan = generate_channel(p, cfg, 0.1, rng);
        mags.push_back(std::abs(chan.at(0, 0, 0)));
        mean_mag += mags.back();
    }
    mean_mag /= n_draws;
    for (double m : mags) var_mag += (m - mean_mag) * (m - mean_mag);
    var_mag /= n_draws;
    EXPECT_NEAR(mean_mag, 1.0, 0.05);
    EXPECT_LT(var_mag, 0.02);  // far tighter than Rayleigh's variance
}
