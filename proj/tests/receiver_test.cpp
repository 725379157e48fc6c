#include <gtest/gtest.h>

#include "qrx/link.hpp"

using namespace qrx;

namespace {

LinkConfig desk_cfg() {
    LinkConfig cfg;
    cfg.n_sym = 14;
    cfg.n_sc = 12;
    cfg.n_rx = 2;
    cfg.bits_per_symbol = 2;
    cfg.dmrs_symbols = {2, 11};
    return cfg;
}

ResourceGrid random_grid(const LinkConfig& cfg, Rng& rng) {
    const auto constellation = make_constellation(cfg.bits_per_symbol);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(cfg.payload_bits()));
    for (auto& b : bits) b = rng.bit();
    return build_grid(cfg, bits, constellation);
}

} // namespace

TEST(LsEstimate, ExactForConstantChannelWithoutNoise) {
    auto cfg = desk_cfg();
    Rng rng(31);
    auto grid = random_grid(cfg, rng);
    ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, 0.0);
    for (int rx = 0; rx < cfg.n_rx; ++rx)
        for (int n = 0; n < cfg.n_sym; ++n)
            for (int k = 0; k < cfg.n_sc; ++k) chan.at(rx, n, k) = cplx(0.8, -0.6 + 0.1 * rx);
    auto y = apply_channel(grid, chan, rng);
    auto est = ls_estimate(y, grid, cfg);
    for (std::size_t i = 0; i < chan.h.size(); ++i)
        EXPECT_NEAR(std::abs(est.h[i] - chan.h[i]), 0.0, 1e-12);
}

TEST(LsEstimate, ExactForTimeLinearChannelIncludingExtrapolation) {
    auto cfg = desk_cfg();
    Rng rng(37);
    auto grid = random_grid(cfg, rng);
    ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, 0.0);
    for (int rx = 0; rx < cfg.n_rx; ++rx)
        for (int n = 0; n < cfg.n_sym; ++n)
            for (int k = 0; k < cfg.n_sc; ++k) {
                // Linear in time, arbitrary per (rx, k).
                const cplx a(0.5 + 0.07 * k, -0.2 + 0.03 * rx);
                const cplx b(0.01 * k - 0.03, 0.02);
                chan.at(rx, n, k) = a + b * static_cast<double>(n);
            }
    auto y = apply_channel(grid, chan, rng);
    auto est = ls_estimate(y, grid, cfg);
    // Linear interpolation between the DMRS symbols and linear extrapolation
    // outside reproduce a linear field exactly at every symbol.
    for (std::size_t i = 0; i < chan.h.size(); ++i)
        EXPECT_NEAR(std::abs(est.h[i] - chan.h[i]), 0.0, 1e-10);
}

TEST(LsEstimate, PilotErrorVarianceMatchesSigma) {
    auto cfg = desk_cfg();
    cfg.n_sc = 300;
    cfg.n_rx = 1;
    const double sigma2 = 0.09;
    double err = 0.0;
    int count = 0;
    for (int trial = 0; trial < 40; ++trial) {
        Rng rng(600 + trial);
        auto grid = random_grid(cfg, rng);
        ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, sigma2);
        for (auto& h : chan.h) h = cplx(1.0, 0.0);
        auto y = apply_channel(grid, chan, rng);
        auto est = ls_estimate(y, grid, cfg);
        for (int sym : cfg.dmrs_symbols)
            for (int k = 0; k < cfg.n_sc; ++k) {
                err += std::norm(est.at(0, sym, k) - chan.at(0, sym, k));
                ++count;
            }
    }
    // Unit-modulus pilots: estimation error n/x has variance sigma^2.
    EXPECT_NEAR(err / count, sigma2, sigma2 * 0.05);
}

TEST(LmmseEqualize, HandEvaluatedCombining) {
    const cplx y[2] = {cplx(0.9, 0.1), cplx(1.1, -0.2)};
    const cplx h[2] = {cplx(1, 0), cplx(1, 0)};
    auto eq = lmmse_equalize(std::span<const cplx>(y, 2), std::span<const cplx>(h, 2), 1.0);
    const cplx expect = (y[0] + y[1]) / 3.0;
    EXPECT_NEAR(std::abs(eq.x_hat - expect), 0.0, 1e-15);
    EXPECT_NEAR(eq.rho, 1.0 / 3.0, 1e-15);
}

TEST(LmmseEqualize, ZeroForcingLimit) {
    Rng rng(41);
    const cplx x(M_SQRT1_2, -M_SQRT1_2);
    const cplx h[2] = {cplx(0.3, 0.8), cplx(-0.5, 0.2)};
    const cplx y[2] = {h[0] * x, h[1] * x};
    auto eq = lmmse_equalize(std::span<const cplx>(y, 2), std::span<const cplx>(h, 2), 1e-12);
    EXPECT_NEAR(std::abs(eq.x_hat - x), 0.0, 1e-9);
    EXPECT_LT(eq.rho, 1e-9);
}

TEST(LmmseEqualize, AllZeroEstimateIsErasure) {
    const cplx y[2] = {cplx(0.4, 0.1), cplx(-0.2, 0.6)};
    const cplx h[2] = {cplx(0, 0), cplx(0, 0)};
    auto eq = lmmse_equalize(std::span<const cplx>(y, 2), std::span<const cplx>(h, 2), 0.5);
    EXPECT_EQ(eq.x_hat, cplx(0, 0));
    EXPECT_TRUE(std::isinf(eq.rho));

    auto c = make_constellation(2);
    double llr[2];
    soft_demap(eq.x_hat, eq.rho, c, llr);
    EXPECT_DOUBLE_EQ(llr[0], 0.0);
    EXPECT_DOUBLE_EQ(llr[1], 0.0);
}

TEST(PerfectCsi, NoiselessLlrSignsRecoverBits) {
    auto cfg = desk_cfg();
    const auto constellation = make_constellation(cfg.bits_per_symbol);
    Rng rng(43);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(cfg.payload_bits()));
    for (auto& b : bits) b = rng.bit();
    auto grid = build_grid(cfg, bits, constellation);

    ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, 1e-9);
    for (auto& h : chan.h) h = cplx(rng.gaussian() * M_SQRT1_2, rng.gaussian() * M_SQRT1_2);
    auto y = apply_channel(grid, chan, rng);
    auto llrs = perfect_csi_receive(y, chan, grid, cfg, constellation);
    ASSERT_EQ(llrs.size(), bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        // LLR > 0 means bit 0.
        EXPECT_EQ(llrs[i] > 0 ? 0 : 1, bits[i]) << "bit " << i;
    }
}

TEST(Slot, TransmitDecodeRoundTripNoiseless) {
    auto cfg = desk_cfg();
    cfg.n_sc = 27;  // 12 data symbols x 27 sc x 2 bits = 648 = one codeword
    const auto constellation = make_constellation(cfg.bits_per_symbol);
    auto code = LdpcCode::from_alist("data/ldpc/n648_r12.alist");
    Rng rng(47);
    auto slot = transmit_slot(cfg, code, constellation, rng);
    EXPECT_EQ(slot.num_codewords, 1);
    EXPECT_EQ(static_cast<int>(slot.coded_bits.size()), cfg.payload_bits());

    ChannelRealization chan(cfg.n_rx, cfg.n_sym, cfg.n_sc, 1e-8);
    for (auto& h : chan.h) h = cplx(1.0, 0.0);
    auto y = apply_channel(slot.grid, chan, rng);
    auto llrs = ls_lmmse_receive(y, slot.grid, cfg, chan.noise_var, constellation);
    auto errors = decode_slot(slot, llrs, code);
    ASSERT_EQ(errors.size(), 1u);
    EXPECT_FALSE(errors[0]);
}

TEST(Slot, GridTooSmallForCodewordThrows) {
    auto cfg = desk_cfg();
    cfg.n_sc = 2;
    const auto constellation = make_constellation(cfg.bits_per_symbol);
    auto code = LdpcCode::from_alist("data/ldpc/n648_r12.alist");
    Rng rng(53);
    EXPECT_THROW(transmit_slot(cfg, code, constellation, rng), ConfigError);
}

TEST(Grid, PilotCellsAreUnitModulus) {
    auto cfg = desk_cfg();
    Rng rng(59);
    auto grid = random_grid(cfg, rng);
    int pilot_count = 0;
    for (int n = 0; n < cfg.n_sym; ++n)
        for (int k = 0; k < cfg.n_sc; ++k)
            if (grid.is_pilot(n, k)) {
                EXPECT_NEAR(std::abs(grid.at(n, k)), 1.0, 1e-12);
                ++pilot_count;
            }
    EXPECT_EQ(pilot_count, 2 * cfg.n_sc);
}

TEST(Grid, PayloadMappingRoundTrip) {
    auto cfg = desk_cfg();
    const auto constellation = make_constellation(cfg.bits_per_symbol);
    Rng rng(61);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(cfg.payload_bits()));
    for (auto& b : bits) b = rng.bit();
    auto grid = build_grid(cfg, bits, constellation);
    const auto cells = data_cells(cfg);
    std::vector<std::uint8_t> rec(bits.size());
    for (std::size_t r = 0; r < cells.size(); ++r)
        hard_demap(grid.at(cells[r].first, cells[r].second), constellation,
                   rec.data() + r * static_cast<std::size_t>(cfg.bits_per_symbol));
    EXPECT_EQ(rec, bits);
}

TEST(Grid, ConfigValidation) {
    LinkConfig cfg;
    cfg.dmrs_symbols = {99};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = LinkConfig{};
    cfg.bits_per_symbol = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = LinkConfig{};
    cfg.n_rx = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
