// Classical receive chain: LS channel estimation from DMRS, MRC-LMMSE
// equalization, max-log soft demapping. The perfect-CSI variant runs the
// same equalizer on the true channel and provides the oracle baseline.

#pragma once

#include "qrx/channel.hpp"

namespace qrx {

// LS at pilot cells (h = y / x), linear interpolation across frequency
// within a pilot symbol, then linear interpolation across time between DMRS
// symbols with linear extrapolation outside (hold when only one DMRS symbol
// exists). Linear-in-time channels are therefore reproduced exactly at
// every symbol.
inline ChannelRealization ls_estimate(const ReceivedGrid& y, const ResourceGrid& grid,
                                      const LinkConfig& cfg) {
    cfg.validate();
    std::vector<int> psym = cfg.dmrs_symbols;
    std::sort(psym.begin(), psym.end());
    const int n_p = static_cast<int>(psym.size());

    ChannelRealization est(y.n_rx, y.n_sym, y.n_sc, 0.0);
    // Per pilot symbol: raw LS estimates, then frequency interpolation.
    std::vector<std::vector<cplx>> pilot_rows(
        static_cast<std::size_t>(y.n_rx) * n_p,
        std::vector<cplx>(static_cast<std::size_t>(y.n_sc)));
    for (int rx = 0; rx < y.n_rx; ++rx) {
        for (int p = 0; p < n_p; ++p) {
            auto& row = pilot_rows[static_cast<std::size_t>(rx) * n_p + p];
            const int sym = psym[static_cast<std::size_t>(p)];
            std::vector<int> known;
            for (int k = 0; k < y.n_sc; ++k) {
                if (grid.is_pilot(sym, k)) {
                    row[static_cast<std::size_t>(k)] = y.at(rx, sym, k) / grid.at(sym, k);
                    known.push_back(k);
                }
            }
            if (known.empty())
                throw ConfigError("ls_estimate: DMRS symbol " + std::to_string(sym) +
                                  " carries no pilots");
            for (int k = 0; k < y.n_sc; ++k) {
                if (grid.is_pilot(sym, k)) continue;
                const auto it = std::lower_bound(known.begin(), known.end(), k);
                if (it == known.begin()) {
                    row[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(known.front())];
                } else if (it == known.end()) {
                    row[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(known.back())];
                } else {
                    const int hi = *it, lo = *(it - 1);
                    const double w = static_cast<double>(k - lo) / (hi - lo);
                    row[static_cast<std::size_t>(k)] =
                        (1.0 - w) * row[static_cast<std::size_t>(lo)] +
                        w * row[static_cast<std::size_t>(hi)];
                }
            }
        }
        // Time axis: piecewise linear between pilot symbols, linearly
        // extrapolated outside the pilot span.
        for (int n = 0; n < y.n_sym; ++n) {
            int seg = 0;
            if (n_p >= 2) {
                while (seg < n_p - 2 && n > psym[static_cast<std::size_t>(seg + 1)]) ++seg;
            }
            for (int k = 0; k < y.n_sc; ++k) {
                if (n_p == 1) {
                    est.at(rx, n, k) = pilot_rows[static_cast<std::size_t>(rx) * n_p][k];
                    continue;
                }
                const int t0 = psym[static_cast<std::size_t>(seg)];
                const int t1 = psym[static_cast<std::size_t>(seg + 1)];
                const cplx h0 = pilot_rows[static_cast<std::size_t>(rx) * n_p + seg][k];
                const cplx h1 = pilot_rows[static_cast<std::size_t>(rx) * n_p + seg + 1][k];
                const double w = static_cast<double>(n - t0) / (t1 - t0);
                est.at(rx, n, k) = (1.0 - w) * h0 + w * h1;
            }
        }
    }
    return est;
}

struct Equalized {
    cplx x_hat;
    double rho;  // post-equalization error variance E|x_hat - x|^2
};

// MRC-LMMSE combining: x_hat = h^H y / (h^H h + sigma^2). The matching
// demapper noise term is rho = sigma^2 / (h^H h + sigma^2), which equals the
// LMMSE mean-square error for unit-energy symbols; for constant-modulus
// constellations the resulting max-log LLRs are exact. An all-zero estimate
// is an erasure: x_hat = 0, rho = +inf.
inline Equalized lmmse_equalize(std::span<const cplx> y, std::span<const cplx> h,
                                double noise_var) {
    double g = 0.0;
    cplx num(0.0, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) {
        g += std::norm(h[i]);
        num += std::conj(h[i]) * y[i];
    }
    if (g == 0.0) return {cplx(0.0, 0.0), std::numeric_limits<double>::infinity()};
    return {num / (g + noise_var), noise_var / (g + noise_var)};
}

// LLRs for every payload bit position (scan order, M per data cell).
inline std::vector<double> equalize_and_demap(const ReceivedGrid& y,
                                              const ChannelRealization& csi,
                                              const ResourceGrid& grid, const LinkConfig& cfg,
                                              const Constellation& constellation) {
    const auto cells = data_cells(cfg);
    std::vector<double> llrs(cells.size() * static_cast<std::size_t>(cfg.bits_per_symbol));
    std::vector<cplx> yv(static_cast<std::size_t>(cfg.n_rx));
    std::vector<cplx> hv(static_cast<std::size_t>(cfg.n_rx));
    for (std::size_t r = 0; r < cells.size(); ++r) {
        const auto [n, k] = cells[r];
        for (int rx = 0; rx < cfg.n_rx; ++rx) {
            yv[static_cast<std::size_t>(rx)] = y.at(rx, n, k);
            hv[static_cast<std::size_t>(rx)] = csi.at(rx, n, k);
        }
        const Equalized eq = lmmse_equalize(yv, hv, csi.noise_var);
        soft_demap(eq.x_hat, eq.rho, constellation,
                   llrs.data() + r * static_cast<std::size_t>(cfg.bits_per_symbol));
    }
    return llrs;
}

inline std::vector<double> ls_lmmse_receive(const ReceivedGrid& y, const ResourceGrid& grid,
                                            const LinkConfig& cfg, double noise_var,
                                            const Constellation& constellation) {
    ChannelRealization est = ls_estimate(y, grid, cfg);
    est.noise_var = noise_var;
    return equalize_and_demap(y, est, grid, cfg, constellation);
}

inline std::vector<double> perfect_csi_receive(const ReceivedGrid& y,
                                               const ChannelRealization& chan,
                                               const ResourceGrid& grid, const LinkConfig& cfg,
                                               const Constellation& constellation) {
    return equalize_and_demap(y, chan, grid, cfg, constellation);
}

} // namespace qrx
