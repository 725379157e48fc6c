// OFDM link configuration and the time-frequency resource grid.
//
// DMRS symbols are full-band: every subcarrier of a DMRS symbol carries a
// known unit-modulus QPSK pilot. The pilot sequence is derived from
// LinkConfig::pilot_seed (not the per-run seed) so that a receiver trained
// under one seed sees the same pilots at evaluation time.

#pragma once

#include <algorithm>

#include "qrx/qam.hpp"
#include "qrx/rng.hpp"

namespace qrx {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LinkConfig {
    int n_sym = 14;
    int n_sc = 27;
    int n_rx = 2;
    int bits_per_symbol = 2;           // QPSK desk scale; 6 for the full-scale 64-QAM setup
    double code_rate = 0.5;
    std::vector<int> dmrs_symbols = {2, 11};  // 0-based; 3rd and 12th symbol
    double carrier_hz = 3.5e9;
    double scs_hz = 30e3;
    std::uint64_t pilot_seed = 0x70696c6f74ULL;

    void validate() const {
        if (n_sym < 1 || n_sc < 1) throw ConfigError("grid dimensions must be positive");
        if (n_rx < 1) throw ConfigError("n_rx must be >= 1");
        if (bits_per_symbol != 2 && bits_per_symbol != 4 && bits_per_symbol != 6)
            throw ConfigError("bits_per_symbol must be 2, 4 or 6");
        if (code_rate <= 0.0 || code_rate > 1.0) throw ConfigError("code rate must be in (0,1]");
        if (dmrs_symbols.empty()) throw ConfigError("at least one DMRS symbol required");
        for (int s : dmrs_symbols)
            if (s < 0 || s >= n_sym)
                throw ConfigError("DMRS symbol " + std::to_string(s) + " outside [0," +
                                  std::to_string(n_sym - 1) + "]");
        if (scs_hz <= 0 || carrier_hz <= 0) throw ConfigError("frequencies must be positive");
    }

    bool is_dmrs(int sym) const {
        return std::find(dmrs_symbols.begin(), dmrs_symbols.end(), sym) != dmrs_symbols.end();
    }

    int data_res() const {
        return (n_sym - static_cast<int>(dmrs_symbols.size())) * n_sc;
    }

    int payload_bits() const { return data_res() * bits_per_symbol; }

    double symbol_duration_s() const { return 1.0 / scs_hz; }  // CP not simulated
};

struct ResourceGrid {
    int n_sym = 0;
    int n_sc = 0;
    std::vector<cplx> symbols;             // (sym, sc) row-major
    std::vector<std::uint8_t> pilot_mask;  // 1 where the cell carries a pilot

    ResourceGrid() = default;
    ResourceGrid(int sym, int sc)
        : n_sym(sym), n_sc(sc), symbols(static_cast<std::size_t>(sym) * sc),
          pilot_mask(static_cast<std::size_t>(sym) * sc, 0) {}

    cplx& at(int sym, int sc) { return symbols[static_cast<std::size_t>(sym) * n_sc + sc]; }
    cplx at(int sym, int sc) const { return symbols[static_cast<std::size_t>(sym) * n_sc + sc]; }
    bool is_pilot(int sym, int sc) const {
        return pilot_mask[static_cast<std::size_t>(sym) * n_sc + sc] != 0;
    }
};

// Unit-modulus QPSK pilots, one value per (DMRS symbol, subcarrier).
inline std::vector<cplx> make_pilots(const LinkConfig& cfg) {
    Rng rng(cfg.pilot_seed, 0x70696c);
    std::vector<cplx> pilots(cfg.dmrs_symbols.size() * static_cast<std::size_t>(cfg.n_sc));
    const double r = 1.0 / std::sqrt(2.0);
    for (auto& p : pilots) {
        const double i = rng.bit() ? r : -r;
        const double q = rng.bit() ? r : -r;
        p = cplx(i, q);
    }
    return pilots;
}

// Data-carrying cells in scan order (symbol-major, skipping DMRS symbols).
inline std::vector<std::pair<int, int>> data_cells(const LinkConfig& cfg) {
    std::vector<std::pair<int, int>> cells;
    cells.reserve(static_cast<std::size_t>(cfg.data_res()));
    for (int n = 0; n < cfg.n_sym; ++n) {
        if (cfg.is_dmrs(n)) continue;
        for (int k = 0; k < cfg.n_sc; ++k) cells.emplace_back(n, k);
    }
    return cells;
}

// Maps coded bits onto the grid: bits [r*M, (r+1)*M) modulate data cell r.
inline ResourceGrid build_grid(const LinkConfig& cfg, std::span<const std::uint8_t> coded_bits,
                               const Constellation& constellation) {
    cfg.validate();
    if (static_cast<int>(coded_bits.size()) != cfg.payload_bits())
        throw ConfigError("build_grid: expected " + std::to_string(cfg.payload_bits()) +
                          " coded bits, got " + std::to_string(coded_bits.size()));
    if (constellation.bits_per_symbol != cfg.bits_per_symbol)
        throw ConfigError("build_grid: constellation order mismatch");

    ResourceGrid grid(cfg.n_sym, cfg.n_sc);
    const auto pilots = make_pilots(cfg);
    for (std::size_t d = 0; d < cfg.dmrs_symbols.size(); ++d) {
        const int sym = cfg.dmrs_symbols[d];
        for (int k = 0; k < cfg.n_sc; ++k) {
            grid.at(sym, k) = pilots[d * static_cast<std::size_t>(cfg.n_sc) + k];
            grid.pilot_mask[static_cast<std::size_t>(sym) * cfg.n_sc + k] = 1;
        }
    }
    const auto cells = data_cells(cfg);
    const auto syms = qam_map(coded_bits, constellation);
    for (std::size_t r = 0; r < cells.size(); ++r)
        grid.at(cells[r].first, cells[r].second) = syms[r];
    return grid;
}

} // namespace qrx
