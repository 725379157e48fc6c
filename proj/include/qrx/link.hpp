// End-to-end slot transmission: LDPC-encoded blocks mapped onto the grid.
// A slot carries floor(payload_bits / n) codewords; leftover data cells are
// filled with random bits that train the receiver but never count toward
// block errors.

#pragma once

#include "qrx/ldpc.hpp"
#include "qrx/receiver.hpp"

namespace qrx {

struct TxSlot {
    ResourceGrid grid;
    std::vector<std::uint8_t> info_bits;   // num_codewords * k
    std::vector<std::uint8_t> coded_bits;  // payload_bits, filler included
    int num_codewords = 0;
};

inline TxSlot transmit_slot(const LinkConfig& cfg, const LdpcCode& code,
                            const Constellation& constellation, Rng& rng) {
    const int payload = cfg.payload_bits();
    const int num_cw = payload / code.n();
    if (num_cw < 1)
        throw ConfigError("grid payload of " + std::to_string(payload) +
                          " bits cannot carry a length-" + std::to_string(code.n()) +
                          " codeword");
    TxSlot slot;
    slot.num_codewords = num_cw;
    slot.coded_bits.reserve(static_cast<std::size_t>(payload));
    for (int cw = 0; cw < num_cw; ++cw) {
        std::vector<std::uint8_t> info(static_cast<std::size_t>(code.k()));
        for (auto& b : info) b = rng.bit();
        const auto coded = code.encode(info);
        slot.info_bits.insert(slot.info_bits.end(), info.begin(), info.end());
        slot.coded_bits.insert(slot.coded_bits.end(), coded.begin(), coded.end());
    }
    while (static_cast<int>(slot.coded_bits.size()) < payload)
        slot.coded_bits.push_back(rng.bit());
    slot.grid = build_grid(cfg, slot.coded_bits, constellation);
    return slot;
}

// Decodes every codeword in the slot; a block errs when the recovered info
// bits differ from the transmitted ones (genie comparison, no CRC in scope).
inline std::vector<bool> decode_slot(const TxSlot& slot, std::span<const double> llrs,
                                     const LdpcCode& code, int max_iters = 25) {
    std::vector<bool> errors;
    for (int cw = 0; cw < slot.num_codewords; ++cw) {
        const auto res = code.decode(llrs.subspan(static_cast<std::size_t>(cw) * code.n(),
                                                  static_cast<std::size_t>(code.n())),
                                     max_iters);
        bool bad = false;
        for (int j = 0; j < code.k(); ++j)
            if (res.info_bits[static_cast<std::size_t>(j)] !=
                slot.info_bits[static_cast<std::size_t>(cw) * code.k() + j]) {
                bad = true;
                break;
            }
        errors.push_back(bad);
    }
    return errors;
}

} // namespace qrx
