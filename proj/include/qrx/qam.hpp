// Gray-labelled square QAM with unit average power, hard demapping, and
// max-log soft demapping.
//
// Bit convention: M bits per symbol, MSB first; even-indexed bits select the
// I amplitude, odd-indexed bits the Q amplitude, each axis reflected-Gray
// coded. LLR sign convention throughout: LLR > 0 means bit 0 is more likely.

#pragma once

#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "qrx/tensor.hpp"

namespace qrx {

using cplx = std::complex<double>;

struct Constellation {
    int bits_per_symbol = 0;
    std::vector<cplx> points;  // indexed by the integer formed from MSB-first bits

    std::size_t size() const { return points.size(); }
};

namespace detail {

// Reflected-Gray decode: gray MSB-first -> binary index.
inline int gray_to_index(int gray, int bits) {
    int idx = 0;
    int acc = 0;
    for (int i = bits - 1; i >= 0; --i) {
        acc ^= (gray >> i) & 1;
        idx = (idx << 1) | acc;
    }
    return idx;
}

} // namespace detail

// M in {2, 4, 6}: QPSK, 16-QAM, 64-QAM.
inline Constellation make_constellation(int bits_per_symbol) {
    if (bits_per_symbol != 2 && bits_per_symbol != 4 && bits_per_symbol != 6)
        throw std::invalid_argument("unsupported modulation order M=" +
                                    std::to_string(bits_per_symbol));
    const int m_axis = bits_per_symbol / 2;
    const int levels = 1 << m_axis;
    // Per-axis mean square of {±1, ±3, ...} is (L^2 - 1)/3; two axes.
    const double norm = std::sqrt(2.0 * (levels * levels - 1) / 3.0);

    Constellation c;
    c.bits_per_symbol = bits_per_symbol;
    c.points.resize(std::size_t(1) << bits_per_symbol);
    for (std::size_t label = 0; label < c.points.size(); ++label) {
        int gray_i = 0, gray_q = 0;
        for (int b = 0; b < bits_per_symbol; ++b) {
            const int bit = (label >> (bits_per_symbol - 1 - b)) & 1;
            if (b % 2 == 0)
                gray_i = (gray_i << 1) | bit;
            else
                gray_q = (gray_q << 1) | bit;
        }
        const int gi = detail::gray_to_index(gray_i, m_axis);
        const int gq = detail::gray_to_index(gray_q, m_axis);
        const double amp_i = static_cast<double>(levels - 1 - 2 * gi);
        const double amp_q = static_cast<double>(levels - 1 - 2 * gq);
        c.points[label] = cplx(amp_i / norm, amp_q / norm);
    }
    return c;
}

inline std::vector<cplx> qam_map(std::span<const std::uint8_t> bits, const Constellation& c) {
    if (bits.size() % static_cast<std::size_t>(c.bits_per_symbol) != 0)
        throw std::invalid_argument("qam_map: bit count " + std::to_string(bits.size()) +
                                    " not divisible by M=" + std::to_string(c.bits_per_symbol));
    std::vector<cplx> out(bits.size() / c.bits_per_symbol);
    for (std::size_t s = 0; s < out.size(); ++s) {
        int label = 0;
        for (int b = 0; b < c.bits_per_symbol; ++b)
            label = (label << 1) | bits[s * c.bits_per_symbol + b];
        out[s] = c.points[static_cast<std::size_t>(label)];
    }
    return out;
}

inline void hard_demap(cplx x, const Constellation& c, std::uint8_t* bits_out) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < c.points.size(); ++p) {
        const double d = std::norm(x - c.points[p]);
        if (d < best_d) {
            best_d = d;
            best = p;
        }
    }
    for (int b = 0; b < c.bits_per_symbol; ++b)
        bits_out[b] = static_cast<std::uint8_t>((best >> (c.bits_per_symbol - 1 - b)) & 1);
}

// Max-log LLRs: LLR_i = (min_{bit_i=1} |x-p|^2 - min_{bit_i=0} |x-p|^2) / rho.
// rho is the post-equalization error variance; rho = +inf marks an erasure
// and yields all-zero LLRs.
inline void soft_demap(cplx x, double rho, const Constellation& c, double* llr_out) {
    if (!std::isfinite(rho)) {
        for (int b = 0; b < c.bits_per_symbol; ++b) llr_out[b] = 0.0;
        return;
    }
    double min0[8], min1[8];
    for (int b = 0; b < c.bits_per_symbol; ++b) {
        min0[b] = std::numeric_limits<double>::infinity();
        min1[b] = std::numeric_limits<double>::infinity();
    }
    for (std::size_t p = 0; p < c.points.size(); ++p) {
        const double d = std::norm(x - c.points[p]);
        for (int b = 0; b < c.bits_per_symbol; ++b) {
            if ((p >> (c.bits_per_symbol - 1 - b)) & 1) {
                if (d < min1[b]) min1[b] = d;
            } else {
                if (d < min0[b]) min0[b] = d;
            }
        }
    }
    for (int b = 0; b < c.bits_per_symbol; ++b) llr_out[b] = (min1[b] - min0[b]) / rho;
}

} // namespace qrx
