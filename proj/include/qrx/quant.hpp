// Fake quantization with learnable clipping bounds.
//
// Forward: x -> clamp(x, alpha, beta) -> round(x_c / s) -> clamp to the
// signed integer range -> s * code, with s = (beta - alpha) / (q_max - q_min)
// and an implicit zero zero-point. Rounding is round-half-to-even; the
// post-round integer clamp makes the operator total for arbitrary (alpha,
// beta) whose dequantized grid does not land on the bounds exactly.
//
// Backward uses the straight-through estimator:
//   d/dx     -> 1{alpha <= x <= beta}
//   d/dalpha -> 1{x < alpha}
//   d/dbeta  -> 1{x > beta}
// so the bound gradients collect upstream signal only from clipped elements.

#pragma once

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <tuple>

#include "qrx/tensor.hpp"

namespace qrx {

struct QuantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Granularity : std::uint8_t { PerTensor = 0, PerChannel = 1 };

struct QuantSpec {
    int bitwidth = 8;
    Granularity granularity = Granularity::PerTensor;

    void validate() const {
        if (bitwidth < 2 || bitwidth > 16)
            throw QuantError("bitwidth must be in [2,16], got " + std::to_string(bitwidth));
    }

    std::int32_t q_min() const { return -(std::int32_t(1) << (bitwidth - 1)); }
    std::int32_t q_max() const { return (std::int32_t(1) << (bitwidth - 1)) - 1; }
    std::int32_t levels() const { return q_max() - q_min(); }
};

template <typename T>
inline T clip(T x, T alpha, T beta) {
    return std::max(alpha, std::min(x, beta));
}

// Learnable clipping interval per tensor or per output channel (axis 0).
template <typename T>
struct FakeQuantizer {
    QuantSpec spec;
    std::vector<T> alpha;  // size 1 (per-tensor) or channel count
    std::vector<T> beta;   // same arity as alpha

    std::size_t groups() const { return alpha.size(); }

    T scale(std::size_t g) const {
        return (beta[g] - alpha[g]) / static_cast<T>(spec.levels());
    }

    void validate() const {
        spec.validate();
        if (alpha.empty() || alpha.size() != beta.size())
            throw QuantError("quantizer bounds arity mismatch");
        if (spec.granularity == Granularity::PerTensor && alpha.size() != 1)
            throw QuantError("per-tensor quantizer must carry a single (alpha, beta)");
        for (std::size_t g = 0; g < alpha.size(); ++g)
            if (!(beta[g] > alpha[g]))
                throw QuantError("quantizer invariant beta > alpha violated in group " +
                                 std::to_string(g));
    }

    // Number of leading-axis elements each (alpha, beta) group covers.
    std::int64_t group_extent(const Tensor<T>& x) const {
        if (spec.granularity == Granularity::PerTensor) return x.numel();
        if (x.shape.empty() || x.shape[0] != static_cast<std::int64_t>(groups()))
            throw QuantError("per-channel quantizer with " + std::to_string(groups()) +
                             " groups applied to tensor of shape " + shape_str(x.shape));
        return x.numel() / x.shape[0];
    }
};

namespace detail {

// Half-to-even rounding. nearbyint honours the default FE_TONEAREST mode.
template <typename T>
inline T round_half_even(T x) {
    return std::nearbyint(x);
}

} // namespace detail

template <typename T>
inline std::int32_t quantize_code(T x, T alpha, T beta, T s, const QuantSpec& spec) {
    const T xc = clip(x, alpha, beta);
    const T t = detail::round_half_even(xc / s);
    std::int32_t code = static_cast<std::int32_t>(t);
    return std::clamp(code, spec.q_min(), spec.q_max());
}

template <typename T>
Tensor<T> fake_quant_forward(const Tensor<T>& x, const FakeQuantizer<T>& q) {
    q.validate();
    const std::int64_t ext = q.group_extent(x);
    Tensor<T> out(x.shape);
    for (std::size_t g = 0; g < q.groups(); ++g) {
        const T a = q.alpha[g];
        const T b = q.beta[g];
        const T s = q.scale(g);
        const std::int64_t base = static_cast<std::int64_t>(g) * ext;
        for (std::int64_t i = 0; i < ext; ++i) {
            out.data[base + i] = s * static_cast<T>(quantize_code(x.data[base + i], a, b, s, q.spec));
        }
    }
    return out;
}

template <typename T>
struct SteGrads {
    Tensor<T> x;            // same shape as input
    std::vector<T> alpha;   // per group
    std::vector<T> beta;    // per group
};

// Boundary x == alpha or x == beta counts as pass-through: it contributes to
// grad_x and to neither bound gradient.
template <typename T>
SteGrads<T> fake_quant_backward(const Tensor<T>& upstream, const Tensor<T>& x,
                                const FakeQuantizer<T>& q) {
    require_same_shape(upstream.shape, x.shape, "fake_quant_backward");
    const std::int64_t ext = q.group_extent(x);
    SteGrads<T> g;
    g.x = Tensor<T>(x.shape);
    g.alpha.assign(q.groups(), T(0));
    g.beta.assign(q.groups(), T(0));
    for (std::size_t gi = 0; gi < q.groups(); ++gi) {
        const T a = q.alpha[gi];
        const T b = q.beta[gi];
        const std::int64_t base = static_cast<std::int64_t>(gi) * ext;
        for (std::int64_t i = 0; i < ext; ++i) {
            const T xi = x.data[base + i];
            const T up = upstream.data[base + i];
            if (xi < a) {
                g.alpha[gi] += up;
            } else if (xi > b) {
                g.beta[gi] += up;
            } else {
                g.x.data[base + i] = up;
            }
        }
    }
    return g;
}

// Min/max calibration. Degenerate groups (min == max) widen symmetrically so
// the invariant beta > alpha survives.
template <typename T>
FakeQuantizer<T> calibrate_ptq(const Tensor<T>& w, const QuantSpec& spec) {
    spec.validate();
    if (w.numel() == 0) throw QuantError("calibrate_ptq: empty tensor");
    FakeQuantizer<T> q;
    q.spec = spec;
    const std::size_t n_groups =
        spec.granularity == Granularity::PerTensor ? 1 : static_cast<std::size_t>(w.shape.at(0));
    const std::int64_t ext = w.numel() / static_cast<std::int64_t>(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::int64_t base = static_cast<std::int64_t>(g) * ext;
        T lo = w.data[base];
        T hi = w.data[base];
        for (std::int64_t i = 1; i < ext; ++i) {
            lo = std::min(lo, w.data[base + i]);
            hi = std::max(hi, w.data[base + i]);
        }
        if (lo == hi) {
            // 1e-8 floor, raised to the representable spacing at |v| so the
            // widened interval stays strict in the working precision.
            const T v = lo;
            T widen = std::max(T(1e-8), std::abs(v) * std::numeric_limits<T>::epsilon() * T(4));
            while (!(v + widen > v - widen)) widen *= T(2);
            lo = v - widen;
            hi = v + widen;
        }
        q.alpha.push_back(lo);
        q.beta.push_back(hi);
    }
    q.validate();
    return q;
}

// Expands (alpha, beta) outward so the dequantization grid s*[q_min, q_max]
// covers the whole clipping interval: s' = max(beta/q_max, alpha/q_min),
// alpha' = s'*q_min, beta' = s'*q_max. Min/max-calibrated bounds are
// generally asymmetric, and with a zero zero-point the raw grid would clamp
// away the wider tail; aligned bounds keep fine bitwidths near-lossless.
template <typename T>
FakeQuantizer<T> grid_aligned(const FakeQuantizer<T>& q) {
    FakeQuantizer<T> out = q;
    const T qmin = static_cast<T>(q.spec.q_min());
    const T qmax = static_cast<T>(q.spec.q_max());
    for (std::size_t g = 0; g < q.groups(); ++g) {
        T s = std::max(q.beta[g] / qmax, q.alpha[g] / qmin);
        // Round-off can land the grid one ULP inside the interval.
        while (s * qmax < q.beta[g] || s * qmin > q.alpha[g])
            s = std::nextafter(s, std::numeric_limits<T>::infinity());
        out.alpha[g] = s * qmin;
        out.beta[g] = s * qmax;
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Packed low-bit weight container ("QRXW").
//
// Layout: magic "QRXW", version byte, bitwidth byte, granularity byte, rank
// byte, u32 extents, u32 group count, float32 alpha[] and beta[], then codes
// offset by -q_min and packed LSB-first into bytes (b=4: low nibble first,
// b=8: raw bytes). unpack() reproduces fake_quant_forward(w) bit-exactly.
// ---------------------------------------------------------------------------

struct PackedWeights {
    QuantSpec spec;
    Shape shape;
    std::vector<float> alpha;
    std::vector<float> beta;
    std::vector<std::uint8_t> payload;

    std::int64_t numel() const { return shape_numel(shape); }

    std::size_t payload_bits() const {
        return static_cast<std::size_t>(numel()) * static_cast<std::size_t>(spec.bitwidth);
    }

    std::size_t byte_size() const {
        return 8 + 4 * shape.size() + 4 + 8 * alpha.size() + payload.size();
    }
};

namespace detail {

class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void put(std::uint32_t value, int bits) {
        acc_ |= static_cast<std::uint64_t>(value & ((1u << bits) - 1u)) << fill_;
        fill_ += bits;
        while (fill_ >= 8) {
            out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
            acc_ >>= 8;
            fill_ -= 8;
        }
    }

    void flush() {
        if (fill_ > 0) {
            out_.push_back(static_cast<std::uint8_t>(acc_ & 0xff));
            acc_ = 0;
            fill_ = 0;
        }
    }

private:
    std::vector<std::uint8_t>& out_;
    std::uint64_t acc_ = 0;
    int fill_ = 0;
};

class BitReader {
public:
    explicit BitReader(const std::vector<std::uint8_t>& in) : in_(in) {}

    std::uint32_t get(int bits) {
        while (fill_ < bits) {
            if (pos_ >= in_.size()) throw QuantError("packed payload truncated");
            acc_ |= static_cast<std::uint64_t>(in_[pos_++]) << fill_;
            fill_ += 8;
        }
        const std::uint32_t v = static_cast<std::uint32_t>(acc_ & ((1u << bits) - 1u));
        acc_ >>= bits;
        fill_ -= bits;
        return v;
    }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
    std::uint64_t acc_ = 0;
    int fill_ = 0;
};

} // namespace detail

// wq must be the output of fake_quant_forward under q; anything off the
// quantization grid is reported as corruption.
inline PackedWeights pack(const Tensor<float>& wq, const FakeQuantizer<float>& q) {
    q.validate();
    const std::int64_t ext = q.group_extent(wq);
    PackedWeights p;
    p.spec = q.spec;
    p.shape = wq.shape;
    p.alpha = q.alpha;
    p.beta = q.beta;
    p.payload.reserve((p.payload_bits() + 7) / 8);
    detail::BitWriter writer(p.payload);
    for (std::size_t g = 0; g < q.groups(); ++g) {
        const float s = q.scale(g);
        const std::int64_t base = static_cast<std::int64_t>(g) * ext;
        for (std::int64_t i = 0; i < ext; ++i) {
            const float v = wq.data[base + i];
            const std::int32_t code =
                static_cast<std::int32_t>(detail::round_half_even(v / s));
            if (code < q.spec.q_min() || code > q.spec.q_max())
                throw QuantError("pack: code " + std::to_string(code) + " out of range at index " +
                                 std::to_string(base + i));
            if (s * static_cast<float>(code) != v)
                throw QuantError("pack: value at index " + std::to_string(base + i) +
                                 " is not on the quantization grid");
            writer.put(static_cast<std::uint32_t>(code - q.spec.q_min()), q.spec.bitwidth);
        }
    }
    writer.flush();
    return p;
}

inline Tensor<float> unpack(const PackedWeights& p) {
    p.spec.validate();
    FakeQuantizer<float> q{p.spec, p.alpha, p.beta};
    Tensor<float> out(p.shape);
    const std::int64_t ext = q.group_extent(out);
    detail::BitReader reader(p.payload);
    for (std::size_t g = 0; g < q.groups(); ++g) {
        const float s = q.scale(g);
        const std::int64_t base = static_cast<std::int64_t>(g) * ext;
        for (std::int64_t i = 0; i < ext; ++i) {
            const std::int32_t code =
                static_cast<std::int32_t>(reader.get(p.spec.bitwidth)) + p.spec.q_min();
            if (code < p.spec.q_min() || code > p.spec.q_max())
                throw QuantError("unpack: corrupt code at index " + std::to_string(base + i));
            out.data[base + i] = s * static_cast<float>(code);
        }
    }
    return out;
}

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                         std::uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw QuantError("unexpected end of stream");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline float read_f32(std::istream& is) {
    const std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

} // namespace detail

inline void write_packed(std::ostream& os, const PackedWeights& p) {
    os.write("QRXW", 4);
    const std::uint8_t head[4] = {1 /*version*/, static_cast<std::uint8_t>(p.spec.bitwidth),
                                  static_cast<std::uint8_t>(p.spec.granularity),
                                  static_cast<std::uint8_t>(p.shape.size())};
    os.write(reinterpret_cast<const char*>(head), 4);
    for (std::int64_t e : p.shape) detail::write_u32(os, static_cast<std::uint32_t>(e));
    detail::write_u32(os, static_cast<std::uint32_t>(p.alpha.size()));
    for (float a : p.alpha) detail::write_f32(os, a);
    for (float b : p.beta) detail::write_f32(os, b);
    detail::write_u32(os, static_cast<std::uint32_t>(p.payload.size()));
    os.write(reinterpret_cast<const char*>(p.payload.data()),
             static_cast<std::streamsize>(p.payload.size()));
}

inline PackedWeights read_packed(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "QRXW", 4) != 0)
        throw QuantError("bad packed-weights magic");
    std::uint8_t head[4];
    is.read(reinterpret_cast<char*>(head), 4);
    if (!is) throw QuantError("truncated packed-weights header");
    if (head[0] != 1) throw QuantError("unsupported packed-weights version");
    PackedWeights p;
    p.spec.bitwidth = head[1];
    p.spec.granularity = static_cast<Granularity>(head[2]);
    p.spec.validate();
    const int rank = head[3];
    for (int i = 0; i < rank; ++i)
        p.shape.push_back(static_cast<std::int64_t>(detail::read_u32(is)));
    const std::uint32_t n_groups = detail::read_u32(is);
    p.alpha.resize(n_groups);
    p.beta.resize(n_groups);
    for (auto& a : p.alpha) a = detail::read_f32(is);
    for (auto& b : p.beta) b = detail::read_f32(is);
    const std::uint32_t n_payload = detail::read_u32(is);
    p.payload.resize(n_payload);
    is.read(reinterpret_cast<char*>(p.payload.data()), n_payload);
    if (!is) throw QuantError("truncated packed-weights payload");
    return p;
}

} // namespace qrx
