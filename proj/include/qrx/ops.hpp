// Raw forward/backward kernels shared by the autodiff tape and the
// no-recording evaluation path. conv2d uses im2col plus an Eigen GEMM;
// everything is single-threaded and deterministic.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "qrx/tensor.hpp"

namespace qrx {

enum class Padding { Same, Valid };

struct Conv2dDims {
    std::int64_t n, c, h, w;      // input
    std::int64_t k, r, s;         // kernel
    std::int64_t pad_h, pad_w;
    std::int64_t oh, ow;
};

inline Conv2dDims conv2d_dims(const Shape& input, const Shape& kernel, Padding padding) {
    if (input.size() != 4)
        throw ShapeError("conv2d: input must be 4-D [N,C,H,W], got " + shape_str(input));
    if (kernel.size() != 4)
        throw ShapeError("conv2d: kernel must be 4-D [K,C,R,S], got " + shape_str(kernel));
    Conv2dDims d{};
    d.n = input[0];
    d.c = input[1];
    d.h = input[2];
    d.w = input[3];
    d.k = kernel[0];
    d.r = kernel[2];
    d.s = kernel[3];
    if (kernel[1] != d.c)
        throw ShapeError("conv2d: kernel input-channel dimension " + std::to_string(kernel[1]) +
                         " does not match input channel dimension " + std::to_string(d.c));
    if (padding == Padding::Same) {
        if (d.r % 2 == 0 || d.s % 2 == 0)
            throw ShapeError("conv2d: same padding requires odd kernel extents, got " +
                             shape_str(kernel));
        d.pad_h = (d.r - 1) / 2;
        d.pad_w = (d.s - 1) / 2;
        d.oh = d.h;
        d.ow = d.w;
    } else {
        d.pad_h = 0;
        d.pad_w = 0;
        d.oh = d.h - d.r + 1;
        d.ow = d.w - d.s + 1;
        if (d.oh <= 0 || d.ow <= 0)
            throw ShapeError("conv2d: kernel extent exceeds input spatial dimension (" +
                             std::to_string(d.h) + "x" + std::to_string(d.w) + " vs kernel " +
                             std::to_string(d.r) + "x" + std::to_string(d.s) + ")");
    }
    return d;
}

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(c*R + r)*S + s, y*OW + x] = in[c, y + r - pad_h, x + s - pad_w]
template <typename T>
void im2col(const T* in, const Conv2dDims& d, T* col) {
    const std::int64_t ohw = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.c; ++c) {
        const T* plane = in + c * d.h * d.w;
        for (std::int64_t r = 0; r < d.r; ++r) {
            for (std::int64_t s = 0; s < d.s; ++s) {
                T* row = col + ((c * d.r + r) * d.s + s) * ohw;
                for (std::int64_t y = 0; y < d.oh; ++y) {
                    const std::int64_t iy = y + r - d.pad_h;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(row + y * d.ow, row + (y + 1) * d.ow, T(0));
                        continue;
                    }
                    for (std::int64_t x = 0; x < d.ow; ++x) {
                        const std::int64_t ix = x + s - d.pad_w;
                        row[y * d.ow + x] =
                            (ix >= 0 && ix < d.w) ? plane[iy * d.w + ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <typename T>
void col2im_add(const T* col, const Conv2dDims& d, T* in_grad) {
    const std::int64_t ohw = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.c; ++c) {
        T* plane = in_grad + c * d.h * d.w;
        for (std::int64_t r = 0; r < d.r; ++r) {
            for (std::int64_t s = 0; s < d.s; ++s) {
                const T* row = col + ((c * d.r + r) * d.s + s) * ohw;
                for (std::int64_t y = 0; y < d.oh; ++y) {
                    const std::int64_t iy = y + r - d.pad_h;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t x = 0; x < d.ow; ++x) {
                        const std::int64_t ix = x + s - d.pad_w;
                        if (ix >= 0 && ix < d.w) plane[iy * d.w + ix] += row[y * d.ow + x];
                    }
                }
            }
        }
    }
}

} // namespace detail

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         Padding padding) {
    const Conv2dDims d = conv2d_dims(input.shape, kernel.shape, padding);
    if (bias.shape != Shape{d.k})
        throw ShapeError("conv2d: bias must have shape [K]=" + std::to_string(d.k) + ", got " +
                         shape_str(bias.shape));
    Tensor<T> out({d.n, d.k, d.oh, d.ow});
    const std::int64_t crs = d.c * d.r * d.s;
    const std::int64_t ohw = d.oh * d.ow;
    std::vector<T> col(static_cast<std::size_t>(crs * ohw));
    Eigen::Map<const detail::MatRM<T>> wmat(kernel.data.data(), d.k, crs);
    for (std::int64_t n = 0; n < d.n; ++n) {
        detail::im2col(input.data.data() + n * d.c * d.h * d.w, d, col.data());
        Eigen::Map<const detail::MatRM<T>> cmat(col.data(), crs, ohw);
        Eigen::Map<detail::MatRM<T>> omat(out.data.data() + n * d.k * ohw, d.k, ohw);
        omat.noalias() = wmat * cmat;
        for (std::int64_t k = 0; k < d.k; ++k) omat.row(k).array() += bias.data[k];
    }
    return out;
}

// Accumulates into whichever of g_input / g_kernel / g_bias is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& g_out,
                     Padding padding, Tensor<T>* g_input, Tensor<T>* g_kernel,
                     Tensor<T>* g_bias) {
    const Conv2dDims d = conv2d_dims(input.shape, kernel.shape, padding);
    const std::int64_t crs = d.c * d.r * d.s;
    const std::int64_t ohw = d.oh * d.ow;
    std::vector<T> col(static_cast<std::size_t>(crs * ohw));
    std::vector<T> gcol(static_cast<std::size_t>(crs * ohw));
    Eigen::Map<const detail::MatRM<T>> wmat(kernel.data.data(), d.k, crs);
    for (std::int64_t n = 0; n < d.n; ++n) {
        Eigen::Map<const detail::MatRM<T>> gmat(g_out.data.data() + n * d.k * ohw, d.k, ohw);
        if (g_kernel || g_input) detail::im2col(input.data.data() + n * d.c * d.h * d.w, d, col.data());
        if (g_kernel) {
            Eigen::Map<const detail::MatRM<T>> cmat(col.data(), crs, ohw);
            Eigen::Map<detail::MatRM<T>> gw(g_kernel->data.data(), d.k, crs);
            gw.noalias() += gmat * cmat.transpose();
        }
        if (g_input) {
            Eigen::Map<detail::MatRM<T>> gc(gcol.data(), crs, ohw);
            gc.noalias() = wmat.transpose() * gmat;
            detail::col2im_add(gcol.data(), d, g_input->data.data() + n * d.c * d.h * d.w);
        }
        if (g_bias) {
            for (std::int64_t k = 0; k < d.k; ++k)
                g_bias->data[k] += gmat.row(k).sum();
        }
    }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return out;
}

// Subgradient at 0 is 0.
template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& g_out, Tensor<T>& g_x) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
        if (x.data[i] > T(0)) g_x.data[i] += g_out.data[i];
}

template <typename T>
inline T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// Mean binary cross-entropy from logits in the numerically stable form
// max(L,0) - L*B + log(1 + exp(-|L|)). Logits here are bit-1 logits:
// sigma(L) is the predicted probability of bit 1.
template <typename T>
T bce_with_logits_forward(const Tensor<T>& logits, const Tensor<T>& targets) {
    require_same_shape(logits.shape, targets.shape, "bce_with_logits");
    T acc = T(0);
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
        const T b = targets.data[i];
        if (b != T(0) && b != T(1))
            throw std::invalid_argument("bce_with_logits: target at index " + std::to_string(i) +
                                        " is not binary");
        const T l = logits.data[i];
        acc += std::max(l, T(0)) - l * b + std::log1p(std::exp(-std::abs(l)));
    }
    return acc / static_cast<T>(logits.numel());
}

template <typename T>
void bce_with_logits_backward(const Tensor<T>& logits, const Tensor<T>& targets, T g_out,
                              Tensor<T>& g_logits) {
    const T inv = g_out / static_cast<T>(logits.numel());
    for (std::int64_t i = 0; i < logits.numel(); ++i)
        g_logits.data[i] += (sigmoid(logits.data[i]) - targets.data[i]) * inv;
}

} // namespace qrx
