// Reverse-mode autodiff over dense tensors, define-by-run.
//
// A Tape records one forward pass; values are immutable once an op has
// written them and ids are already in topological order, so backward() is a
// single reverse sweep that visits each node exactly once. Tapes are
// confined to one worker; parallel training uses one tape per batch shard
// and sums leaf gradients afterwards.

#pragma once

#include <functional>

#include "qrx/ops.hpp"
#include "qrx/quant.hpp"

namespace qrx {

template <typename T>
class Tape {
public:
    using Id = std::int32_t;

    Id leaf(Tensor<T> value, bool requires_grad = false) {
        return push_(std::move(value), requires_grad, nullptr);
    }

    Id conv2d(Id input, Id kernel, Id bias, Padding padding) {
        Tensor<T> out = conv2d_forward(value(input), value(kernel), value(bias), padding);
        const bool in_needs = needs_[input], k_needs = needs_[kernel], b_needs = needs_[bias];
        return push_(std::move(out), in_needs || k_needs || b_needs,
                     [this, input, kernel, bias, padding, in_needs, k_needs, b_needs](Id out_id) {
                         conv2d_backward(value(input), value(kernel), grad_ref_(out_id), padding,
                                         in_needs ? &grad_ref_(input) : nullptr,
                                         k_needs ? &grad_ref_(kernel) : nullptr,
                                         b_needs ? &grad_ref_(bias) : nullptr);
                     });
    }

    Id relu(Id x) {
        Tensor<T> out = relu_forward(value(x));
        return push_(std::move(out), needs_[x], [this, x](Id out_id) {
            relu_backward(value(x), grad_ref_(out_id), grad_ref_(x));
        });
    }

    Id residual_add(Id x, Id y) {
        require_same_shape(value(x).shape, value(y).shape, "residual_add");
        Tensor<T> out(value(x).shape);
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out.data[i] = value(x).data[i] + value(y).data[i];
        return push_(std::move(out), needs_[x] || needs_[y], [this, x, y](Id out_id) {
            const Tensor<T>& g = grad_ref_(out_id);
            if (needs_[x]) {
                Tensor<T>& gx = grad_ref_(x);
                for (std::int64_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
            }
            if (needs_[y]) {
                Tensor<T>& gy = grad_ref_(y);
                for (std::int64_t i = 0; i < g.numel(); ++i) gy.data[i] += g.data[i];
            }
        });
    }

    Id negate(Id x) {
        Tensor<T> out(value(x).shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) out.data[i] = -value(x).data[i];
        return push_(std::move(out), needs_[x], [this, x](Id out_id) {
            const Tensor<T>& g = grad_ref_(out_id);
            Tensor<T>& gx = grad_ref_(x);
            for (std::int64_t i = 0; i < g.numel(); ++i) gx.data[i] -= g.data[i];
        });
    }

    // Per-sample gather: x is [N, ...] with per-sample extent P; out[n, j] =
    // x_flat[n*P + indices[j]]. Used to pull data-carrying grid positions out
    // of the LLR grid before the loss.
    Id gather(Id x, std::vector<std::int64_t> indices) {
        const Tensor<T>& xv = value(x);
        if (xv.shape.empty()) throw ShapeError("gather: scalar input");
        const std::int64_t n = xv.shape[0];
        const std::int64_t per = xv.numel() / n;
        for (std::int64_t idx : indices)
            if (idx < 0 || idx >= per)
                throw ShapeError("gather: index " + std::to_string(idx) + " out of range [0," +
                                 std::to_string(per) + ")");
        Tensor<T> out({n, static_cast<std::int64_t>(indices.size())});
        for (std::int64_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < indices.size(); ++j)
                out.data[b * static_cast<std::int64_t>(indices.size()) + j] =
                    xv.data[b * per + indices[j]];
        return push_(std::move(out), needs_[x],
                     [this, x, idx = std::move(indices), n, per](Id out_id) {
                         const Tensor<T>& g = grad_ref_(out_id);
                         Tensor<T>& gx = grad_ref_(x);
                         const std::int64_t m = static_cast<std::int64_t>(idx.size());
                         for (std::int64_t b = 0; b < n; ++b)
                             for (std::int64_t j = 0; j < m; ++j)
                                 gx.data[b * per + idx[j]] += g.data[b * m + j];
                     });
    }

    // Fake quantization with STE backward. alpha/beta are [G] tensors.
    // With ste_linearized=true the forward computes only the clipping stage;
    // the backward rule is identical either way (the rounding term carries no
    // gradient under the STE), which is what finite-difference checks probe.
    Id fake_quant(Id x, Id alpha, Id beta, const QuantSpec& spec, bool ste_linearized = false) {
        FakeQuantizer<T> q{spec, value(alpha).data, value(beta).data};
        Tensor<T> out;
        if (ste_linearized) {
            q.validate();
            const std::int64_t ext = q.group_extent(value(x));
            out = Tensor<T>(value(x).shape);
            for (std::size_t g = 0; g < q.groups(); ++g)
                for (std::int64_t i = 0; i < ext; ++i) {
                    const std::int64_t at = static_cast<std::int64_t>(g) * ext + i;
                    out.data[at] = clip(value(x).data[at], q.alpha[g], q.beta[g]);
                }
        } else {
            out = fake_quant_forward(value(x), q);
        }
        const bool any = needs_[x] || needs_[alpha] || needs_[beta];
        return push_(std::move(out), any, [this, x, alpha, beta, spec](Id out_id) {
            FakeQuantizer<T> qb{spec, value(alpha).data, value(beta).data};
            SteGrads<T> g = fake_quant_backward(grad_ref_(out_id), value(x), qb);
            if (needs_[x]) {
                Tensor<T>& gx = grad_ref_(x);
                for (std::int64_t i = 0; i < gx.numel(); ++i) gx.data[i] += g.x.data[i];
            }
            if (needs_[alpha]) {
                Tensor<T>& ga = grad_ref_(alpha);
                for (std::size_t i = 0; i < g.alpha.size(); ++i) ga.data[i] += g.alpha[i];
            }
            if (needs_[beta]) {
                Tensor<T>& gb = grad_ref_(beta);
                for (std::size_t i = 0; i < g.beta.size(); ++i) gb.data[i] += g.beta[i];
            }
        });
    }

    // Scalar output, shape [1].
    Id bce_with_logits(Id logits, Id targets) {
        Tensor<T> out({1});
        out.data[0] = bce_with_logits_forward(value(logits), value(targets));
        return push_(std::move(out), needs_[logits], [this, logits, targets](Id out_id) {
            bce_with_logits_backward(value(logits), value(targets), grad_ref_(out_id).data[0],
                                     grad_ref_(logits));
        });
    }

    const Tensor<T>& value(Id id) const { return values_[static_cast<std::size_t>(id)]; }

    // Zero tensor if the id never received gradient.
    const Tensor<T>& grad(Id id) {
        return grad_ref_(id);
    }

    void backward(Id root) {
        const Tensor<T>& r = value(root);
        if (r.numel() != 1)
            throw ShapeError("backward: root must be scalar, got " + shape_str(r.shape));
        grads_.assign(values_.size(), Tensor<T>());
        grad_ref_(root).data[0] = T(1);
        for (Id i = root; i >= 0; --i) {
            if (!backwards_[static_cast<std::size_t>(i)] || !needs_[static_cast<std::size_t>(i)])
                continue;
            if (grads_[static_cast<std::size_t>(i)].data.empty()) continue;  // unused branch
            backwards_[static_cast<std::size_t>(i)](i);
        }
    }

    std::size_t size() const { return values_.size(); }

private:
    Id push_(Tensor<T> v, bool needs, std::function<void(Id)> bwd) {
        values_.push_back(std::move(v));
        needs_.push_back(needs);
        backwards_.push_back(std::move(bwd));
        return static_cast<Id>(values_.size() - 1);
    }

    Tensor<T>& grad_ref_(Id id) {
        if (grads_.size() != values_.size()) grads_.resize(values_.size());
        Tensor<T>& g = grads_[static_cast<std::size_t>(id)];
        if (g.data.empty()) g = Tensor<T>(values_[static_cast<std::size_t>(id)].shape);
        return g;
    }

    std::vector<Tensor<T>> values_;
    std::vector<Tensor<T>> grads_;
    std::vector<bool> needs_;
    std::vector<std::function<void(Id)>> backwards_;
};

// Central finite differences against the tape gradient. `build` runs the
// forward pass: (Tape<double>&, Id x) -> scalar Id. Returns the max
// relative error over coordinates (unit floor in the denominator).
template <typename F>
double grad_check(F&& build, const Tensor<double>& x, double h) {
    if (h <= 0) throw std::invalid_argument("grad_check: step must be positive");
    Tape<double> tape;
    const auto xid = tape.leaf(x, /*requires_grad=*/true);
    const auto loss = build(tape, xid);
    tape.backward(loss);
    const Tensor<double> analytic = tape.grad(xid);

    double max_rel = 0.0;
    Tensor<double> probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double keep = probe.data[i];
        probe.data[i] = keep + h;
        Tape<double> tp;
        const double fp = tp.value(build(tp, tp.leaf(probe))).data[0];
        probe.data[i] = keep - h;
        Tape<double> tm;
        const double fm = tm.value(build(tm, tm.leaf(probe))).data[0];
        probe.data[i] = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic.data[i];
        if (!std::isfinite(numeric) || !std::isfinite(a))
            throw std::runtime_error("grad_check: non-finite value at coordinate " +
                                     std::to_string(i));
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1.0});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

} // namespace qrx
