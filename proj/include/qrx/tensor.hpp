// Dense row-major real tensor. Substrate for the receiver and quantizers.
//
// Precision is a compile-time property of the tensor (float for experiment
// paths, double for gradient checking); graphs never mix the two.

#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrx/rng.hpp"

namespace qrx {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A referenced file (model, profile, alist) does not exist or cannot open.
struct FileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(e));
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // same length as data iff requires_grad

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}

    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    void set_requires_grad(bool on) {
        requires_grad = on;
        grad.assign(on ? data.size() : 0, T(0));
    }

    void zero_grad() {
        if (requires_grad) grad.assign(data.size(), T(0));
    }

    T& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    T at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.gaussian()) * stddev;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

} // namespace qrx
