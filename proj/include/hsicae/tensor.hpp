#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hsicae {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major numeric array. Spatial tensors are channel-last
/// (index order row, col, channel).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), 0.0) {}

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(count(shape)));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t ndim() const { return shape.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 3-D access (rows, cols, channels)
    double& at3(std::size_t i, std::size_t j, std::size_t c) {
        return data[(i * shape[1] + j) * shape[2] + c];
    }
    double at3(std::size_t i, std::size_t j, std::size_t c) const {
        return data[(i * shape[1] + j) * shape[2] + c];
    }

    // 2-D access (rows, cols)
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    void fill(double v) {
        for (double& x : data) x = v;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<std::size_t> s) const {
        if (count(s) != data.size())
            throw ShapeError("reshape target does not match element count");
        return Tensor(std::move(s), data);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

/// Plain matrix product of {p,q} by {q,s} tensors, inner index innermost.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes");
    const std::size_t p = a.dim(0), q = a.dim(1), s = b.dim(1);
    Tensor out({p, s});
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < s; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < q; ++k)
                acc += a.data[i * q + k] * b.data[k * s + j];
            out.data[i * s + j] = acc;
        }
    return out;
}

}  // namespace hsicae
