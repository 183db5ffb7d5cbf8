#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "tensor.hpp"

namespace hsicae {

struct NmfConfig {
    std::size_t r = 3;
    std::size_t max_iters = 2000;
    double tol = 1e-6;  // relative objective change stopping threshold
    std::uint64_t seed = 0;
    double eps = 1e-12;  // stability floor added to update denominators

    void validate() const {
        if (r < 1) throw ValueError("nmf: r must be >= 1");
        if (!(tol > 0.0)) throw ValueError("nmf: tol must be positive");
        if (!(eps > 0.0)) throw ValueError("nmf: eps must be positive");
    }
};

struct NmfResult {
    Tensor S;  // m x r
    Tensor A;  // r x n
    std::vector<double> objective_trace;  // ||X - SA||_F^2 per iteration
};

namespace detail {

inline Tensor transpose(const Tensor& m) {
    const std::size_t r = m.dim(0), c = m.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = m.data[i * c + j];
    return out;
}

inline double frobenius_sq_diff(const Tensor& x, const Tensor& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x.data[i] - y.data[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

/// Classical multiplicative-update NMF for min ||X - SA||_F^2:
///   S <- S .* (X A^T) ./ (S A A^T + eps)
///   A <- A .* (S^T X) ./ (S^T S A + eps)
/// Factors start uniform in (0, 1]. Stops at max_iters or when the relative
/// objective change drops below tol.
inline NmfResult nmf(const Tensor& x, const NmfConfig& cfg) {
    cfg.validate();
    if (x.ndim() != 2) throw ShapeError("nmf: X must be 2-D");
    for (double v : x.data)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValueError("nmf: X must be nonnegative and finite");

    const std::size_t m = x.dim(0), n = x.dim(1), r = cfg.r;
    NmfResult res;
    res.S = Tensor({m, r});
    res.A = Tensor({r, n});

    double xmax = 0.0;
    for (double v : x.data) xmax = std::max(xmax, v);
    if (xmax == 0.0) {  // zero factors are already optimal
        res.objective_trace.push_back(0.0);
        return res;
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : res.S.data) v = 1.0 - u(rng);  // (0, 1]
    for (double& v : res.A.data) v = 1.0 - u(rng);

    double prev = detail::frobenius_sq_diff(x, matmul(res.S, res.A));
    res.objective_trace.push_back(prev);

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        if (prev == 0.0) break;

        const Tensor at = detail::transpose(res.A);
        const Tensor xat = matmul(x, at);           // m x r
        const Tensor aat = matmul(res.A, at);       // r x r
        const Tensor saat = matmul(res.S, aat);     // m x r
        for (std::size_t i = 0; i < res.S.size(); ++i)
            res.S.data[i] *= xat.data[i] / (saat.data[i] + cfg.eps);

        const Tensor st = detail::transpose(res.S);
        const Tensor stx = matmul(st, x);           // r x n
        const Tensor sts = matmul(st, res.S);       // r x r
        const Tensor stsa = matmul(sts, res.A);     // r x n
        for (std::size_t i = 0; i < res.A.size(); ++i)
            res.A.data[i] *= stx.data[i] / (stsa.data[i] + cfg.eps);

        const double obj = detail::frobenius_sq_diff(x, matmul(res.S, res.A));
        res.objective_trace.push_back(obj);
        const double rel_change = std::fabs(prev - obj) / std::max(prev, cfg.eps);
        prev = obj;
        if (rel_change < cfg.tol) break;
    }
    return res;
}

}  // namespace hsicae
