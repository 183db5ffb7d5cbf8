#pragma once

#include <string>
#include <vector>

#include "tensor.hpp"

namespace hsicae {

/// Hyperspectral cube: rows x cols spatial grid, n spectral bands.
/// Storage is band-sequential (band-major, row-major within a band).
struct HsiCube {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bands = 0;
    std::vector<double> data;

    HsiCube() = default;
    HsiCube(std::size_t r, std::size_t c, std::size_t b)
        : rows(r), cols(c), bands(b), data(r * c * b, 0.0) {}

    std::size_t pixels() const { return rows * cols; }

    double& at(std::size_t band, std::size_t pixel) { return data[band * pixels() + pixel]; }
    double at(std::size_t band, std::size_t pixel) const { return data[band * pixels() + pixel]; }

    /// One band as a rows x cols x 1 spatial tensor.
    Tensor band_image(std::size_t band) const {
        if (band >= bands) throw ShapeError("band index out of range");
        Tensor t({rows, cols, 1});
        const std::size_t m = pixels();
        for (std::size_t p = 0; p < m; ++p) t.data[p] = data[band * m + p];
        return t;
    }

    /// The cube as the m x n matrix X (pixels by bands).
    Tensor to_matrix() const {
        const std::size_t m = pixels();
        Tensor x({m, bands});
        for (std::size_t b = 0; b < bands; ++b)
            for (std::size_t p = 0; p < m; ++p)
                x.data[p * bands + b] = data[b * m + p];
        return x;
    }
};

/// Unmixing result: S holds per-pixel abundances (m x r, pixels row-major),
/// A holds endmember signatures (r x n).
struct FactorPair {
    Tensor S;
    Tensor A;
};

/// X = S * A, the linear mixing model.
inline Tensor reconstruct(const FactorPair& f) { return matmul(f.S, f.A); }

}  // namespace hsicae
