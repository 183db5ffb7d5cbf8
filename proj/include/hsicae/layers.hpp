#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hsicae {

/// Trainable parameter block with gradient accumulators of matching shape.
/// Grads are zeroed explicitly by the caller; backward passes add into them.
struct LayerParams {
    std::string name;
    Tensor w;
    Tensor b;  // empty when the layer has no bias
    Tensor gw;
    Tensor gb;
    bool has_bias = false;

    void zero_grads() {
        gw.fill(0.0);
        gb.fill(0.0);
    }
};

class Layer {
public:
    virtual ~Layer() = default;

    /// Forward pass; caches whatever the backward pass needs.
    virtual Tensor forward(const Tensor& x, bool training) = 0;

    /// Backward pass: accumulates parameter grads, returns grad w.r.t. input.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::vector<LayerParams*> params() { return {}; }
    virtual std::string name() const = 0;

    /// Discrete routing decisions made by the last forward pass (ReLU sign
    /// pattern, pool argmax, dropout mask). Used by the gradient checker to
    /// detect kink crossings between perturbed evaluations.
    virtual std::vector<std::size_t> selection() const { return {}; }
};

/// 3x3 convolution, stride 1, zero "same" padding. Kernels {3,3,Cin,Cout}.
class Conv2d : public Layer {
public:
    Conv2d(std::size_t cin, std::size_t cout, std::mt19937_64& rng, std::string label)
        : cin_(cin), cout_(cout) {
        p_.name = std::move(label);
        p_.w = Tensor({3, 3, cin, cout});
        p_.b = Tensor({cout});
        p_.gw = zeros_like(p_.w);
        p_.gb = zeros_like(p_.b);
        p_.has_bias = true;
        const double s = std::sqrt(1.0 / (9.0 * static_cast<double>(cin)));
        std::uniform_real_distribution<double> dist(-s, s);
        for (double& v : p_.w.data) v = dist(rng);
        p_.b.fill(0.1);  // small positive start keeps ReLUs alive
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.ndim() != 3 || x.dim(2) != cin_)
            throw ShapeError(p_.name + ": input channels " +
                             std::to_string(x.ndim() == 3 ? x.dim(2) : 0) +
                             " do not match kernel Cin " + std::to_string(cin_));
        in_ = x;
        const std::size_t h = x.dim(0), w = x.dim(1);
        Tensor out({h, w, cout_});
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                for (std::size_t co = 0; co < cout_; ++co) {
                    double acc = p_.b[co];
                    for (std::size_t di = 0; di < 3; ++di) {
                        if (i + di < 1 || i + di > h) continue;
                        const std::size_t ii = i + di - 1;
                        for (std::size_t dj = 0; dj < 3; ++dj) {
                            if (j + dj < 1 || j + dj > w) continue;
                            const std::size_t jj = j + dj - 1;
                            for (std::size_t ci = 0; ci < cin_; ++ci)
                                acc += x.at3(ii, jj, ci) * kw(di, dj, ci, co);
                        }
                    }
                    out.at3(i, j, co) = acc;
                }
        return out;
    }

    Tensor backward(const Tensor& g) override {
        const std::size_t h = in_.dim(0), w = in_.dim(1);
        if (g.ndim() != 3 || g.dim(0) != h || g.dim(1) != w || g.dim(2) != cout_)
            throw ShapeError(p_.name + ": upstream gradient shape mismatch");
        Tensor gx(in_.shape);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                for (std::size_t co = 0; co < cout_; ++co) {
                    const double go = g.at3(i, j, co);
                    p_.gb[co] += go;
                    for (std::size_t di = 0; di < 3; ++di) {
                        if (i + di < 1 || i + di > h) continue;
                        const std::size_t ii = i + di - 1;
                        for (std::size_t dj = 0; dj < 3; ++dj) {
                            if (j + dj < 1 || j + dj > w) continue;
                            const std::size_t jj = j + dj - 1;
                            for (std::size_t ci = 0; ci < cin_; ++ci) {
                                gkw(di, dj, ci, co) += in_.at3(ii, jj, ci) * go;
                                gx.at3(ii, jj, ci) += kw(di, dj, ci, co) * go;
                            }
                        }
                    }
                }
        return gx;
    }

    std::vector<LayerParams*> params() override { return {&p_}; }
    std::string name() const override { return p_.name; }

private:
    double& kw(std::size_t di, std::size_t dj, std::size_t ci, std::size_t co) {
        return p_.w.data[((di * 3 + dj) * cin_ + ci) * cout_ + co];
    }
    double& gkw(std::size_t di, std::size_t dj, std::size_t ci, std::size_t co) {
        return p_.gw.data[((di * 3 + dj) * cin_ + ci) * cout_ + co];
    }

    std::size_t cin_, cout_;
    LayerParams p_;
    Tensor in_;
};

/// 2x2 max pooling, stride 2, no padding; trailing odd row/column dropped.
class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(std::string label) : label_(std::move(label)) {}

    Tensor forward(const Tensor& x, bool) override {
        if (x.ndim() != 3 || x.dim(0) < 2 || x.dim(1) < 2)
            throw ShapeError(label_ + ": input spatial dims must be at least 2x2");
        in_shape_ = x.shape;
        const std::size_t oh = x.dim(0) / 2, ow = x.dim(1) / 2, c = x.dim(2);
        Tensor out({oh, ow, c});
        argmax_.assign(out.size(), 0);
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j)
                for (std::size_t k = 0; k < c; ++k) {
                    double best = x.at3(2 * i, 2 * j, k);
                    std::size_t best_idx = (2 * i * x.dim(1) + 2 * j) * c + k;
                    for (std::size_t di = 0; di < 2; ++di)
                        for (std::size_t dj = 0; dj < 2; ++dj) {
                            const double v = x.at3(2 * i + di, 2 * j + dj, k);
                            if (v > best) {
                                best = v;
                                best_idx = ((2 * i + di) * x.dim(1) + 2 * j + dj) * c + k;
                            }
                        }
                    out.at3(i, j, k) = best;
                    argmax_[(i * ow + j) * c + k] = best_idx;
                }
        return out;
    }

    Tensor backward(const Tensor& g) override {
        Tensor gx(in_shape_);
        for (std::size_t o = 0; o < g.size(); ++o)
            gx.data[argmax_[o]] += g.data[o];
        return gx;
    }

    std::string name() const override { return label_; }
    std::vector<std::size_t> selection() const override { return argmax_; }

private:
    std::string label_;
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

/// Fully connected layer. Weights {out,in}, optional bias {out}.
class Dense : public Layer {
public:
    Dense(std::size_t in, std::size_t out, bool bias, std::mt19937_64& rng, std::string label)
        : in_dim_(in), out_dim_(out) {
        p_.name = std::move(label);
        p_.w = Tensor({out, in});
        p_.gw = zeros_like(p_.w);
        p_.has_bias = bias;
        if (bias) {
            p_.b = Tensor({out});
            p_.gb = zeros_like(p_.b);
            p_.b.fill(0.1);
        }
        const double s = std::sqrt(1.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-s, s);
        for (double& v : p_.w.data) v = dist(rng);
    }

    /// Clamps to [lo, hi]; used for the nonnegative output-weight init.
    void init_uniform(double lo, double hi, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& v : p_.w.data) v = dist(rng);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.size() != in_dim_)
            throw ShapeError(p_.name + ": input length " + std::to_string(x.size()) +
                             " does not match weight inner dimension " + std::to_string(in_dim_));
        in_ = x;
        Tensor out({out_dim_});
        for (std::size_t o = 0; o < out_dim_; ++o) {
            double acc = p_.has_bias ? p_.b[o] : 0.0;
            const double* wr = &p_.w.data[o * in_dim_];
            for (std::size_t i = 0; i < in_dim_; ++i) acc += wr[i] * x.data[i];
            out[o] = acc;
        }
        return out;
    }

    Tensor backward(const Tensor& g) override {
        if (g.size() != out_dim_)
            throw ShapeError(p_.name + ": upstream gradient length mismatch");
        Tensor gx({in_dim_});
        for (std::size_t o = 0; o < out_dim_; ++o) {
            const double go = g[o];
            if (p_.has_bias) p_.gb[o] += go;
            const double* wr = &p_.w.data[o * in_dim_];
            double* gwr = &p_.gw.data[o * in_dim_];
            for (std::size_t i = 0; i < in_dim_; ++i) {
                gwr[i] += go * in_.data[i];
                gx.data[i] += wr[i] * go;
            }
        }
        return gx;
    }

    std::vector<LayerParams*> params() override { return {&p_}; }
    std::string name() const override { return p_.name; }
    LayerParams& param_block() { return p_; }
    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

private:
    std::size_t in_dim_, out_dim_;
    LayerParams p_;
    Tensor in_;
};

/// Elementwise max(0, x). Subgradient at exactly 0 is 0.
class ReLU : public Layer {
public:
    explicit ReLU(std::string label) : label_(std::move(label)) {}

    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.size(), 0);
        Tensor out(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x.data[i] > 0.0) {
                out.data[i] = x.data[i];
                mask_[i] = 1;
            }
        }
        return out;
    }

    Tensor backward(const Tensor& g) override {
        Tensor gx(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] = mask_[i] ? g.data[i] : 0.0;
        return gx;
    }

    std::string name() const override { return label_; }
    std::vector<std::size_t> selection() const override {
        return std::vector<std::size_t>(mask_.begin(), mask_.end());
    }

private:
    std::string label_;
    std::vector<std::uint8_t> mask_;
};

/// Inverted dropout: survivors scaled by 1/(1-rate) at train time,
/// identity in eval mode.
class Dropout : public Layer {
public:
    Dropout(double rate, std::mt19937_64& rng, std::string label)
        : rate_(rate), rng_(&rng), label_(std::move(label)) {
        if (!(rate >= 0.0 && rate < 1.0))
            throw ValueError(label_ + ": dropout rate must be in [0, 1)");
    }

    Tensor forward(const Tensor& x, bool training) override {
        mask_.assign(x.size(), 1.0);
        if (training && rate_ > 0.0) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double keep_scale = 1.0 / (1.0 - rate_);
            for (double& m : mask_)
                m = (u(*rng_) < rate_) ? 0.0 : keep_scale;
        }
        Tensor out(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i)
            out.data[i] = x.data[i] * mask_[i];
        return out;
    }

    Tensor backward(const Tensor& g) override {
        Tensor gx(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
            gx.data[i] = g.data[i] * mask_[i];
        return gx;
    }

    std::string name() const override { return label_; }
    std::vector<std::size_t> selection() const override {
        std::vector<std::size_t> s(mask_.size());
        for (std::size_t i = 0; i < mask_.size(); ++i) s[i] = mask_[i] != 0.0;
        return s;
    }

private:
    double rate_;
    std::mt19937_64* rng_;
    std::string label_;
    std::vector<double> mask_;
};

/// Row-major, channel-last linearization; backward is the inverse reshape.
class Flatten : public Layer {
public:
    explicit Flatten(std::string label) : label_(std::move(label)) {}

    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        return x.reshaped({x.size()});
    }

    Tensor backward(const Tensor& g) override { return g.reshaped(in_shape_); }

    std::string name() const override { return label_; }

private:
    std::string label_;
    std::vector<std::size_t> in_shape_;
};

}  // namespace hsicae
