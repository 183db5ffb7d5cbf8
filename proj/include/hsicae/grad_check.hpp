#pragma once

#include <random>
#include <string>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace hsicae {

enum class LossHead { Sum, Mse };

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst = "";
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
};

namespace detail {

struct StackEval {
    const std::vector<Layer*>& stack;
    LossHead head;
    const Tensor* target;
    std::mt19937_64* rng;
    std::uint64_t rng_seed;
    bool training;

    double loss_of(const Tensor& out) const {
        if (head == LossHead::Sum) {
            double s = 0.0;
            for (double v : out.data) s += v;
            return s;
        }
        if (out.size() != target->size())
            throw ShapeError("grad_check: target length mismatch");
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out.data[i] - target->data[i];
            s += d * d;
        }
        return s / static_cast<double>(out.size());
    }

    Tensor loss_grad(const Tensor& out) const {
        Tensor g(out.shape);
        if (head == LossHead::Sum) {
            g.fill(1.0);
        } else {
            const double inv = 2.0 / static_cast<double>(out.size());
            for (std::size_t i = 0; i < out.size(); ++i)
                g.data[i] = inv * (out.data[i] - target->data[i]);
        }
        return g;
    }

    double run(const Tensor& input, std::vector<std::vector<std::size_t>>* selections) const {
        if (rng) rng->seed(rng_seed);
        Tensor a = input;
        if (selections) selections->clear();
        for (Layer* l : stack) {
            a = l->forward(a, training);
            if (selections) selections->push_back(l->selection());
        }
        return loss_of(a);
    }
};

}  // namespace detail

/// Compares every analytic parameter/input gradient of a layer stack with a
/// central finite difference at step h. Relative error denominator is
/// max(|analytic|, |numeric|, 1e-8). Coordinates whose perturbation flips a
/// ReLU sign, pool argmax, or dropout mask relative to the base evaluation
/// are skipped (the analytic derivative is not defined across the kink).
inline GradCheckResult grad_check(const std::vector<Layer*>& stack, Tensor input, double h,
                                  LossHead head = LossHead::Sum, const Tensor* target = nullptr,
                                  std::mt19937_64* rng = nullptr, std::uint64_t rng_seed = 0,
                                  bool training = false) {
    if (!(h > 0.0)) throw ValueError("grad_check: step must be positive");
    detail::StackEval ev{stack, head, target, rng, rng_seed, training};

    // Analytic pass.
    std::vector<std::vector<std::size_t>> base_sel;
    if (rng) rng->seed(rng_seed);
    Tensor a = input;
    for (Layer* l : stack) {
        for (LayerParams* p : l->params()) p->zero_grads();
        a = l->forward(a, training);
        base_sel.push_back(l->selection());
    }
    Tensor g = ev.loss_grad(a);
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) g = (*it)->backward(g);
    const Tensor input_grad = g;

    GradCheckResult res;
    // The loss is piecewise quadratic in any single coordinate (selections
    // fixed), so the central difference is exact up to roundoff. When the
    // base step is roundoff-limited (tiny analytic gradient against an O(1)
    // loss) we retry with a larger step and keep the best valid estimate.
    auto probe = [&](double* coord, double analytic, const std::string& where) {
        const double old = *coord;
        double best_rel = -1.0;
        for (const double step : {h, 100.0 * h}) {
            std::vector<std::vector<std::size_t>> sel_p, sel_m;
            *coord = old + step;
            const double fp = ev.run(input, &sel_p);
            *coord = old - step;
            const double fm = ev.run(input, &sel_m);
            *coord = old;
            if (sel_p != base_sel || sel_m != base_sel) continue;
            const double numeric = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (best_rel < 0.0 || rel < best_rel) best_rel = rel;
            if (best_rel <= 1e-6) break;
        }
        if (best_rel < 0.0) {
            ++res.skipped;
            return;
        }
        ++res.checked;
        if (best_rel > res.max_rel_err) {
            res.max_rel_err = best_rel;
            res.worst = where;
        }
    };

    for (Layer* l : stack)
        for (LayerParams* p : l->params()) {
            for (std::size_t i = 0; i < p->w.size(); ++i)
                probe(&p->w.data[i], p->gw.data[i], p->name + ".w[" + std::to_string(i) + "]");
            if (p->has_bias)
                for (std::size_t i = 0; i < p->b.size(); ++i)
                    probe(&p->b.data[i], p->gb.data[i], p->name + ".b[" + std::to_string(i) + "]");
        }
    for (std::size_t i = 0; i < input.size(); ++i)
        probe(&input.data[i], input_grad.data[i], "input[" + std::to_string(i) + "]");
    return res;
}

}  // namespace hsicae
