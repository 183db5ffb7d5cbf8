#pragma once

#include <random>
#include <string>
#include <vector>

#include "cae.hpp"
#include "grad_check.hpp"
#include "layers.hpp"

namespace hsicae {

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
    bool pass = false;
};

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo,
                            double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data) v = u(rng);
    return t;
}

}  // namespace detail

/// Randomized gradient checks for every layer type plus the full model stack
/// at reduced size (rows=16, r=2). Tolerance 1e-4 against central finite
/// differences at h=1e-5.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 0) {
    const double h = 1e-5, tol = 1e-4;
    std::mt19937_64 rng(seed);
    std::vector<GradCheckCase> cases;
    auto add = [&](const std::string& name, GradCheckResult r) {
        cases.push_back({name, r, r.max_rel_err <= tol});
    };

    {
        Conv2d conv(2, 3, rng, "conv");
        std::vector<Layer*> stack{&conv};
        add("conv2d", grad_check(stack, detail::random_tensor({5, 5, 2}, rng, -1.0, 1.0), h));
    }
    {
        MaxPool2d pool("pool");
        std::vector<Layer*> stack{&pool};
        add("maxpool2d", grad_check(stack, detail::random_tensor({6, 6, 2}, rng, -1.0, 1.0), h));
    }
    {
        Dense dense(7, 4, true, rng, "dense");
        std::vector<Layer*> stack{&dense};
        add("dense", grad_check(stack, detail::random_tensor({7}, rng, -1.0, 1.0), h));
    }
    {
        ReLU relu("relu");
        std::vector<Layer*> stack{&relu};
        // inputs bounded away from the kink
        Tensor x = detail::random_tensor({12}, rng, 0.5, 1.5);
        for (std::size_t i = 0; i < x.size(); i += 2) x.data[i] = -x.data[i];
        add("relu", grad_check(stack, x, h));
    }
    {
        std::mt19937_64 drop_rng(seed);
        Dropout drop(0.3, drop_rng, "dropout");
        std::vector<Layer*> stack{&drop};
        add("dropout", grad_check(stack, detail::random_tensor({20}, rng, -1.0, 1.0), h,
                                  LossHead::Sum, nullptr, &drop_rng, seed + 1, true));
    }
    {
        Flatten flat("flatten");
        Dense dense(18, 5, true, rng, "dense");
        std::vector<Layer*> stack{&flat, &dense};
        add("flatten+dense",
            grad_check(stack, detail::random_tensor({3, 3, 2}, rng, -1.0, 1.0), h));
    }
    {
        Hyperparams hp;
        hp.r = 2;
        hp.seed = seed;
        CaeModel model(16, 16, 4, hp);
        Tensor input = detail::random_tensor({16, 16, 1}, rng, 0.0, 1.0);
        Tensor target = detail::random_tensor({16 * 16}, rng, 0.0, 1.0);
        add("full-stack", grad_check(model.layer_ptrs(), input, h, LossHead::Mse, &target,
                                     &model.rng(), seed + 2, false));
    }
    return cases;
}

}  // namespace hsicae
