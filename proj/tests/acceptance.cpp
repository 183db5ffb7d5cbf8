// Acceptance suite: runs the end-to-end criteria at pinned tolerances and
// prints one pass/fail line per criterion.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hsicae/cae.hpp"
#include "hsicae/data_io.hpp"
#include "hsicae/gradcheck_suite.hpp"
#include "hsicae/metrics.hpp"
#include "hsicae/nmf.hpp"

using namespace hsicae;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& what, const std::string& why) {
    std::printf("[SKIP] criterion %d: %s (%s)\n", criterion, what.c_str(), why.c_str());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

HsiCube random_cube(std::size_t rows, std::size_t cols, std::size_t bands, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HsiCube cube(rows, cols, bands);
    for (double& v : cube.data) v = u(rng);
    return cube;
}

// Criterion 1: gradient correctness over every layer and the reduced full
// stack, max relative error <= 1e-4 at h=1e-5, runtime < 30 s.
void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool all = true;
    for (const auto& c : run_gradcheck_suite(0)) {
        worst = std::max(worst, c.result.max_rel_err);
        if (!c.pass) all = false;
    }
    const double dt = seconds_since(t0);
    char detail[128];
    std::snprintf(detail, sizeof detail, "max_rel_err=%.3e, %.1f s", worst, dt);
    report(1, "gradient correctness", all && dt < 30.0, detail);
}

// Criterion 2: factorization identity X̂ = S·A at any parameter state.
void criterion_identity() {
    HsiCube cube = random_cube(8, 8, 5, 21);
    double worst = 0.0;
    for (bool trained : {false, true}) {
        Hyperparams hp;
        hp.r = 3;
        hp.seed = 1;
        hp.epochs = trained ? 5 : 0;
        CaeModel model(8, 8, 5, hp);
        if (trained) model.train(cube);
        FactorPair f = model.extract_factors(cube);
        Tensor xhat = reconstruct(f);
        for (std::size_t b = 0; b < 5; ++b) {
            auto [out, h] = model.forward_band(cube.band_image(b), true);
            for (std::size_t p = 0; p < 64; ++p)
                worst = std::max(worst, std::fabs(out.data[p] - xhat.data[p * 5 + b]));
        }
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "max |X̂ - S·A| = %.3e", worst);
    report(2, "factorization identity", worst <= 1e-9, detail);
}

// Criterion 3: blind-unmixing recovery on the standard synthetic scene.
void criterion_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    SceneSpec spec;
    spec.rows = 32;
    spec.cols = 32;
    spec.bands = 40;
    spec.r = 3;
    spec.seed = 2;
    auto [raw, gt] = synth_scene(spec);
    HsiCube cube = normalize_cube(raw);

    double best_sad = 1e300, best_rmse = 1e300;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        Hyperparams hp;
        hp.r = 3;
        hp.epochs = 200;
        hp.dropout_rate = 0.01;
        hp.l2_rate = 1e-4;
        hp.shuffle = true;
        hp.seed = seed;
        CaeModel model(32, 32, 40, hp);
        try {
            model.train(cube);
            FactorPair est = model.extract_factors(cube);
            EvalReport rep = evaluate(est, gt, {"em1", "em2", "em3"});
            if (rep.average_sad + rep.average_rmse < best_sad + best_rmse) {
                best_sad = rep.average_sad;
                best_rmse = rep.average_rmse;
            }
        } catch (const std::exception& e) {
            std::printf("  seed %llu failed: %s\n", static_cast<unsigned long long>(seed),
                        e.what());
        }
    }
    const double dt = seconds_since(t0);
    char detail[160];
    std::snprintf(detail, sizeof detail, "best avg SAD=%.4f (<=0.25), RMSE=%.4f (<=0.20), %.0f s",
                  best_sad, best_rmse, dt);
    report(3, "synthetic blind-unmixing recovery",
           best_sad <= 0.25 && best_rmse <= 0.20 && dt <= 600.0, detail);
}

// Criterion 4: NMF oracle on the same noiseless cube.
void criterion_nmf() {
    SceneSpec spec;
    spec.rows = 32;
    spec.cols = 32;
    spec.bands = 40;
    spec.r = 3;
    spec.seed = 0;
    auto [raw, gt] = synth_scene(spec);
    const Tensor x = normalize_cube(raw).to_matrix();
    double xnorm = 0.0;
    for (double v : x.data) xnorm += v * v;
    xnorm = std::sqrt(xnorm);

    double best = 1e300;
    bool monotone = true;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        NmfConfig cfg;
        cfg.r = 3;
        cfg.max_iters = 2000;
        cfg.seed = seed;
        NmfResult res = nmf(x, cfg);
        for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
            if (res.objective_trace[k] > res.objective_trace[k - 1] + 1e-9) monotone = false;
        const Tensor xhat = matmul(res.S, res.A);
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x.data[i] - xhat.data[i];
            err += d * d;
        }
        best = std::min(best, std::sqrt(err) / xnorm);
    }
    char detail[128];
    std::snprintf(detail, sizeof detail, "best rel Frobenius err=%.2e (<=1e-2), monotone=%s",
                  best, monotone ? "yes" : "no");
    report(4, "NMF oracle", best <= 1e-2 && monotone, detail);
}

// Criterion 5: metric exactness.
void criterion_metrics() {
    bool ok = true;
    std::string note = "all exact";
    try {
        ok &= sad({1, 2, 3}, {1, 2, 3}) == 0.0;
        ok &= std::fabs(sad({1, 0}, {0, 1}) - M_PI / 2) <= 1e-12;
        ok &= sad({1, 2, 3}, {2, 4, 6}) <= 1e-7;
        ok &= rmse({1, 2}, {1, 2}) == 0.0;
        ok &= rmse({0, 0, 0, 0}, {1, 1, 1, 1}) == 1.0;

        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> a(50), b(50);
        for (double& v : a) v = u(rng);
        for (double& v : b) v = u(rng);
        double acc = 0.0;
        for (std::size_t i = 0; i < 50; ++i) acc += (b[i] - a[i]) * (b[i] - a[i]);
        ok &= std::fabs(rmse(a, b) - std::sqrt(acc / 50.0)) <= 1e-12;

        Tensor gtA({4, 12});
        for (double& v : gtA.data) v = u(rng) + 0.05;
        ok &= align_endmembers(gtA, gtA) == std::vector<std::size_t>{0, 1, 2, 3};
        Tensor est = gtA;
        for (std::size_t j = 0; j < 12; ++j)
            std::swap(est.data[0 * 12 + j], est.data[1 * 12 + j]);
        ok &= align_endmembers(est, gtA) == std::vector<std::size_t>{1, 0, 2, 3};
    } catch (const std::exception& e) {
        ok = false;
        note = e.what();
    }
    report(5, "metric exactness", ok, note);
}

// Criterion 6: real-data reporting targets — requires user-supplied cubes.
void criterion_real_data() {
    const char* jasper = std::getenv("HSICAE_JASPER");
    const char* samson = std::getenv("HSICAE_SAMSON");
    if (!jasper && !samson) {
        report_skip(6, "real-data reporting targets",
                    "set HSICAE_JASPER / HSICAE_SAMSON to cube headers; see README for the "
                    "500-epoch workflow");
        return;
    }
    // Smoke-level run only: full 500-epoch, 5-seed reproduction is driven
    // through the CLI (see README); here we verify the cube loads and one
    // epoch of training runs.
    for (const char* env : {jasper, samson}) {
        if (!env) continue;
        try {
            HsiCube cube = normalize_cube(load_cube(env));
            Hyperparams hp;
            hp.r = cube.bands > 160 ? 4 : 3;
            hp.epochs = 1;
            CaeModel model(cube.rows, cube.cols, cube.bands, hp);
            model.train(cube);
            report(6, std::string("real-data smoke on ") + env, true, "1 epoch trained");
        } catch (const std::exception& e) {
            report(6, std::string("real-data smoke on ") + env, false, e.what());
        }
    }
}

// Criterion 7: format round-trips.
void criterion_roundtrips() {
    bool ok = true;
    std::string note = "cube bit-exact, checkpoint bit-exact, CSV 1e-15, PGM valid";
    try {
        fs::path dir = fs::temp_directory_path() / "hsicae_acceptance";
        fs::remove_all(dir);
        fs::create_directories(dir);

        HsiCube cube = random_cube(6, 6, 3, 41);
        save_cube(cube, (dir / "c.hdr").string());
        ok &= load_cube((dir / "c.hdr").string()).data == cube.data;

        Hyperparams hp;
        hp.r = 2;
        hp.epochs = 2;
        CaeModel model(8, 8, 3, hp);
        HsiCube tc = random_cube(8, 8, 3, 43);
        model.train(tc);
        model.save((dir / "m.cae").string());
        CaeModel loaded = CaeModel::load((dir / "m.cae").string());
        for (std::size_t b = 0; b < 3; ++b) {
            auto [x1, h1] = model.forward_band(tc.band_image(b), true);
            auto [x2, h2] = loaded.forward_band(tc.band_image(b), true);
            ok &= x1.data == x2.data && h1.data == h2.data;
        }

        std::mt19937_64 rng(47);
        std::uniform_real_distribution<double> u(0.0, 3.0);
        Tensor m({5, 9});
        for (double& v : m.data) v = u(rng);
        save_matrix_csv(m, (dir / "m.csv").string());
        Tensor back = load_matrix_csv((dir / "m.csv").string());
        for (std::size_t i = 0; i < m.size(); ++i)
            ok &= std::fabs(back.data[i] - m.data[i]) <= 1e-15 * std::max(1.0, m.data[i]);

        Tensor s({16, 2});
        for (double& v : s.data) v = u(rng);
        auto paths = export_abundance_maps(s, 4, 4, (dir / "maps").string());
        for (const auto& p : paths) {
            std::ifstream in(p, std::ios::binary);
            std::string magic;
            std::size_t w, h, maxval;
            in >> magic >> w >> h >> maxval;
            in.get();
            ok &= magic == "P5" && w == 4 && h == 4 && maxval == 255;
            std::vector<char> payload(w * h);
            in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
            ok &= static_cast<std::size_t>(in.gcount()) == w * h;
            ok &= in.peek() == EOF;
        }
    } catch (const std::exception& e) {
        ok = false;
        note = e.what();
    }
    report(7, "format round-trips", ok, note);
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_identity();
    criterion_recovery();
    criterion_nmf();
    criterion_metrics();
    criterion_real_data();
    criterion_roundtrips();
    if (g_failures) std::printf("%d criterion(s) FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
