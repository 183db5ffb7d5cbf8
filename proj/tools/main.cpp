// Command-line pipeline: synthesize scenes, train the autoencoder, extract
// and evaluate factors, run the NMF baseline, and dump diagnostics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsicae/cae.hpp"
#include "hsicae/data_io.hpp"
#include "hsicae/factors.hpp"
#include "hsicae/gradcheck_suite.hpp"
#include "hsicae/metrics.hpp"
#include "hsicae/nmf.hpp"

namespace fs = std::filesystem;
using namespace hsicae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::vector<std::string> split_names(const std::string& csv, std::size_t r) {
    std::vector<std::string> names;
    if (!csv.empty()) {
        std::stringstream ss(csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
    }
    if (names.empty())
        for (std::size_t i = 0; i < r; ++i) names.push_back("em" + std::to_string(i + 1));
    if (names.size() != r)
        throw ValueError("expected " + std::to_string(r) + " names, got " +
                         std::to_string(names.size()));
    return names;
}

void write_trace_csv(const std::vector<double>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << ',' << detail::fmt_double(trace[i]) << '\n';
}

int cmd_synth(const SceneSpec& spec, const std::string& out_dir) {
    auto [cube, gt] = synth_scene(spec);
    fs::create_directories(out_dir);
    save_cube(cube, (fs::path(out_dir) / "scene.hdr").string());
    save_matrix_csv(gt.A, (fs::path(out_dir) / "gt_endmembers.csv").string());
    save_matrix_csv(gt.S, (fs::path(out_dir) / "gt_abundances.csv").string());
    std::cout << "synth: " << spec.rows << "x" << spec.cols << "x" << spec.bands
              << " cube, r=" << spec.r << ", seed=" << spec.seed;
    if (spec.has_noise) std::cout << ", snr_db=" << spec.snr_db;
    std::cout << " -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& cube_path, const Hyperparams& hp, const std::string& out_dir) {
    HsiCube cube = normalize_cube(load_cube(cube_path));
    std::cout << "train: cube " << cube.rows << "x" << cube.cols << "x" << cube.bands
              << ", r=" << hp.r << ", epochs=" << hp.epochs << ", dropout=" << hp.dropout_rate
              << ", l2=" << hp.l2_rate << ", lr=" << hp.learning_rate
              << ", batch_size=" << hp.batch_size << ", seed=" << hp.seed
              << ", shuffle=" << (hp.shuffle ? 1 : 0) << "\n";
    CaeModel model(cube.rows, cube.cols, cube.bands, hp);
    TrainReport rep = model.train(cube);
    for (std::size_t e = 0; e < rep.loss_trace.size(); ++e)
        if (hp.epochs <= 20 || (e + 1) % std::max<std::size_t>(1, hp.epochs / 20) == 0)
            std::cout << "  epoch " << e + 1 << "/" << hp.epochs
                      << " loss=" << rep.loss_trace[e] << "\n";
    fs::create_directories(out_dir);
    model.save((fs::path(out_dir) / "model.cae").string());
    write_trace_csv(rep.loss_trace, (fs::path(out_dir) / "loss.csv").string());
    std::cout << "train: final loss " << rep.final_loss << " in " << rep.wall_time_s
              << " s -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_unmix(const std::string& ckpt, const std::string& cube_path, const std::string& out_dir,
              bool verify) {
    CaeModel model = CaeModel::load(ckpt);
    HsiCube cube = normalize_cube(load_cube(cube_path));
    FactorPair f = model.extract_factors(cube);
    fs::create_directories(out_dir);
    save_matrix_csv(f.A, (fs::path(out_dir) / "endmembers.csv").string());
    save_matrix_csv(f.S, (fs::path(out_dir) / "abundances.csv").string());
    export_abundance_maps(f.S, cube.rows, cube.cols, out_dir);

    const Tensor xhat = reconstruct(f);
    const Tensor x = cube.to_matrix();
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = xhat.data[i] - x.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    std::cout << "unmix: reconstruction MSE " << mse << ", seed=" << model.hyper().seed
              << " -> " << out_dir << "\n";

    if (verify) {
        double worst = 0.0;
        const std::size_t m = model.pixels();
        for (std::size_t b = 0; b < cube.bands; ++b) {
            auto [out, h] = model.forward_band(cube.band_image(b), true);
            for (std::size_t p = 0; p < m; ++p)
                worst = std::max(worst, std::fabs(out.data[p] - xhat.data[p * cube.bands + b]));
        }
        std::cout << "verify: max |forward - S*A| = " << worst << "\n";
        if (worst > 1e-9) {
            std::cerr << "verify: factorization identity violated (tolerance 1e-9)\n";
            return kExitCheckFailed;
        }
    }
    return kExitOk;
}

int cmd_eval(const std::string& est_a, const std::string& est_s, const std::string& gt_a,
             const std::string& gt_s, const std::string& names_csv, const std::string& out_csv) {
    FactorPair est{load_matrix_csv(est_s), load_matrix_csv(est_a)};
    FactorPair gt{load_matrix_csv(gt_s), load_matrix_csv(gt_a)};
    const auto names = split_names(names_csv, gt.A.dim(0));
    EvalReport rep = evaluate(est, gt, names);
    std::cout << format_report(rep);
    if (!out_csv.empty()) save_report_csv(rep, out_csv);
    return kExitOk;
}

int cmd_nmf(const std::string& cube_path, const NmfConfig& cfg, const std::string& out_dir) {
    HsiCube cube = normalize_cube(load_cube(cube_path));
    std::cout << "nmf: cube " << cube.rows << "x" << cube.cols << "x" << cube.bands
              << ", r=" << cfg.r << ", max_iters=" << cfg.max_iters << ", tol=" << cfg.tol
              << ", seed=" << cfg.seed << "\n";
    NmfResult res = nmf(cube.to_matrix(), cfg);
    fs::create_directories(out_dir);
    save_matrix_csv(res.A, (fs::path(out_dir) / "endmembers.csv").string());
    save_matrix_csv(res.S, (fs::path(out_dir) / "abundances.csv").string());
    export_abundance_maps(res.S, cube.rows, cube.cols, out_dir);
    write_trace_csv(res.objective_trace, (fs::path(out_dir) / "objective.csv").string());
    std::cout << "nmf: final objective " << res.objective_trace.back() << " after "
              << res.objective_trace.size() - 1 << " iterations -> " << out_dir << "\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto cases = run_gradcheck_suite(seed);
    bool all_pass = true;
    for (const auto& c : cases) {
        std::printf("%-14s max_rel_err=%.3e checked=%zu skipped=%zu %s\n", c.name.c_str(),
                    c.result.max_rel_err, c.result.checked, c.result.skipped,
                    c.pass ? "PASS" : "FAIL");
        if (!c.pass) {
            std::printf("  worst coordinate: %s\n", c.result.worst.c_str());
            all_pass = false;
        }
    }
    return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_featmaps(const std::string& ckpt, const std::string& cube_path, std::size_t band,
                 const std::string& out_dir) {
    CaeModel model = CaeModel::load(ckpt);
    HsiCube cube = normalize_cube(load_cube(cube_path));
    const auto paths = model.dump_feature_maps(cube, band, out_dir);
    std::cout << "featmaps: wrote " << paths.size() << " maps for band " << band << " -> "
              << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blind hyperspectral unmixing with a per-band convolutional autoencoder"};
    app.require_subcommand(1);

    // synth
    SceneSpec spec;
    double snr = 0.0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic linear-mixing scene");
    synth->add_option("--rows", spec.rows, "Scene rows")->capture_default_str();
    synth->add_option("--cols", spec.cols, "Scene cols")->capture_default_str();
    synth->add_option("--bands", spec.bands, "Spectral bands")->capture_default_str();
    synth->add_option("--r", spec.r, "Endmember count")->capture_default_str();
    auto* snr_opt = synth->add_option("--snr", snr, "Noise level in dB (omit for noiseless)");
    synth->add_option("--seed", spec.seed, "RNG seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->required();

    // train
    Hyperparams hp;
    std::string train_cube, train_out;
    auto* train = app.add_subcommand("train", "Train the autoencoder on a cube");
    train->add_option("--cube", train_cube, "Cube header path")->required();
    train->add_option("--r", hp.r, "Endmember count")->required();
    train->add_option("--epochs", hp.epochs, "Training epochs")->capture_default_str();
    train->add_option("--dropout", hp.dropout_rate, "Dropout rate")->capture_default_str();
    train->add_option("--l2", hp.l2_rate, "L2 rate on output weights")->capture_default_str();
    train->add_option("--lr", hp.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--batch-size", hp.batch_size, "Bands per optimizer step")
        ->capture_default_str();
    train->add_option("--seed", hp.seed, "RNG seed")->capture_default_str();
    train->add_flag("--shuffle", hp.shuffle, "Shuffle band order each epoch");
    train->add_option("--out", train_out, "Output directory")->required();

    // unmix
    std::string unmix_ckpt, unmix_cube, unmix_out;
    bool verify = false;
    auto* unmix = app.add_subcommand("unmix", "Extract factors from a trained checkpoint");
    unmix->add_option("--checkpoint", unmix_ckpt, "Checkpoint path")->required();
    unmix->add_option("--cube", unmix_cube, "Cube header path")->required();
    unmix->add_option("--out", unmix_out, "Output directory")->required();
    unmix->add_flag("--verify", verify, "Check the factorization identity (tolerance 1e-9)");

    // eval
    std::string est_a, est_s, gt_a, gt_s, names_csv, report_csv;
    auto* eval = app.add_subcommand("eval", "Score estimated factors against ground truth");
    eval->add_option("--est-endmembers", est_a, "Estimated endmembers CSV")->required();
    eval->add_option("--est-abundances", est_s, "Estimated abundances CSV")->required();
    eval->add_option("--gt-endmembers", gt_a, "Ground-truth endmembers CSV")->required();
    eval->add_option("--gt-abundances", gt_s, "Ground-truth abundances CSV")->required();
    eval->add_option("--names", names_csv, "Comma-separated class names");
    eval->add_option("--out", report_csv, "Report CSV path");

    // nmf
    NmfConfig nmf_cfg;
    std::string nmf_cube, nmf_out;
    auto* nmf_cmd = app.add_subcommand("nmf", "Multiplicative-update NMF baseline");
    nmf_cmd->add_option("--cube", nmf_cube, "Cube header path")->required();
    nmf_cmd->add_option("--r", nmf_cfg.r, "Endmember count")->required();
    nmf_cmd->add_option("--iters", nmf_cfg.max_iters, "Max iterations")->capture_default_str();
    nmf_cmd->add_option("--tol", nmf_cfg.tol, "Relative objective stop")->capture_default_str();
    nmf_cmd->add_option("--seed", nmf_cfg.seed, "RNG seed")->capture_default_str();
    nmf_cmd->add_option("--out", nmf_out, "Output directory")->required();

    // gradcheck
    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck->add_option("--seed", gc_seed, "RNG seed")->capture_default_str();

    // featmaps
    std::string fm_ckpt, fm_cube, fm_out;
    std::size_t fm_band = 0;
    auto* featmaps = app.add_subcommand("featmaps", "Dump conv-stage feature maps as PGM");
    featmaps->add_option("--checkpoint", fm_ckpt, "Checkpoint path")->required();
    featmaps->add_option("--cube", fm_cube, "Cube header path")->required();
    featmaps->add_option("--band", fm_band, "Band index")->required();
    featmaps->add_option("--out", fm_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth) {
            spec.has_noise = snr_opt->count() > 0;
            spec.snr_db = snr;
            return cmd_synth(spec, synth_out);
        }
        if (*train) return cmd_train(train_cube, hp, train_out);
        if (*unmix) return cmd_unmix(unmix_ckpt, unmix_cube, unmix_out, verify);
        if (*eval) return cmd_eval(est_a, est_s, gt_a, gt_s, names_csv, report_csv);
        if (*nmf_cmd) return cmd_nmf(nmf_cube, nmf_cfg, nmf_out);
        if (*gradcheck) return cmd_gradcheck(gc_seed);
        if (*featmaps) return cmd_featmaps(fm_ckpt, fm_cube, fm_band, fm_out);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
