#pragma once

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "factors.hpp"
#include "layers.hpp"
#include "tensor.hpp"

namespace hsicae {

struct Hyperparams {
    std::size_t r = 3;
    std::size_t epochs = 500;
    double dropout_rate = 0.01;
    double l2_rate = 1e-4;
    double learning_rate = 1e-3;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    bool shuffle = false;

    void validate() const {
        if (r < 1) throw ValueError("hyperparams: r must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ValueError("hyperparams: dropout_rate must be in [0, 1)");
        if (!(l2_rate >= 0.0) || !std::isfinite(l2_rate))
            throw ValueError("hyperparams: l2_rate must be finite and nonnegative");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ValueError("hyperparams: learning_rate must be positive");
        if (batch_size < 1) throw ValueError("hyperparams: batch_size must be >= 1");
    }
};

struct TrainReport {
    std::vector<double> loss_trace;  // per-epoch mean training loss
    double final_loss = 0.0;
    double wall_time_s = 0.0;
};

/// Convolutional autoencoder: Conv16 -> pool -> Conv8 -> pool -> Conv8 ->
/// pool -> Flatten -> Dense 9r -> Dense 6r -> Dense 3r + dropout -> Dense r
/// (bottleneck, ReLU) -> Dense m (linear, bias-free, nonnegative weights).
/// Trained per band: input is a single-band image, target its row-major
/// roll-out. The output-layer weight matrix is the abundance estimate and
/// the bottleneck activations over bands form the endmember estimate.
class CaeModel {
public:
    CaeModel(std::size_t rows, std::size_t cols, std::size_t bands, const Hyperparams& hp)
        : rows_(rows), cols_(cols), bands_(bands), hp_(hp), rng_(hp.seed) {
        hp_.validate();
        if (rows != cols)
            throw ShapeError("cae: input must be square (rows == cols), got " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        if (rows < 8)
            throw ShapeError("cae: rows must be >= 8 so three poolings are nondegenerate");
        build();
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t bands() const { return bands_; }
    std::size_t r() const { return hp_.r; }
    std::size_t pixels() const { return rows_ * cols_; }
    const Hyperparams& hyper() const { return hp_; }
    std::mt19937_64& rng() { return rng_; }
    LayerParams& output_params() { return output_->param_block(); }

    std::vector<Layer*> layer_ptrs() {
        std::vector<Layer*> out;
        for (auto& l : layers_) out.push_back(l.get());
        return out;
    }

    /// Runs one band image through the stack. Returns the reconstructed
    /// roll-out and the bottleneck activations. In eval mode dropout is the
    /// identity, so the output equals W * h exactly (the head is linear and
    /// bias-free).
    std::pair<Tensor, Tensor> forward_band(const Tensor& img, bool eval_mode) {
        if (img.ndim() != 3 || img.dim(0) != rows_ || img.dim(1) != cols_ || img.dim(2) != 1)
            throw ShapeError("forward_band: image shape mismatch");
        Tensor a = img;
        Tensor bottleneck;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            a = layers_[i]->forward(a, !eval_mode);
            if (i == bottleneck_idx_) bottleneck = a;
        }
        return {std::move(a), std::move(bottleneck)};
    }

    /// Band-sequential training with MSE + L2(output weights) loss, Adam
    /// updates, and a nonnegativity projection on the output weights after
    /// every step.
    TrainReport train(const HsiCube& cube) {
        if (cube.rows != rows_ || cube.cols != cols_ || cube.bands != bands_)
            throw ShapeError("train: cube dimensions do not match model");
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t m = pixels();
        TrainReport rep;
        std::vector<std::size_t> order(bands_);
        std::iota(order.begin(), order.end(), 0);

        for (std::size_t epoch = 0; epoch < hp_.epochs; ++epoch) {
            if (hp_.shuffle) std::shuffle(order.begin(), order.end(), rng_);
            double epoch_loss = 0.0;
            std::size_t in_batch = 0;
            zero_grads();
            for (std::size_t bi = 0; bi < bands_; ++bi) {
                const std::size_t band = order[bi];
                const Tensor img = cube.band_image(band);
                Tensor a = img;
                for (auto& l : layers_) a = l->forward(a, true);

                double mse = 0.0;
                Tensor dout({m});
                for (std::size_t j = 0; j < m; ++j) {
                    const double d = a.data[j] - img.data[j];
                    mse += d * d;
                    dout.data[j] = 2.0 * d / static_cast<double>(m);
                }
                mse /= static_cast<double>(m);
                double reg = 0.0;
                for (double w : output_->param_block().w.data) reg += w * w;
                const double loss = mse + hp_.l2_rate * reg;
                if (!std::isfinite(loss))
                    throw NumericalError("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", band " +
                                         std::to_string(band));
                epoch_loss += loss;

                Tensor g = dout;
                for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
                    g = (*it)->backward(g);
                ++in_batch;

                if (in_batch == hp_.batch_size || bi + 1 == bands_) {
                    step(in_batch);
                    zero_grads();
                    in_batch = 0;
                }
            }
            rep.loss_trace.push_back(epoch_loss / static_cast<double>(bands_));
        }
        rep.final_loss = rep.loss_trace.empty() ? 0.0 : rep.loss_trace.back();
        rep.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rep;
    }

    /// Reads off the factor pair: A column b is the bottleneck activation
    /// for band b, S is the output-layer weight matrix.
    FactorPair extract_factors(const HsiCube& cube) {
        if (cube.rows != rows_ || cube.cols != cols_ || cube.bands != bands_)
            throw ShapeError("extract_factors: cube dimensions do not match model");
        const std::size_t m = pixels(), r = hp_.r;
        FactorPair f;
        f.A = Tensor({r, bands_});
        for (std::size_t b = 0; b < bands_; ++b) {
            auto [xhat, h] = forward_band(cube.band_image(b), true);
            for (std::size_t k = 0; k < r; ++k) f.A.data[k * bands_ + b] = h.data[k];
        }
        f.S = Tensor({m, r}, output_->param_block().w.data);
        return f;
    }

    /// Writes the post-pool activations of the three conv stages for one
    /// band as per-channel PGM images (16 + 8 + 8 files), each scaled
    /// independently by its own max.
    std::vector<std::string> dump_feature_maps(const HsiCube& cube, std::size_t band,
                                               const std::string& out_dir) {
        if (band >= bands_) throw ShapeError("dump_feature_maps: band index out of range");
        std::filesystem::create_directories(out_dir);
        Tensor a = cube.band_image(band);
        std::vector<Tensor> stage_out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            a = layers_[i]->forward(a, false);
            if (std::find(pool_idx_.begin(), pool_idx_.end(), i) != pool_idx_.end())
                stage_out.push_back(a);
        }
        std::vector<std::string> paths;
        for (std::size_t s = 0; s < stage_out.size(); ++s) {
            const Tensor& t = stage_out[s];
            const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
            std::vector<double> chan(h * w);
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) chan[i * w + j] = t.at3(i, j, k);
                char name[64];
                std::snprintf(name, sizeof name, "stage%zu_ch%02zu.pgm", s + 1, k);
                const std::string path = (std::filesystem::path(out_dir) / name).string();
                write_pgm(path, h, w, to_gray(chan.data(), chan.size()));
                paths.push_back(path);
            }
        }
        return paths;
    }

    void save(const std::string& path) const;
    static CaeModel load(const std::string& path);

private:
    void build() {
        const std::size_t r = hp_.r, m = rows_ * cols_;
        const std::size_t s1 = rows_ / 2, s2 = s1 / 2, s3 = s2 / 2;
        const std::size_t flat = s3 * s3 * 8;

        auto add = [&](std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); };
        add(std::make_unique<Conv2d>(1, 16, rng_, "conv1"));
        add(std::make_unique<ReLU>("relu1"));
        add(std::make_unique<MaxPool2d>("pool1"));
        add(std::make_unique<Conv2d>(16, 8, rng_, "conv2"));
        add(std::make_unique<ReLU>("relu2"));
        add(std::make_unique<MaxPool2d>("pool2"));
        add(std::make_unique<Conv2d>(8, 8, rng_, "conv3"));
        add(std::make_unique<ReLU>("relu3"));
        add(std::make_unique<MaxPool2d>("pool3"));
        add(std::make_unique<Flatten>("flatten"));
        add(std::make_unique<Dense>(flat, 9 * r, true, rng_, "dense1"));
        add(std::make_unique<ReLU>("relu4"));
        add(std::make_unique<Dense>(9 * r, 6 * r, true, rng_, "dense2"));
        add(std::make_unique<ReLU>("relu5"));
        add(std::make_unique<Dense>(6 * r, 3 * r, true, rng_, "dense3"));
        add(std::make_unique<ReLU>("relu6"));
        add(std::make_unique<Dropout>(hp_.dropout_rate, rng_, "dropout"));
        add(std::make_unique<Dense>(3 * r, r, true, rng_, "bottleneck"));
        add(std::make_unique<ReLU>("relu7"));
        auto out = std::make_unique<Dense>(r, m, false, rng_, "output");
        out->init_uniform(0.0, 0.1, rng_);  // nonnegative from step 0
        output_ = out.get();
        add(std::move(out));

        pool_idx_ = {2, 5, 8};
        bottleneck_idx_ = layers_.size() - 2;  // relu7 output

        all_params_.clear();
        for (auto& l : layers_)
            for (LayerParams* p : l->params()) all_params_.push_back(p);
        adam_m_.clear();
        adam_v_.clear();
        for (LayerParams* p : all_params_) {
            adam_m_.push_back({zeros_like(p->w), p->has_bias ? zeros_like(p->b) : Tensor()});
            adam_v_.push_back({zeros_like(p->w), p->has_bias ? zeros_like(p->b) : Tensor()});
        }
        adam_t_ = 0;
    }

    void zero_grads() {
        for (LayerParams* p : all_params_) p->zero_grads();
    }

    /// One Adam step on all parameters. Accumulated grads are averaged over
    /// the batch; the L2 term on the output weights enters once per step.
    /// Output weights are clamped to >= 0 afterwards (projected gradient).
    void step(std::size_t batch_count) {
        const double inv = 1.0 / static_cast<double>(batch_count);
        LayerParams& op = output_->param_block();
        for (std::size_t i = 0; i < op.gw.size(); ++i)
            op.gw.data[i] = op.gw.data[i] * inv + 2.0 * hp_.l2_rate * op.w.data[i];

        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++adam_t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
        auto update = [&](Tensor& w, const Tensor& grad, Tensor& mo, Tensor& vo,
                          double grad_scale) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = grad.data[i] * grad_scale;
                mo.data[i] = beta1 * mo.data[i] + (1.0 - beta1) * gi;
                vo.data[i] = beta2 * vo.data[i] + (1.0 - beta2) * gi * gi;
                const double mhat = mo.data[i] / bc1;
                const double vhat = vo.data[i] / bc2;
                w.data[i] -= hp_.learning_rate * mhat / (std::sqrt(vhat) + eps);
            }
        };
        for (std::size_t pi = 0; pi < all_params_.size(); ++pi) {
            LayerParams* p = all_params_[pi];
            const double scale = (p == &op) ? 1.0 : inv;  // output grads already averaged
            update(p->w, p->gw, adam_m_[pi].w, adam_v_[pi].w, scale);
            if (p->has_bias) update(p->b, p->gb, adam_m_[pi].b, adam_v_[pi].b, inv);
        }
        for (double& w : op.w.data) w = std::max(0.0, w);
    }

    struct Moments {
        Tensor w, b;
    };

    std::size_t rows_, cols_, bands_;
    Hyperparams hp_;
    std::mt19937_64 rng_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::size_t> pool_idx_;
    std::size_t bottleneck_idx_ = 0;
    Dense* output_ = nullptr;
    std::vector<LayerParams*> all_params_;
    std::vector<Moments> adam_m_, adam_v_;
    std::size_t adam_t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint: magic "CAE1", UTF-8 manifest terminated by a blank line, then
// raw little-endian f64 blobs in declared order.

inline void CaeModel::save(const std::string& path) const {
    std::ostringstream manifest;
    manifest << "version = 1\n"
             << "rows = " << rows_ << "\n"
             << "cols = " << cols_ << "\n"
             << "bands = " << bands_ << "\n"
             << "r = " << hp_.r << "\n"
             << "epochs = " << hp_.epochs << "\n"
             << "dropout_rate = " << detail::fmt_double(hp_.dropout_rate) << "\n"
             << "l2_rate = " << detail::fmt_double(hp_.l2_rate) << "\n"
             << "learning_rate = " << detail::fmt_double(hp_.learning_rate) << "\n"
             << "batch_size = " << hp_.batch_size << "\n"
             << "seed = " << hp_.seed << "\n"
             << "shuffle = " << (hp_.shuffle ? 1 : 0) << "\n";

    std::vector<const Tensor*> blobs;
    std::size_t offset = 0;
    auto declare = [&](const std::string& name, const Tensor& t) {
        manifest << "blob = " << name << " ";
        for (std::size_t i = 0; i < t.shape.size(); ++i)
            manifest << (i ? "x" : "") << t.shape[i];
        const std::size_t len = t.size() * sizeof(double);
        manifest << " " << offset << " " << len << "\n";
        offset += len;
        blobs.push_back(&t);
    };
    for (const auto& l : layers_)
        for (LayerParams* p : const_cast<Layer&>(*l).params()) {
            declare(p->name + ".w", p->w);
            if (p->has_bias) declare(p->name + ".b", p->b);
        }
    manifest << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write("CAE1", 4);
    const std::string mtext = manifest.str();
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const Tensor* t : blobs)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!out) throw IoError("short write on checkpoint " + path);
}

inline CaeModel CaeModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CAE1", 4) != 0)
        throw IoError("checkpoint has bad magic bytes: " + path);

    std::map<std::string, std::string> kv;
    struct BlobDecl {
        std::string name, shape;
        std::size_t offset, len;
    };
    std::vector<BlobDecl> decls;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("checkpoint manifest malformed: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key == "blob") {
            std::istringstream ss(val);
            BlobDecl d;
            if (!(ss >> d.name >> d.shape >> d.offset >> d.len))
                throw IoError("checkpoint blob declaration malformed: " + val);
            decls.push_back(d);
        } else {
            kv[key] = val;
        }
    }
    for (const char* key : {"version", "rows", "cols", "bands", "r"})
        if (!kv.count(key)) throw IoError(std::string("checkpoint missing key: ") + key);
    if (kv["version"] != "1") throw IoError("unsupported checkpoint version " + kv["version"]);

    Hyperparams hp;
    hp.r = std::stoul(kv["r"]);
    if (kv.count("epochs")) hp.epochs = std::stoul(kv["epochs"]);
    if (kv.count("dropout_rate")) hp.dropout_rate = std::stod(kv["dropout_rate"]);
    if (kv.count("l2_rate")) hp.l2_rate = std::stod(kv["l2_rate"]);
    if (kv.count("learning_rate")) hp.learning_rate = std::stod(kv["learning_rate"]);
    if (kv.count("batch_size")) hp.batch_size = std::stoul(kv["batch_size"]);
    if (kv.count("seed")) hp.seed = std::stoull(kv["seed"]);
    if (kv.count("shuffle")) hp.shuffle = kv["shuffle"] != "0";

    CaeModel model(std::stoul(kv["rows"]), std::stoul(kv["cols"]), std::stoul(kv["bands"]), hp);

    std::map<std::string, Tensor*> by_name;
    for (auto& l : model.layers_)
        for (LayerParams* p : l->params()) {
            by_name[p->name + ".w"] = &p->w;
            if (p->has_bias) by_name[p->name + ".b"] = &p->b;
        }
    if (decls.size() != by_name.size())
        throw IoError("checkpoint declares " + std::to_string(decls.size()) +
                      " blobs, model has " + std::to_string(by_name.size()));

    const std::streampos blob_start = in.tellg();
    for (const auto& d : decls) {
        auto it = by_name.find(d.name);
        if (it == by_name.end()) throw IoError("checkpoint has unknown blob " + d.name);
        Tensor* t = it->second;
        std::string want;
        for (std::size_t i = 0; i < t->shape.size(); ++i)
            want += (i ? "x" : "") + std::to_string(t->shape[i]);
        if (want != d.shape)
            throw IoError("checkpoint blob " + d.name + " shape " + d.shape +
                          " does not match model shape " + want);
        if (d.len != t->size() * sizeof(double))
            throw IoError("checkpoint blob " + d.name + " length mismatch");
        in.seekg(blob_start + static_cast<std::streamoff>(d.offset));
        in.read(reinterpret_cast<char*>(t->data.data()), static_cast<std::streamsize>(d.len));
        if (!in) throw IoError("checkpoint truncated while reading blob " + d.name);
    }
    return model;
}

}  // namespace hsicae
