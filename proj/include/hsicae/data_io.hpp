#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "factors.hpp"
#include "metrics.hpp"
#include "tensor.hpp"

namespace hsicae {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cube container: UTF-8 "key = value" header + raw BSQ blob.

inline void save_cube(const HsiCube& cube, const std::string& header_path) {
    namespace fs = std::filesystem;
    fs::path hp(header_path);
    fs::path data_name = hp.stem();
    data_name += ".bsq";
    std::ofstream hdr(hp);
    if (!hdr) throw IoError("cannot write header " + header_path);
    hdr << "rows = " << cube.rows << "\n"
        << "cols = " << cube.cols << "\n"
        << "bands = " << cube.bands << "\n"
        << "dtype = f64\n"
        << "interleave = bsq\n"
        << "byteorder = little\n"
        << "data = " << data_name.string() << "\n";
    hdr.close();
    std::ofstream blob(hp.parent_path() / data_name, std::ios::binary);
    if (!blob) throw IoError("cannot write data blob for " + header_path);
    blob.write(reinterpret_cast<const char*>(cube.data.data()),
               static_cast<std::streamsize>(cube.data.size() * sizeof(double)));
    if (!blob) throw IoError("short write on data blob for " + header_path);
}

inline HsiCube load_cube(const std::string& header_path) {
    namespace fs = std::filesystem;
    std::ifstream hdr(header_path);
    if (!hdr) throw IoError("cannot open header " + header_path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(hdr, line)) {
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed header line: " + line);
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    for (const char* key : {"rows", "cols", "bands", "dtype", "interleave", "byteorder", "data"})
        if (!kv.count(key)) throw IoError(std::string("header missing key: ") + key);
    if (kv["interleave"] != "bsq") throw IoError("unsupported interleave: " + kv["interleave"]);
    if (kv["byteorder"] != "little") throw IoError("unsupported byteorder: " + kv["byteorder"]);
    const std::string dtype = kv["dtype"];
    if (dtype != "f32" && dtype != "f64") throw IoError("unsupported dtype: " + dtype);

    HsiCube cube(std::stoul(kv["rows"]), std::stoul(kv["cols"]), std::stoul(kv["bands"]));
    const fs::path data_path = fs::path(header_path).parent_path() / kv["data"];
    std::ifstream blob(data_path, std::ios::binary);
    if (!blob) throw IoError("cannot open data blob " + data_path.string());
    blob.seekg(0, std::ios::end);
    const std::size_t nbytes = static_cast<std::size_t>(blob.tellg());
    blob.seekg(0);
    const std::size_t elem = dtype == "f64" ? 8 : 4;
    const std::size_t expected = cube.data.size() * elem;
    if (nbytes != expected)
        throw IoError("data blob length mismatch: header declares " + std::to_string(expected) +
                      " bytes, file has " + std::to_string(nbytes));
    if (dtype == "f64") {
        blob.read(reinterpret_cast<char*>(cube.data.data()),
                  static_cast<std::streamsize>(expected));
    } else {
        std::vector<float> tmp(cube.data.size());
        blob.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(expected));
        std::copy(tmp.begin(), tmp.end(), cube.data.begin());
    }
    if (!blob) throw IoError("short read on data blob " + data_path.string());
    return cube;
}

/// Divides all values by the global maximum; result lies in [0, 1].
inline HsiCube normalize_cube(const HsiCube& cube) {
    double maxv = 0.0;
    for (double v : cube.data) maxv = std::max(maxv, v);
    if (!(maxv > 0.0)) throw ValueError("normalize_cube: cube is all zero");
    HsiCube out = cube;
    for (double& v : out.data) v /= maxv;
    return out;
}

// ---------------------------------------------------------------------------
// CSV matrices: comma-separated decimal floats, LF endings, no header row.

inline void save_matrix_csv(const Tensor& mat, const std::string& path) {
    if (mat.ndim() != 2) throw ShapeError("save_matrix_csv: expected a 2-D tensor");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const std::size_t r = mat.dim(0), c = mat.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (j) out << ',';
            out << detail::fmt_double(mat.data[i * c + j]);
        }
        out << '\n';
    }
    if (!out) throw IoError("short write on " + path);
}

inline Tensor load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<double> vals;
    std::size_t cols = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        std::size_t ncols = 0;
        std::size_t pos = 0;
        while (true) {
            const auto comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos
                                                          ? std::string::npos
                                                          : comma - pos);
            char* end = nullptr;
            const std::string trimmed = detail::trim(cell);
            const double v = std::strtod(trimmed.c_str(), &end);
            if (trimmed.empty() || end != trimmed.c_str() + trimmed.size())
                throw IoError("CSV parse error at line " + std::to_string(lineno) +
                              ": bad cell '" + cell + "'");
            vals.push_back(v);
            ++ncols;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cols == 0)
            cols = ncols;
        else if (ncols != cols)
            throw IoError("CSV parse error at line " + std::to_string(lineno) +
                          ": expected " + std::to_string(cols) + " columns, got " +
                          std::to_string(ncols));
        ++rows;
    }
    if (rows == 0) throw IoError("CSV file is empty: " + path);
    return Tensor({rows, cols}, std::move(vals));
}

// ---------------------------------------------------------------------------
// PGM export (binary P5, maxval 255).

inline void write_pgm(const std::string& path, std::size_t rows, std::size_t cols,
                      const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != rows * cols) throw ShapeError("write_pgm: payload size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << cols << ' ' << rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("short write on " + path);
}

/// Scales a nonnegative field by its own max into [0,255]; all-zero fields
/// come out all-black.
inline std::vector<std::uint8_t> to_gray(const double* vals, std::size_t n) {
    double maxv = 0.0;
    for (std::size_t i = 0; i < n; ++i) maxv = std::max(maxv, vals[i]);
    std::vector<std::uint8_t> px(n, 0);
    if (maxv > 0.0)
        for (std::size_t i = 0; i < n; ++i)
            px[i] = static_cast<std::uint8_t>(std::lround(vals[i] / maxv * 255.0));
    return px;
}

/// One PGM per abundance column, each reshaped row-major to rows x cols and
/// scaled by its own max.
inline std::vector<std::string> export_abundance_maps(const Tensor& S, std::size_t rows,
                                                      std::size_t cols,
                                                      const std::string& out_dir) {
    if (S.ndim() != 2 || S.dim(0) != rows * cols)
        throw ShapeError("export_abundance_maps: S rows must equal rows*cols");
    for (double v : S.data)
        if (v < 0.0) throw ValueError("export_abundance_maps: negative abundance");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::size_t m = rows * cols, r = S.dim(1);
    std::vector<std::string> paths;
    std::vector<double> col(m);
    for (std::size_t k = 0; k < r; ++k) {
        for (std::size_t p = 0; p < m; ++p) col[p] = S.data[p * r + k];
        const std::string path =
            (fs::path(out_dir) / ("abundance_" + std::to_string(k) + ".pgm")).string();
        write_pgm(path, rows, cols, to_gray(col.data(), m));
        paths.push_back(path);
    }
    return paths;
}

// ---------------------------------------------------------------------------
// Synthetic linear-mixing scenes.

struct SceneSpec {
    std::size_t rows = 32;
    std::size_t cols = 32;
    std::size_t r = 3;
    std::size_t bands = 40;
    double snr_db = 0.0;  // used only when has_noise
    bool has_noise = false;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> gaussian_bump_signature(std::size_t bands, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    std::uniform_real_distribution<double> center(0.0, static_cast<double>(bands - 1));
    std::uniform_real_distribution<double> width(static_cast<double>(bands) / 20.0,
                                                 static_cast<double>(bands) / 6.0);
    std::vector<double> sig(bands, 0.05);
    for (int g = 0; g < 3; ++g) {
        const double a = amp(rng), mu = center(rng), sg = width(rng);
        for (std::size_t b = 0; b < bands; ++b) {
            const double d = (static_cast<double>(b) - mu) / sg;
            sig[b] += a * std::exp(-0.5 * d * d);
        }
    }
    return sig;
}

/// Smooth random field from a handful of low-frequency cosines.
inline std::vector<double> smooth_field(std::size_t rows, std::size_t cols,
                                        std::mt19937_64& rng) {
    std::normal_distribution<double> coef(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::uniform_int_distribution<int> freq(0, 2);
    std::vector<double> f(rows * cols, 0.0);
    for (int w = 0; w < 4; ++w) {
        const double c = coef(rng), ph = phase(rng);
        const double fu = freq(rng), fv = freq(rng);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                f[i * cols + j] += c * std::cos(2.0 * M_PI *
                                                    (fu * static_cast<double>(i) / rows +
                                                     fv * static_cast<double>(j) / cols) +
                                                ph);
    }
    return f;
}

}  // namespace detail

/// Generates a noiseless-or-noisy cube from exact ground-truth factors:
/// smooth signatures with pairwise SAD >= 0.15, sum-to-one softmax abundance
/// maps, X = S*A, optional white Gaussian noise at snr_db clamped at 0.
inline std::pair<HsiCube, FactorPair> synth_scene(const SceneSpec& spec) {
    if (spec.bands < spec.r || spec.rows * spec.cols < spec.r)
        throw ValueError("synth_scene: need bands >= r and pixels >= r");
    std::mt19937_64 rng(spec.seed);
    const std::size_t m = spec.rows * spec.cols, n = spec.bands, r = spec.r;

    // Signatures, regenerated until pairwise SAD clears the separation floor.
    Tensor A({r, n});
    std::vector<std::vector<double>> sigs;
    for (std::size_t k = 0; k < r; ++k) {
        for (int tries = 0;; ++tries) {
            if (tries > 1000) throw ValueError("synth_scene: cannot separate signatures");
            auto cand = detail::gaussian_bump_signature(n, rng);
            bool ok = true;
            for (const auto& prev : sigs)
                if (sad(prev, cand) < 0.15) {
                    ok = false;
                    break;
                }
            if (ok) {
                sigs.push_back(std::move(cand));
                break;
            }
        }
        for (std::size_t b = 0; b < n; ++b) A.data[k * n + b] = sigs[k][b];
    }

    // Sum-to-one abundances: sharpened softmax of smooth random fields.
    Tensor S({m, r});
    std::vector<std::vector<double>> fields;
    for (std::size_t k = 0; k < r; ++k)
        fields.push_back(detail::smooth_field(spec.rows, spec.cols, rng));
    for (std::size_t p = 0; p < m; ++p) {
        double mx = -1e300;
        for (std::size_t k = 0; k < r; ++k) mx = std::max(mx, 4.0 * fields[k][p]);
        double z = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
            const double e = std::exp(4.0 * fields[k][p] - mx);
            S.data[p * r + k] = e;
            z += e;
        }
        for (std::size_t k = 0; k < r; ++k) S.data[p * r + k] /= z;
    }

    FactorPair gt{S, A};
    Tensor X = reconstruct(gt);

    HsiCube cube(spec.rows, spec.cols, n);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < m; ++p) cube.data[b * m + p] = X.data[p * n + b];

    if (spec.has_noise) {
        double sig_power = 0.0;
        for (double v : cube.data) sig_power += v * v;
        sig_power /= static_cast<double>(cube.data.size());
        const double noise_std = std::sqrt(sig_power * std::pow(10.0, -spec.snr_db / 10.0));
        std::normal_distribution<double> noise(0.0, noise_std);
        for (double& v : cube.data) v = std::max(0.0, v + noise(rng));
    }
    return {std::move(cube), std::move(gt)};
}

}  // namespace hsicae
