#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "factors.hpp"
#include "tensor.hpp"

namespace hsicae {

/// Spectral angle distance, arccos of cosine similarity, in radians.
/// The arccos argument is clamped to [-1, 1] to absorb rounding.
inline double sad(const std::vector<double>& a, const std::vector<double>& ahat) {
    if (a.size() != ahat.size()) throw ShapeError("sad: vector length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * ahat[i];
        na += a[i] * a[i];
        nb += ahat[i] * ahat[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw ValueError("sad: zero-norm vector");
    // compare squares first so identical and proportional vectors come out
    // at exactly 0 (or pi) instead of acos of a value one ulp below 1
    if (dot * dot >= na * nb) return dot > 0.0 ? 0.0 : M_PI;
    const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return std::acos(c);
}

/// Root mean squared error between two equal-length vectors.
inline double rmse(const std::vector<double>& s, const std::vector<double>& shat) {
    if (s.size() != shat.size()) throw ShapeError("rmse: vector length mismatch");
    if (s.empty()) throw ShapeError("rmse: empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = shat[i] - s[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(s.size()));
}

inline std::vector<double> matrix_row(const Tensor& m, std::size_t i) {
    const std::size_t c = m.dim(1);
    return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(i * c),
                               m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
}

inline std::vector<double> matrix_col(const Tensor& m, std::size_t j) {
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(r);
    for (std::size_t i = 0; i < r; ++i) out[i] = m.data[i * c + j];
    return out;
}

/// Bijection mapping estimated endmember index -> ground-truth index that
/// minimizes total SAD over matched signature rows. Brute force over r!
/// assignments; ties go to the lexicographically smallest permutation.
inline std::vector<std::size_t> align_endmembers(const Tensor& a_hat, const Tensor& a_gt) {
    if (a_hat.ndim() != 2 || !a_hat.same_shape(a_gt))
        throw ShapeError("align_endmembers: factor shape mismatch");
    const std::size_t r = a_hat.dim(0);
    if (r > 8) throw ValueError("align_endmembers: r > 8 unsupported");
    std::vector<std::vector<double>> cost(r, std::vector<double>(r));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            cost[i][j] = sad(matrix_row(a_hat, i), matrix_row(a_gt, j));
    std::vector<std::size_t> perm(r), best(r);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_cost = 1e300;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < r; ++i) c += cost[i][perm[i]];
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Divides each column by its own maximum (all-zero columns untouched),
/// mapping each abundance map into [0, 1].
inline Tensor normalize_abundance_maps(const Tensor& s) {
    if (s.ndim() != 2) throw ShapeError("normalize_abundance_maps: expected 2-D");
    for (double v : s.data)
        if (v < 0.0) throw ValueError("normalize_abundance_maps: negative entry");
    const std::size_t m = s.dim(0), r = s.dim(1);
    Tensor out = s;
    for (std::size_t k = 0; k < r; ++k) {
        double mx = 0.0;
        for (std::size_t p = 0; p < m; ++p) mx = std::max(mx, s.data[p * r + k]);
        if (mx > 0.0)
            for (std::size_t p = 0; p < m; ++p) out.data[p * r + k] /= mx;
    }
    return out;
}

struct EvalReport {
    struct Entry {
        std::string name;
        double sad;
        double rmse;
    };
    std::vector<Entry> per_endmember;  // in ground-truth class order
    double average_sad = 0.0;
    double average_rmse = 0.0;
    std::vector<std::size_t> permutation;  // estimated index -> ground-truth index
};

/// Aligns estimated to ground-truth endmembers by total SAD, then reports
/// per-class SAD on signatures and RMSE on max-normalized abundance columns
/// under the same permutation.
inline EvalReport evaluate(const FactorPair& est, const FactorPair& gt,
                           const std::vector<std::string>& names) {
    if (!est.A.same_shape(gt.A) || !est.S.same_shape(gt.S))
        throw ShapeError("evaluate: factor shape mismatch");
    const std::size_t r = est.A.dim(0);
    if (names.size() != r) throw ShapeError("evaluate: need one name per endmember");

    EvalReport rep;
    rep.permutation = align_endmembers(est.A, gt.A);
    const Tensor sn_est = normalize_abundance_maps(est.S);
    const Tensor sn_gt = normalize_abundance_maps(gt.S);

    // inverse permutation: ground-truth index -> estimated index
    std::vector<std::size_t> inv(r);
    for (std::size_t i = 0; i < r; ++i) inv[rep.permutation[i]] = i;

    for (std::size_t g = 0; g < r; ++g) {
        const std::size_t i = inv[g];
        EvalReport::Entry e;
        e.name = names[g];
        e.sad = sad(matrix_row(est.A, i), matrix_row(gt.A, g));
        e.rmse = rmse(matrix_col(sn_gt, g), matrix_col(sn_est, i));
        rep.per_endmember.push_back(e);
        rep.average_sad += e.sad;
        rep.average_rmse += e.rmse;
    }
    rep.average_sad /= static_cast<double>(r);
    rep.average_rmse /= static_cast<double>(r);
    return rep;
}

inline std::string format_report(const EvalReport& rep) {
    std::ostringstream out;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-12s %10s %10s\n", "class", "SAD", "RMSE");
    out << buf;
    for (const auto& e : rep.per_endmember) {
        std::snprintf(buf, sizeof buf, "%-12s %10.4f %10.4f\n", e.name.c_str(), e.sad, e.rmse);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-12s %10.4f %10.4f\n", "Average", rep.average_sad,
                  rep.average_rmse);
    out << buf;
    return out.str();
}

inline void save_report_csv(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    char buf[96];
    for (const auto& e : rep.per_endmember) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", e.name.c_str(), e.sad, e.rmse);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "Average,%.17g,%.17g\n", rep.average_sad, rep.average_rmse);
    out << buf;
}

}  // namespace hsicae
