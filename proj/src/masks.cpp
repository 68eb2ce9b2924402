#include "losa/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "losa/error.hpp"

namespace losa {

const char* scorer_name(Scorer s) {
    return s == Scorer::wanda ? "wanda" : "magnitude";
}

Mask::Mask(int r, int c, uint8_t fill)
    : rows(r), cols(c), bits(static_cast<size_t>(r) * c, fill) {
    recount();
}

size_t Mask::zeros() const {
    size_t z = 0;
    for (uint8_t b : bits) z += (b == 0);
    return z;
}

void Mask::recount() {
    sparsity = bits.empty() ? 0.0 : static_cast<double>(zeros()) / static_cast<double>(bits.size());
}

ScoreMatrix wanda_scores(const Matrix& w_eff, const Matrix& x_in) {
    if (x_in.cols != w_eff.cols) {
        throw shape_error("wanda_scores: input map is " + shape_str(x_in) +
                          " but weight is " + shape_str(w_eff) +
                          "; need x.cols == w.cols");
    }
    // Column norms of the input map, one per input feature.
    std::vector<double> col_norm(static_cast<size_t>(x_in.cols), 0.0);
    for (int r = 0; r < x_in.rows; ++r) {
        for (int c = 0; c < x_in.cols; ++c) {
            double v = x_in(r, c);
            col_norm[static_cast<size_t>(c)] += v * v;
        }
    }
    for (double& v : col_norm) v = std::sqrt(v);

    ScoreMatrix out;
    out.scorer = Scorer::wanda;
    out.scores = Matrix(w_eff.rows, w_eff.cols);
    for (int r = 0; r < w_eff.rows; ++r) {
        for (int c = 0; c < w_eff.cols; ++c) {
            out.scores(r, c) = std::abs(w_eff(r, c)) * col_norm[static_cast<size_t>(c)];
        }
    }
    return out;
}

ScoreMatrix magnitude_scores(const Matrix& w_eff) {
    ScoreMatrix out;
    out.scorer = Scorer::magnitude;
    out.scores = Matrix(w_eff.rows, w_eff.cols);
    for (size_t i = 0; i < w_eff.data.size(); ++i) {
        out.scores.data[i] = std::abs(w_eff.data[i]);
    }
    return out;
}

Mask unstructured_mask(const ScoreMatrix& scores, double s) {
    if (s < 0.0 || s > 1.0) {
        throw numeric_error("unstructured_mask: sparsity " + std::to_string(s) +
                            " outside [0, 1]");
    }
    const Matrix& sc = scores.scores;
    size_t n = sc.data.size();
    long long k = round_half_even(s * static_cast<double>(n));
    if (k < 0) k = 0;
    if (k > static_cast<long long>(n)) k = static_cast<long long>(n);

    Mask m(sc.rows, sc.cols, 1);
    if (k > 0) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        // Stable order under ties: lower score first, then lower row-major
        // index. This makes masks for increasing s nested.
        auto lower = [&sc](size_t a, size_t b) {
            if (sc.data[a] != sc.data[b]) return sc.data[a] < sc.data[b];
            return a < b;
        };
        std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), lower);
        for (long long i = 0; i < k; ++i) m.bits[idx[static_cast<size_t>(i)]] = 0;
    }
    m.recount();
    return m;
}

Mask nm_mask(const ScoreMatrix& scores, int n_keep, int m_group) {
    if (m_group <= 0) {
        throw numeric_error("nm_mask: group size " + std::to_string(m_group) + " must be positive");
    }
    if (n_keep < 0 || n_keep > m_group) {
        throw numeric_error("nm_mask: n_keep " + std::to_string(n_keep) +
                            " outside [0, " + std::to_string(m_group) + "]");
    }
    const Matrix& sc = scores.scores;
    Mask m(sc.rows, sc.cols, 0);
    std::vector<int> order;
    for (int r = 0; r < sc.rows; ++r) {
        for (int g0 = 0; g0 < sc.cols; g0 += m_group) {
            int len = std::min(m_group, sc.cols - g0);
            int keep = n_keep;
            if (len < m_group) {
                keep = static_cast<int>(
                    std::ceil(static_cast<double>(n_keep) * len / static_cast<double>(m_group)));
            }
            if (keep > len) keep = len;
            order.resize(static_cast<size_t>(len));
            std::iota(order.begin(), order.end(), 0);
            // Higher score first; ties keep the earlier column.
            auto higher = [&](int a, int b) {
                double sa = sc(r, g0 + a), sb = sc(r, g0 + b);
                if (sa != sb) return sa > sb;
                return a < b;
            };
            std::partial_sort(order.begin(), order.begin() + keep, order.end(), higher);
            for (int i = 0; i < keep; ++i) {
                m.bits[static_cast<size_t>(r) * sc.cols + g0 + order[static_cast<size_t>(i)]] = 1;
            }
        }
    }
    m.recount();
    return m;
}

Matrix apply_mask(const Mask& m, const Matrix& w) {
    if (m.rows != w.rows || m.cols != w.cols) {
        throw shape_error("apply_mask: mask is " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols) + " but weight is " + shape_str(w));
    }
    Matrix out(w.rows, w.cols);
    for (size_t i = 0; i < w.data.size(); ++i) {
        out.data[i] = m.bits[i] ? w.data[i] : 0.0;
    }
    return out;
}

}  // namespace losa
