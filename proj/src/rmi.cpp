#include "losa/rmi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "losa/error.hpp"

namespace losa {

namespace {

Matrix center_columns(const Matrix& x) {
    Matrix out = x;
    for (int c = 0; c < x.cols; ++c) {
        double mean = 0.0;
        for (int r = 0; r < x.rows; ++r) mean += x(r, c);
        mean /= static_cast<double>(x.rows);
        for (int r = 0; r < x.rows; ++r) out(r, c) -= mean;
    }
    return out;
}

}  // namespace

NhsicValue nhsic(const Matrix& x, const Matrix& y, bool center) {
    if (x.rows != y.rows) {
        throw shape_error("nhsic: maps have " + std::to_string(x.rows) + " and " +
                          std::to_string(y.rows) + " samples; need the same count");
    }
    if (x.rows == 0) {
        throw shape_error("nhsic: empty feature maps");
    }
    Matrix xc = center ? center_columns(x) : x;
    Matrix yc = center ? center_columns(y) : y;

    double cross = frobenius_norm_sq(matmul(transpose(yc), xc));
    double nx = frobenius_norm(matmul(transpose(xc), xc));
    double ny = frobenius_norm(matmul(transpose(yc), yc));
    if (nx == 0.0 || ny == 0.0) {
        return {0.0, true};
    }
    double v = cross / (nx * ny);
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return {v, false};
}

ImportanceVector importance(const std::vector<Matrix>& maps, bool center) {
    size_t n = maps.size();
    ImportanceVector out;
    out.p.assign(n, 0.0);
    out.degenerate.assign(n, 0);
    std::vector<double> sums(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            NhsicValue v = nhsic(maps[i], maps[j], center);
            sums[i] += v.value;
            sums[j] += v.value;
            if (v.degenerate) {
                out.degenerate[i] = 1;
                out.degenerate[j] = 1;
            }
        }
    }
    for (size_t i = 0; i < n; ++i) out.p[i] = std::exp(-sums[i]);
    return out;
}

std::vector<double> allocate_sparsity(const std::vector<double>& p, double theta,
                                      const std::vector<double>& lo,
                                      const std::vector<double>& hi) {
    size_t n = p.size();
    if (lo.size() != n || hi.size() != n) {
        throw shape_error("allocate_sparsity: importance has " + std::to_string(n) +
                          " entries but bounds have " + std::to_string(lo.size()) + " and " +
                          std::to_string(hi.size()));
    }
    if (n == 0) return {};
    for (size_t i = 0; i < n; ++i) {
        if (lo[i] < 0.0 || hi[i] > 1.0 || lo[i] > hi[i]) {
            throw numeric_error("allocate_sparsity: bad box [" + std::to_string(lo[i]) + ", " +
                                std::to_string(hi[i]) + "] for layer " + std::to_string(i));
        }
    }
    double sum_lo = std::accumulate(lo.begin(), lo.end(), 0.0);
    double sum_hi = std::accumulate(hi.begin(), hi.end(), 0.0);
    double budget = theta * static_cast<double>(n);
    if (budget < sum_lo - 1e-12 || budget > sum_hi + 1e-12) {
        throw numeric_error("allocate_sparsity: mean sparsity " + std::to_string(theta) +
                            " is infeasible; bounds admit [" +
                            std::to_string(sum_lo / static_cast<double>(n)) + ", " +
                            std::to_string(sum_hi / static_cast<double>(n)) + "]");
    }

    // Equal importance with theta inside every box has the uniform optimum;
    // return it exactly rather than a greedy corner.
    bool all_equal = std::all_of(p.begin(), p.end(), [&](double v) { return v == p[0]; });
    bool theta_fits = true;
    for (size_t i = 0; i < n; ++i) theta_fits = theta_fits && lo[i] <= theta && theta <= hi[i];
    if (all_equal && theta_fits) {
        return std::vector<double>(n, theta);
    }

    // Greedy water-filling: everyone starts at the lower bound; surplus
    // sparsity flows to the least important layers first, which minimizes
    // p . s over the box with the mean pinned.
    std::vector<double> s = lo;
    double surplus = budget - sum_lo;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (p[a] != p[b]) return p[a] < p[b];
        return a < b;
    });
    for (size_t idx : order) {
        if (surplus <= 0.0) break;
        double room = hi[idx] - lo[idx];
        double add = std::min(surplus, room);
        s[idx] += add;
        surplus -= add;
    }
    return s;
}

std::vector<int> allocate_nm(const std::vector<double>& p, double mean_sparsity, int m_group) {
    size_t n = p.size();
    if (m_group <= 0) {
        throw numeric_error("allocate_nm: group size " + std::to_string(m_group) +
                            " must be positive");
    }
    if (mean_sparsity < 0.0 || mean_sparsity > 1.0) {
        throw numeric_error("allocate_nm: mean sparsity " + std::to_string(mean_sparsity) +
                            " outside [0, 1]");
    }
    if (n == 0) return {};

    double keep_frac = 1.0 - mean_sparsity;
    long long k0 = round_half_even(static_cast<double>(m_group) * keep_frac);
    k0 = std::max<long long>(1, std::min<long long>(m_group, k0));
    long long target = round_half_even(static_cast<double>(n) *
                                       static_cast<double>(m_group) * keep_frac);
    target = std::max<long long>(static_cast<long long>(n),
                                 std::min<long long>(static_cast<long long>(n) * m_group, target));

    std::vector<int> k(n, static_cast<int>(k0));
    long long total = k0 * static_cast<long long>(n);

    auto most_important_with_room = [&]() -> long long {
        long long best = -1;
        for (size_t i = 0; i < n; ++i) {
            if (k[i] >= m_group) continue;
            if (best < 0 || p[i] > p[static_cast<size_t>(best)]) best = static_cast<long long>(i);
        }
        return best;
    };
    auto least_important_above_one = [&]() -> long long {
        long long best = -1;
        for (size_t i = 0; i < n; ++i) {
            if (k[i] <= 1) continue;
            if (best < 0 || p[i] < p[static_cast<size_t>(best)]) best = static_cast<long long>(i);
        }
        return best;
    };

    while (total < target) {
        long long i = most_important_with_room();
        if (i < 0) break;
        k[static_cast<size_t>(i)] += 1;
        total += 1;
    }
    while (total > target) {
        long long i = least_important_above_one();
        if (i < 0) break;
        k[static_cast<size_t>(i)] -= 1;
        total -= 1;
    }

    // Budget-preserving swaps: move one keep slot from the least important
    // layer to the most important one while that strictly helps.
    for (;;) {
        long long gain = most_important_with_room();
        long long lose = least_important_above_one();
        if (gain < 0 || lose < 0 || gain == lose) break;
        if (!(p[static_cast<size_t>(gain)] > p[static_cast<size_t>(lose)])) break;
        k[static_cast<size_t>(gain)] += 1;
        k[static_cast<size_t>(lose)] -= 1;
    }
    return k;
}

}  // namespace losa
