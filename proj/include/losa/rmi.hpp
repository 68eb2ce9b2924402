#pragma once

#include <vector>

#include "losa/matrix.hpp"

namespace losa {

struct NhsicValue {
    double value = 0.0;
    bool degenerate = false;  // a centered map had zero norm; value forced to 0
};

// Normalized linear HSIC between two feature maps with the same sample count:
// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F), computed on column-centered maps
// when center is set. Clamped to [0, 1].
NhsicValue nhsic(const Matrix& x, const Matrix& y, bool center);

struct ImportanceVector {
    std::vector<double> p;          // p_i = exp(-sum_{j != i} nhsic(f_i, f_j))
    std::vector<uint8_t> degenerate;  // per-layer: some pairwise term degenerated
};

// Layer importance from pairwise feature-map similarity. A high p_i marks a
// layer whose features overlap little with the rest of the network.
ImportanceVector importance(const std::vector<Matrix>& maps, bool center);

// Minimize p . s subject to mean(s) = theta and lo_i <= s_i <= hi_i.
// More important layers (higher p) end up at their lower bound first.
// All-equal p with theta inside every box returns the uniform solution.
std::vector<double> allocate_sparsity(const std::vector<double>& p, double theta,
                                      const std::vector<double>& lo,
                                      const std::vector<double>& hi);

// Integer counterpart for N:M masks: choose per-layer keep counts k_i in
// [1, m] with sum k_i = round_half_even(n * m * (1 - mean_sparsity)), putting
// larger k on more important layers.
std::vector<int> allocate_nm(const std::vector<double>& p, double mean_sparsity, int m_group);

}  // namespace losa
