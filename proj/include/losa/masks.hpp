#pragma once

#include <cstdint>
#include <vector>

#include "losa/matrix.hpp"

namespace losa {

enum class Scorer { wanda, magnitude };

const char* scorer_name(Scorer s);

// Binary keep/drop mask over a weight matrix, 1 = keep. sparsity is the exact
// zero fraction #zeros / (rows * cols).
struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> bits;
    double sparsity = 0.0;

    Mask() = default;
    Mask(int r, int c, uint8_t fill);

    uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * cols + c]; }
    size_t count() const { return bits.size(); }
    size_t zeros() const;

    void recount();  // recompute sparsity from bits
};

struct ScoreMatrix {
    Matrix scores;
    Scorer scorer = Scorer::magnitude;
};

// Wanda criterion on the effective weight: score_ij = |w_ij| * ||column j of x||_2,
// with x the layer's input feature map (samples x c_in).
ScoreMatrix wanda_scores(const Matrix& w_eff, const Matrix& x_in);

ScoreMatrix magnitude_scores(const Matrix& w_eff);

// Zero exactly round_half_even(s * count) entries, chosen as the lowest scores.
// Ties break by (score, row-major index), so masks at increasing s nest.
Mask unstructured_mask(const ScoreMatrix& scores, double s);

// N:M structured mask: keep the n_keep highest-scoring entries in every group
// of m_group consecutive weights along the input dimension. A short final
// group (cols not divisible by m_group) keeps ceil(n_keep * len / m_group).
Mask nm_mask(const ScoreMatrix& scores, int n_keep, int m_group);

// Selection application: kept entries copy through, dropped entries are
// exactly +0.0.
Matrix apply_mask(const Mask& m, const Matrix& w);

}  // namespace losa
