#include <cmath>
#include <set>

#include "doctest.h"
#include "losa/error.hpp"
#include "losa/masks.hpp"
#include "oracles.hpp"

using losa::Mask;
using losa::Matrix;
using losa::ScoreMatrix;

namespace {

Matrix from(int rows, int cols, std::initializer_list<double> vals) {
    Matrix m(rows, cols);
    size_t i = 0;
    for (double v : vals) m.data[i++] = v;
    REQUIRE(i == m.data.size());
    return m;
}

ScoreMatrix raw_scores(Matrix m) {
    ScoreMatrix sc;
    sc.scores = std::move(m);
    sc.scorer = losa::Scorer::magnitude;
    return sc;
}

}  // namespace

TEST_CASE("wanda score is |w| times input column norm") {
    Matrix w = from(1, 2, {2, -1});
    Matrix x = from(1, 2, {1, 3});
    ScoreMatrix sc = losa::wanda_scores(w, x);
    CHECK(sc.scores(0, 0) == 2.0);
    CHECK(sc.scores(0, 1) == 3.0);
    CHECK(sc.scorer == losa::Scorer::wanda);

    // Two samples: column norm is the 2-norm over samples.
    Matrix x2 = from(2, 2, {3, 1, 4, 1});
    ScoreMatrix sc2 = losa::wanda_scores(w, x2);
    CHECK(sc2.scores(0, 0) == doctest::Approx(2.0 * 5.0).epsilon(1e-12));
    CHECK(sc2.scores(0, 1) == doctest::Approx(1.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("wanda rejects mismatched input width") {
    Matrix w(2, 3), x(4, 2);
    CHECK_THROWS_AS(losa::wanda_scores(w, x), losa::shape_error);
}

TEST_CASE("magnitude score is |w|") {
    Matrix w = from(1, 3, {-2, 0.5, 0});
    ScoreMatrix sc = losa::magnitude_scores(w);
    CHECK(sc.scores(0, 0) == 2.0);
    CHECK(sc.scores(0, 1) == 0.5);
    CHECK(sc.scores(0, 2) == 0.0);
}

TEST_CASE("unstructured mask zeros the lowest scores") {
    ScoreMatrix sc = raw_scores(from(2, 2, {4, 1, 3, 2}));
    Mask m = losa::unstructured_mask(sc, 0.5);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(1, 1) == 0);
    CHECK(m.sparsity == 0.5);
}

TEST_CASE("unstructured mask zero count is round-half-even of s times count") {
    losa::Rng rng{100, 0};
    for (int trial = 0; trial < 50; ++trial) {
        int rows = 1 + static_cast<int>(rng.next_u64() % 12);
        int cols = 1 + static_cast<int>(rng.next_u64() % 12);
        double s = rng.next_uniform();
        Matrix scores = losa::gaussian_fill(rng, rows, cols, 1.0);
        Mask m = losa::unstructured_mask(raw_scores(scores), s);
        long long want =
            losa::round_half_even(s * static_cast<double>(rows) * static_cast<double>(cols));
        CHECK(static_cast<long long>(m.zeros()) == want);
    }
}

TEST_CASE("unstructured masks nest as sparsity grows") {
    losa::Rng rng{200, 0};
    Matrix scores = losa::gaussian_fill(rng, 8, 8, 1.0);
    Mask prev = losa::unstructured_mask(raw_scores(scores), 0.0);
    for (double s : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
        Mask next = losa::unstructured_mask(raw_scores(scores), s);
        for (size_t i = 0; i < prev.bits.size(); ++i) {
            if (prev.bits[i] == 0) CHECK(next.bits[i] == 0);
        }
        prev = next;
    }
    CHECK(prev.zeros() == prev.count());
}

TEST_CASE("unstructured mask tie-break is by row-major index") {
    // All scores equal: the first k entries get dropped.
    ScoreMatrix sc = raw_scores(from(2, 2, {1, 1, 1, 1}));
    Mask m = losa::unstructured_mask(sc, 0.5);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(1, 1) == 1);
}

TEST_CASE("unstructured mask rejects out-of-range sparsity") {
    ScoreMatrix sc = raw_scores(from(1, 2, {1, 2}));
    CHECK_THROWS_AS(losa::unstructured_mask(sc, -0.1), losa::numeric_error);
    CHECK_THROWS_AS(losa::unstructured_mask(sc, 1.1), losa::numeric_error);
}

TEST_CASE("2:4 mask keeps the two largest per group") {
    ScoreMatrix sc = raw_scores(from(1, 4, {5, 1, 4, 2}));
    Mask m = losa::nm_mask(sc, 2, 4);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(0, 2) == 1);
    CHECK(m.at(0, 3) == 0);
}

TEST_CASE("nm mask has exactly n_keep ones per complete group") {
    losa::Rng rng{300, 0};
    for (int trial = 0; trial < 30; ++trial) {
        int rows = 1 + static_cast<int>(rng.next_u64() % 6);
        int groups = 1 + static_cast<int>(rng.next_u64() % 5);
        int m_group = 2 + static_cast<int>(rng.next_u64() % 7);
        int cols = groups * m_group;
        int n_keep = static_cast<int>(rng.next_u64() % (m_group + 1));
        Matrix scores = losa::gaussian_fill(rng, rows, cols, 1.0);
        Mask m = losa::nm_mask(raw_scores(scores), n_keep, m_group);
        for (int r = 0; r < rows; ++r) {
            for (int g = 0; g < groups; ++g) {
                int ones = 0;
                for (int c = g * m_group; c < (g + 1) * m_group; ++c) ones += m.at(r, c);
                CHECK(ones == n_keep);
            }
        }
    }
}

TEST_CASE("nm mask short final group keeps a proportional count") {
    // cols=6, m=4: final group has 2 entries and keeps ceil(2*2/4) = 1.
    ScoreMatrix sc = raw_scores(from(1, 6, {1, 2, 3, 4, 9, 8}));
    Mask m = losa::nm_mask(sc, 2, 4);
    int first = m.at(0, 0) + m.at(0, 1) + m.at(0, 2) + m.at(0, 3);
    int last = m.at(0, 4) + m.at(0, 5);
    CHECK(first == 2);
    CHECK(last == 1);
    CHECK(m.at(0, 4) == 1);  // higher score wins within the short group
}

TEST_CASE("nm mask argument validation") {
    ScoreMatrix sc = raw_scores(from(1, 4, {1, 2, 3, 4}));
    CHECK_THROWS_AS(losa::nm_mask(sc, 5, 4), losa::numeric_error);
    CHECK_THROWS_AS(losa::nm_mask(sc, -1, 4), losa::numeric_error);
    CHECK_THROWS_AS(losa::nm_mask(sc, 1, 0), losa::numeric_error);
}

TEST_CASE("apply_mask produces exact positive zeros") {
    Matrix w = from(1, 3, {-3.5, 2.0, -0.0});
    Mask m(1, 3, 1);
    m.bits[0] = 0;
    m.recount();
    Matrix out = losa::apply_mask(m, w);
    CHECK(out.data[0] == 0.0);
    CHECK_FALSE(std::signbit(out.data[0]));
    CHECK(out.data[1] == 2.0);
    CHECK(m.sparsity == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("apply_mask shape mismatch throws") {
    Matrix w(2, 2);
    Mask m(1, 2, 1);
    CHECK_THROWS_AS(losa::apply_mask(m, w), losa::shape_error);
}

TEST_CASE("mask sparsity counts zeros exactly") {
    Mask m(2, 3, 1);
    CHECK(m.sparsity == 0.0);
    m.bits[0] = 0;
    m.bits[4] = 0;
    m.recount();
    CHECK(m.sparsity == doctest::Approx(2.0 / 6.0));
    CHECK(m.zeros() == 2);
}
