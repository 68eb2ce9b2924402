#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "losa/error.hpp"

namespace losa {

// Dense row-major f64 matrix. Weight convention throughout the project:
// rows = output dim (c_out), cols = input dim (c_in). Feature maps are
// samples x features.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    size_t count() const { return data.size(); }

    static Matrix identity(int n);
};

std::string shape_str(const Matrix& m);
std::string shape_str(int rows, int cols);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
double frobenius_norm(const Matrix& a);
double frobenius_norm_sq(const Matrix& a);
bool all_finite(const Matrix& a);

// Round to nearest integer, ties to even. Independent of the fenv rounding mode.
long long round_half_even(double x);

// Counter-based deterministic generator: draw k is the SplitMix64 finalizer
// applied to seed + k * gamma, so the stream is a pure function of (seed, k)
// and reproduces across runs and platforms. Gaussian draws use Box-Muller on
// two counter draws, no cached spare.
struct Rng {
    uint64_t seed = 0;
    uint64_t counter = 0;

    uint64_t next_u64();
    double next_uniform();               // [0, 1)
    double next_gaussian(double sigma);  // N(0, sigma^2)
};

// Stable sub-seed derivation (FNV-1a over the base seed bytes, then the purpose
// string), so unrelated consumers of one top-level seed never share a stream.
uint64_t derive_seed(uint64_t base, std::string_view purpose);

Matrix gaussian_fill(Rng& rng, int rows, int cols, double sigma);

}  // namespace losa
