#include "losa/matrix.hpp"

#include <cmath>

namespace losa {

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

std::string shape_str(int rows, int cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

std::string shape_str(const Matrix& m) {
    return shape_str(m.rows, m.cols);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw shape_error("matmul: inner dims differ, " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw shape_error("hadamard: shapes differ, " + shape_str(a) + " vs " + shape_str(b));
    }
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.count(); ++i) {
        out.data[i] = a.data[i] * b.data[i];
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw shape_error("add: shapes differ, " + shape_str(a) + " vs " + shape_str(b));
    }
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.count(); ++i) {
        out.data[i] = a.data[i] + b.data[i];
    }
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw shape_error("sub: shapes differ, " + shape_str(a) + " vs " + shape_str(b));
    }
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.count(); ++i) {
        out.data[i] = a.data[i] - b.data[i];
    }
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out(a.rows, a.cols);
    for (size_t i = 0; i < a.count(); ++i) {
        out.data[i] = a.data[i] * c;
    }
    return out;
}

double frobenius_norm_sq(const Matrix& a) {
    double ss = 0.0;
    for (double v : a.data) {
        ss += v * v;
    }
    return ss;
}

double frobenius_norm(const Matrix& a) {
    return std::sqrt(frobenius_norm_sq(a));
}

bool all_finite(const Matrix& a) {
    for (double v : a.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

long long round_half_even(double x) {
    const double f = std::floor(x);
    const double frac = x - f;
    const long long fi = static_cast<long long>(f);
    if (frac > 0.5) {
        return fi + 1;
    }
    if (frac < 0.5) {
        return fi;
    }
    return (fi % 2 == 0) ? fi : fi + 1;
}

uint64_t Rng::next_u64() {
    ++counter;
    uint64_t z = seed + counter * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian(double sigma) {
    // u1 in (0, 1] keeps the log finite
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    // Unit draw first, so a sigma draw is exactly sigma times the unit draw.
    return sigma * (r * std::cos(2.0 * 3.14159265358979323846 * u2));
}

uint64_t derive_seed(uint64_t base, std::string_view purpose) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int i = 0; i < 8; ++i) {
        h = (h ^ ((base >> (8 * i)) & 0xff)) * 0x100000001b3ull;
    }
    for (char c : purpose) {
        h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ull;
    }
    return h;
}

Matrix gaussian_fill(Rng& rng, int rows, int cols, double sigma) {
    if (sigma < 0.0) {
        throw numeric_error("gaussian_fill: sigma must be >= 0, got " + std::to_string(sigma));
    }
    Matrix out(rows, cols);
    for (double& v : out.data) {
        v = rng.next_gaussian(sigma);
    }
    return out;
}

}  // namespace losa
