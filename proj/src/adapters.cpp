#include "losa/adapters.hpp"

#include <cmath>
#include <string>

#include "losa/error.hpp"

namespace losa {

Matrix Adapter::product() const {
    if (rank == 0) return Matrix(b.rows, a.cols);
    return matmul(b, a);
}

Adapter init_adapter(int c_out, int c_in, int rank, Rng& rng, double sigma) {
    if (rank < 0) {
        throw numeric_error("init_adapter: rank " + std::to_string(rank) + " is negative");
    }
    Adapter ad;
    ad.rank = rank;
    ad.b = Matrix(c_out, rank);  // zeros
    ad.a = gaussian_fill(rng, rank, c_in, sigma);
    return ad;
}

void resize_adapter(Adapter& ad, int new_rank, Rng& rng, double sigma) {
    if (new_rank < 0) {
        throw numeric_error("resize_adapter: rank " + std::to_string(new_rank) + " is negative");
    }
    if (new_rank == ad.rank) return;
    int c_out = ad.b.rows;
    int c_in = ad.a.cols;
    if (new_rank < ad.rank) {
        // Keep the leading rank components.
        Matrix nb(c_out, new_rank), na(new_rank, c_in);
        for (int r = 0; r < c_out; ++r)
            for (int c = 0; c < new_rank; ++c) nb(r, c) = ad.b(r, c);
        for (int r = 0; r < new_rank; ++r)
            for (int c = 0; c < c_in; ++c) na(r, c) = ad.a(r, c);
        ad.b = std::move(nb);
        ad.a = std::move(na);
    } else {
        // New columns of B are zero, so the product is bitwise unchanged.
        Matrix nb(c_out, new_rank), na(new_rank, c_in);
        for (int r = 0; r < c_out; ++r)
            for (int c = 0; c < ad.rank; ++c) nb(r, c) = ad.b(r, c);
        for (int r = 0; r < ad.rank; ++r)
            for (int c = 0; c < c_in; ++c) na(r, c) = ad.a(r, c);
        Matrix fresh = gaussian_fill(rng, new_rank - ad.rank, c_in, sigma);
        for (int r = ad.rank; r < new_rank; ++r)
            for (int c = 0; c < c_in; ++c) na(r, c) = fresh(r - ad.rank, c);
        ad.b = std::move(nb);
        ad.a = std::move(na);
    }
    ad.rank = new_rank;
}

namespace {

// Student weight for the sparse objective: M o (W + BA).
Matrix masked_student(const Matrix& w, const Mask& m, const Adapter& ad) {
    Matrix eff = w;
    if (ad.rank > 0) {
        Matrix ba = ad.product();
        for (size_t i = 0; i < eff.data.size(); ++i) eff.data[i] += ba.data[i];
    }
    return apply_mask(m, eff);
}

// Student weight for the dense-adapter objective: (M o W) + BA.
Matrix dense_student(const Matrix& w, const Mask& m, const Adapter& ad) {
    Matrix eff = apply_mask(m, w);
    if (ad.rank > 0) {
        Matrix ba = ad.product();
        for (size_t i = 0; i < eff.data.size(); ++i) eff.data[i] += ba.data[i];
    }
    return eff;
}

double loss_against_teacher(const Matrix& w, const Matrix& student, const Matrix& x) {
    Matrix dense_out = matmul(x, transpose(w));
    Matrix sparse_out = matmul(x, transpose(student));
    Matrix diff = sub(dense_out, sparse_out);
    return frobenius_norm_sq(diff) / static_cast<double>(x.rows);
}

// d loss / d student = (2/N) * (student_out - dense_out)^T * X, an
// c_out x c_in matrix matching the effective-weight layout.
Matrix effective_grad(const Matrix& w, const Matrix& student, const Matrix& x) {
    Matrix dense_out = matmul(x, transpose(w));
    Matrix sparse_out = matmul(x, transpose(student));
    Matrix diff = sub(sparse_out, dense_out);
    Matrix g = matmul(transpose(diff), x);
    return scale(g, 2.0 / static_cast<double>(x.rows));
}

}  // namespace

double recon_loss(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x) {
    if (x.cols != w.cols) {
        throw shape_error("recon_loss: input map is " + shape_str(x) + " but weight is " +
                          shape_str(w) + "; need x.cols == w.cols");
    }
    return loss_against_teacher(w, masked_student(w, m, ad), x);
}

double dense_adapter_loss(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x) {
    if (x.cols != w.cols) {
        throw shape_error("dense_adapter_loss: input map is " + shape_str(x) + " but weight is " +
                          shape_str(w) + "; need x.cols == w.cols");
    }
    return loss_against_teacher(w, dense_student(w, m, ad), x);
}

AdapterGrads recon_grads(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x) {
    Matrix g_eff = effective_grad(w, masked_student(w, m, ad), x);
    // The mask gates the adapter's contribution, so it gates the gradient too.
    Matrix g_masked(g_eff.rows, g_eff.cols);
    for (size_t i = 0; i < g_eff.data.size(); ++i) {
        g_masked.data[i] = m.bits[i] ? g_eff.data[i] : 0.0;
    }
    AdapterGrads g;
    g.gb = matmul(g_masked, transpose(ad.a));
    g.ga = matmul(transpose(ad.b), g_masked);
    return g;
}

AdapterGrads dense_adapter_grads(const Matrix& w, const Mask& m, const Adapter& ad,
                                 const Matrix& x) {
    Matrix g_eff = effective_grad(w, dense_student(w, m, ad), x);
    AdapterGrads g;
    g.gb = matmul(g_eff, transpose(ad.a));
    g.ga = matmul(transpose(ad.b), g_eff);
    return g;
}

OptState init_opt_state(const Adapter& ad, const AdamParams& hp) {
    OptState st;
    st.mb = Matrix(ad.b.rows, ad.b.cols);
    st.vb = Matrix(ad.b.rows, ad.b.cols);
    st.ma = Matrix(ad.a.rows, ad.a.cols);
    st.va = Matrix(ad.a.rows, ad.a.cols);
    st.step = 0;
    st.hp = hp;
    return st;
}

namespace {

// Copy the overlapping block; entries outside the old shape stay zero.
Matrix resize_moment(const Matrix& old, int rows, int cols) {
    Matrix out(rows, cols);
    int rr = std::min(rows, old.rows), cc = std::min(cols, old.cols);
    for (int r = 0; r < rr; ++r)
        for (int c = 0; c < cc; ++c) out(r, c) = old(r, c);
    return out;
}

}  // namespace

void resize_opt_state(OptState& st, const Adapter& ad) {
    st.mb = resize_moment(st.mb, ad.b.rows, ad.b.cols);
    st.vb = resize_moment(st.vb, ad.b.rows, ad.b.cols);
    st.ma = resize_moment(st.ma, ad.a.rows, ad.a.cols);
    st.va = resize_moment(st.va, ad.a.rows, ad.a.cols);
}

double adam_step(Adapter& ad, const AdapterGrads& g, OptState& st) {
    if (!g.gb.same_shape(ad.b) || !g.ga.same_shape(ad.a)) {
        throw shape_error("adam_step: gradient shapes " + shape_str(g.gb) + ", " +
                          shape_str(g.ga) + " do not match adapter " + shape_str(ad.b) + ", " +
                          shape_str(ad.a));
    }
    AdamParams& hp = st.hp;
    st.step += 1;
    long long t = st.step;

    double lr = hp.lr;
    if (hp.total_steps > 0) {
        // Linear decay from lr at step 1 to lr/total at the final step.
        double frac = static_cast<double>(hp.total_steps - (t - 1)) /
                      static_cast<double>(hp.total_steps);
        if (frac < 0.0) frac = 0.0;
        lr *= frac;
    }

    double clip = 1.0;
    if (hp.max_grad_norm > 0.0) {
        double norm_sq = frobenius_norm_sq(g.gb) + frobenius_norm_sq(g.ga);
        double norm = std::sqrt(norm_sq);
        if (norm > hp.max_grad_norm) clip = hp.max_grad_norm / norm;
    }

    double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));

    auto update = [&](Matrix& p, const Matrix& grad, Matrix& mo, Matrix& vo) {
        for (size_t i = 0; i < p.data.size(); ++i) {
            double gi = grad.data[i] * clip;
            mo.data[i] = hp.beta1 * mo.data[i] + (1.0 - hp.beta1) * gi;
            vo.data[i] = hp.beta2 * vo.data[i] + (1.0 - hp.beta2) * gi * gi;
            double mhat = mo.data[i] / bc1;
            double vhat = vo.data[i] / bc2;
            p.data[i] -= lr * (mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * p.data[i]);
        }
    };
    update(ad.b, g.gb, st.mb, st.vb);
    update(ad.a, g.ga, st.ma, st.va);
    return lr;
}

}  // namespace losa
