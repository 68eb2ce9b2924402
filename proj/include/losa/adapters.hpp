#pragma once

#include "losa/masks.hpp"
#include "losa/matrix.hpp"

namespace losa {

// Low-rank residual B*A attached to a weight matrix. B is c_out x r, A is
// r x c_in. rank 0 means the adapter contributes nothing (both factors have
// an empty inner dimension).
struct Adapter {
    Matrix b;  // c_out x rank, initialised to zero
    Matrix a;  // rank x c_in, initialised from N(0, sigma^2)
    int rank = 0;

    Matrix product() const;  // b * a, or a zero c_out x c_in matrix for rank 0
};

Adapter init_adapter(int c_out, int c_in, int rank, Rng& rng, double sigma);

// Change rank in place. Growing appends fresh Gaussian rows to A and zero
// columns to B, so the product b*a is unchanged. Shrinking keeps the leading
// rows/columns.
void resize_adapter(Adapter& ad, int new_rank, Rng& rng, double sigma);

// Mean reconstruction error of a masked, adapted layer against its dense
// teacher: ||X W^T - X (M o (W + BA))^T||_F^2 / samples.
double recon_loss(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x);

// Same objective without the mask applied to the adapter: student is
// (M o W) + BA. Used by the dense-adapter baseline.
double dense_adapter_loss(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x);

struct AdapterGrads {
    Matrix gb;
    Matrix ga;
};

AdapterGrads recon_grads(const Matrix& w, const Mask& m, const Adapter& ad, const Matrix& x);

AdapterGrads dense_adapter_grads(const Matrix& w, const Mask& m, const Adapter& ad,
                                 const Matrix& x);

struct AdamParams {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double max_grad_norm = 0.3;  // 0 disables clipping
    long long total_steps = 0;   // 0 disables lr decay
};

// Adam moments for one adapter. step counts completed updates.
struct OptState {
    Matrix mb, vb, ma, va;
    long long step = 0;
    AdamParams hp;
};

OptState init_opt_state(const Adapter& ad, const AdamParams& hp);

// Keep moments aligned with a resized adapter: grown entries start at zero,
// dropped entries are discarded, step is preserved.
void resize_opt_state(OptState& st, const Adapter& ad);

// One AdamW update on (b, a) jointly: global-norm clip across both grads,
// linearly decayed lr, bias-corrected moments, decoupled weight decay.
// Returns the effective learning rate used.
double adam_step(Adapter& ad, const AdapterGrads& g, OptState& st);

}  // namespace losa
