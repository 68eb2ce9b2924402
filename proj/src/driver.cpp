#include "losa/driver.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <thread>

#include "losa/error.hpp"

namespace losa {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::losa: return "losa";
        case Mode::lora_baseline: return "lora";
        case Mode::oneshot: return "oneshot";
        case Mode::nm_losa: return "nm";
    }
    return "unknown";
}

namespace {

void validate_config(const RunConfig& cfg) {
    if (cfg.dims.size() < 2) {
        throw config_error("dims needs at least 2 entries (input and output width)");
    }
    for (int d : cfg.dims) {
        if (d <= 0) throw config_error("dims entries must be positive, got " + std::to_string(d));
    }
    if (cfg.calib_samples < 1) {
        throw config_error("calib_samples must be >= 1, got " + std::to_string(cfg.calib_samples));
    }
    if (cfg.steps < 1) {
        throw config_error("steps must be >= 1, got " + std::to_string(cfg.steps));
    }
    if (cfg.epochs < 0) {
        throw config_error("epochs must be >= 0, got " + std::to_string(cfg.epochs));
    }
    if (cfg.theta_f < 0.0 || cfg.theta_f > 1.0) {
        throw config_error("theta_f must lie in [0, 1], got " + std::to_string(cfg.theta_f));
    }
    if (cfg.omega1 < 0) {
        throw config_error("omega1 must be >= 0, got " + std::to_string(cfg.omega1));
    }
    if (cfg.lp_delta < 0.0) {
        throw config_error("lp_delta must be >= 0, got " + std::to_string(cfg.lp_delta));
    }
    if (cfg.nm_group < 1) {
        throw config_error("nm_group must be >= 1, got " + std::to_string(cfg.nm_group));
    }
    if (cfg.lr <= 0.0) {
        throw config_error("lr must be positive, got " + std::to_string(cfg.lr));
    }
    if (cfg.model_sigma < 0.0 || cfg.adapter_sigma < 0.0) {
        throw config_error("sigma values must be >= 0");
    }
    if (cfg.lora_rank < 0) {
        throw config_error("lora_rank must be >= 0, got " + std::to_string(cfg.lora_rank));
    }
    if (cfg.max_grad_norm < 0.0) {
        throw config_error("max_grad_norm must be >= 0, got " +
                           std::to_string(cfg.max_grad_norm));
    }
    if (cfg.weight_decay < 0.0) {
        throw config_error("weight_decay must be >= 0, got " +
                           std::to_string(cfg.weight_decay));
    }
    if (cfg.threads < 1) {
        throw config_error("threads must be >= 1, got " + std::to_string(cfg.threads));
    }
}

// Run fn(0..n-1), round-robin across up to `threads` workers. Layers share no
// state, so the result does not depend on the thread count.
void parallel_layers(int n, int threads, const std::function<void(int)>& fn) {
    int tn = std::min(threads, n);
    if (tn <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<size_t>(tn));
    for (int w = 0; w < tn; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += tn) fn(i);
            } catch (...) {
                errs[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs) {
        if (e) std::rethrow_exception(e);
    }
}

Matrix effective_weight(const Matrix& w, const Adapter& ad) {
    if (ad.rank == 0) return w;
    return add(w, ad.product());
}

std::vector<Matrix> importance_maps(const ForwardCapture& fc, bool use_inputs) {
    if (use_inputs) return fc.maps;
    std::vector<Matrix> out(fc.maps.begin() + 1, fc.maps.end());
    out.push_back(fc.outputs);
    return out;
}

ScoreMatrix score_weight(Scorer scorer, const Matrix& w_eff, const Matrix& x_in) {
    return scorer == Scorer::wanda ? wanda_scores(w_eff, x_in) : magnitude_scores(w_eff);
}

struct LayerState {
    Adapter ad;
    OptState opt;
    Mask mask;
};

AdamParams opt_params(const RunConfig& cfg, long long total_steps) {
    AdamParams hp;
    hp.lr = cfg.lr;
    hp.max_grad_norm = cfg.max_grad_norm;
    hp.weight_decay = cfg.weight_decay;
    hp.total_steps = total_steps;
    return hp;
}

void check_finite_loss(double l, int t, const std::string& layer) {
    if (!std::isfinite(l)) {
        throw numeric_error("step " + std::to_string(t) + ", " + layer +
                            ": reconstruction loss is not finite");
    }
}

SparseModel merge_model(const LayerStack& dense, const std::vector<LayerState>& st,
                        bool dense_adapters) {
    int n = dense.depth();
    SparseModel sm;
    sm.merged.layers.resize(static_cast<size_t>(n));
    sm.mergeable = !dense_adapters;
    for (int i = 0; i < n; ++i) {
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        const LayerState& ls = st[static_cast<size_t>(i)];
        Matrix merged;
        if (dense_adapters) {
            // Baseline adapters sit outside the mask; merging them back in
            // fills masked positions, so the result is no longer sparse.
            merged = apply_mask(ls.mask, w);
            if (ls.ad.rank > 0) {
                Matrix ba = ls.ad.product();
                for (size_t k = 0; k < merged.data.size(); ++k) merged.data[k] += ba.data[k];
            }
        } else {
            merged = apply_mask(ls.mask, effective_weight(w, ls.ad));
        }
        sm.merged.layers[static_cast<size_t>(i)].name = dense.layers[static_cast<size_t>(i)].name;
        sm.merged.layers[static_cast<size_t>(i)].weight = std::move(merged);
        sm.masks.push_back(ls.mask);
        sm.ranks.push_back(ls.ad.rank);
    }
    for (int i = 0; i < n; ++i) {
        const Matrix& w = sm.merged.layers[static_cast<size_t>(i)].weight;
        const Mask& m = sm.masks[static_cast<size_t>(i)];
        size_t zeros = 0;
        for (size_t k = 0; k < w.data.size(); ++k) {
            if (w.data[k] == 0.0) ++zeros;
            if (!m.bits[k] && w.data[k] != 0.0) sm.zero_pattern_violations += 1;
        }
        sm.realized_sparsity.push_back(static_cast<double>(zeros) /
                                       static_cast<double>(w.data.size()));
    }
    return sm;
}

// The progressive loop shared by unstructured and N:M modes.
RunResult run_progressive(const RunConfig& cfg, const LayerStack& dense, const Matrix& calib) {
    ForwardCapture teacher = forward_capture(dense, calib, cfg.act);
    int n = dense.depth();

    std::vector<LayerState> st(static_cast<size_t>(n));
    long long total_updates = static_cast<long long>(cfg.steps) * cfg.epochs;
    for (int i = 0; i < n; ++i) {
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        LayerState& ls = st[static_cast<size_t>(i)];
        ls.mask = Mask(w.rows, w.cols, 1);
        Rng init_rng{derive_seed(cfg.seed, "adapter." + dense.layers[static_cast<size_t>(i)].name),
                     0};
        ls.ad = init_adapter(w.rows, w.cols, 0, init_rng, cfg.adapter_sigma);
        ls.opt = init_opt_state(ls.ad, opt_params(cfg, total_updates));
    }

    RunResult res;
    res.mode = cfg.mode;
    for (int t = 1; t <= cfg.steps; ++t) {
        auto t0 = std::chrono::steady_clock::now();
        StepReport sr;
        sr.t = t;
        sr.theta = schedule_theta(cfg.schedule, cfg.theta_f, t, cfg.steps);
        sr.omega = rank_budget(cfg.omega1, t);

        // Feature maps of the current sparse-adapted model drive both the
        // importance estimate and the pruning scores.
        LayerStack eff;
        eff.layers.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            const LayerState& ls = st[static_cast<size_t>(i)];
            eff.layers[static_cast<size_t>(i)].name = dense.layers[static_cast<size_t>(i)].name;
            eff.layers[static_cast<size_t>(i)].weight =
                apply_mask(ls.mask, effective_weight(dense.layers[static_cast<size_t>(i)].weight,
                                                     ls.ad));
        }
        ForwardCapture cur = forward_capture(eff, calib, cfg.act);
        ImportanceVector iv = importance(importance_maps(cur, cfg.use_inputs), cfg.center);
        sr.p = iv.p;

        if (cfg.mode == Mode::nm_losa) {
            std::vector<int> keep = allocate_nm(iv.p, sr.theta, cfg.nm_group);
            sr.s.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                sr.s[static_cast<size_t>(i)] =
                    1.0 - static_cast<double>(keep[static_cast<size_t>(i)]) /
                              static_cast<double>(cfg.nm_group);
                Matrix w_eff = effective_weight(dense.layers[static_cast<size_t>(i)].weight,
                                                st[static_cast<size_t>(i)].ad);
                ScoreMatrix sc =
                    score_weight(cfg.scorer, w_eff, cur.maps[static_cast<size_t>(i)]);
                st[static_cast<size_t>(i)].mask =
                    nm_mask(sc, keep[static_cast<size_t>(i)], cfg.nm_group);
            }
        } else {
            std::vector<double> lo(static_cast<size_t>(n),
                                   std::max(0.0, sr.theta - cfg.lp_delta));
            std::vector<double> hi(static_cast<size_t>(n),
                                   std::min(1.0, sr.theta + cfg.lp_delta));
            sr.s = allocate_sparsity(iv.p, sr.theta, lo, hi);
            for (int i = 0; i < n; ++i) {
                Matrix w_eff = effective_weight(dense.layers[static_cast<size_t>(i)].weight,
                                                st[static_cast<size_t>(i)].ad);
                ScoreMatrix sc =
                    score_weight(cfg.scorer, w_eff, cur.maps[static_cast<size_t>(i)]);
                st[static_cast<size_t>(i)].mask =
                    unstructured_mask(sc, sr.s[static_cast<size_t>(i)]);
            }
        }
        sr.mean_s_target = sr.theta;
        double real = 0.0;
        for (int i = 0; i < n; ++i) real += st[static_cast<size_t>(i)].mask.sparsity;
        sr.mean_s_realized = real / static_cast<double>(n);

        // Reconstruction error under the new masks, before any rank change,
        // decides where this step's rank budget goes.
        sr.loss_before.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            sr.loss_before[static_cast<size_t>(i)] =
                recon_loss(dense.layers[static_cast<size_t>(i)].weight,
                           st[static_cast<size_t>(i)].mask, st[static_cast<size_t>(i)].ad,
                           teacher.maps[static_cast<size_t>(i)]);
            check_finite_loss(sr.loss_before[static_cast<size_t>(i)], t,
                              dense.layers[static_cast<size_t>(i)].name);
        }
        std::vector<int> caps(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
            caps[static_cast<size_t>(i)] = std::min(w.rows, w.cols);
        }
        RankProfile rp = allocate_ranks(sr.loss_before, sr.omega, caps);
        sr.r = rp.r;
        for (int i = 0; i < n; ++i) {
            Rng grow{derive_seed(cfg.seed, "grow." + dense.layers[static_cast<size_t>(i)].name +
                                               ".t" + std::to_string(t)),
                     0};
            resize_adapter(st[static_cast<size_t>(i)].ad, rp.r[static_cast<size_t>(i)], grow,
                           cfg.adapter_sigma);
            resize_opt_state(st[static_cast<size_t>(i)].opt, st[static_cast<size_t>(i)].ad);
        }

        parallel_layers(n, cfg.threads, [&](int i) {
            LayerState& ls = st[static_cast<size_t>(i)];
            const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
            const Matrix& x = teacher.maps[static_cast<size_t>(i)];
            for (int e = 0; e < cfg.epochs; ++e) {
                AdapterGrads g = recon_grads(w, ls.mask, ls.ad, x);
                adam_step(ls.ad, g, ls.opt);
            }
        });

        sr.loss_after.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double l = recon_loss(dense.layers[static_cast<size_t>(i)].weight,
                                  st[static_cast<size_t>(i)].mask, st[static_cast<size_t>(i)].ad,
                                  teacher.maps[static_cast<size_t>(i)]);
            check_finite_loss(l, t, dense.layers[static_cast<size_t>(i)].name);
            sr.loss_after[static_cast<size_t>(i)] = l;
            if (l > sr.loss_before[static_cast<size_t>(i)]) sr.nondescent = true;
        }
        sr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               t0)
                         .count();
        res.steps.push_back(std::move(sr));
    }

    res.model = merge_model(dense, st, false);
    for (LayerState& ls : st) res.adapters.push_back(std::move(ls.ad));
    return res;
}

RunResult run_oneshot(const RunConfig& cfg, const LayerStack& dense, const Matrix& calib) {
    ForwardCapture teacher = forward_capture(dense, calib, cfg.act);
    int n = dense.depth();
    std::vector<LayerState> st(static_cast<size_t>(n));
    StepReport sr;
    sr.t = 1;
    sr.theta = cfg.theta_f;
    sr.omega = 0;
    sr.p = importance(importance_maps(teacher, cfg.use_inputs), cfg.center).p;
    sr.s.assign(static_cast<size_t>(n), cfg.theta_f);
    sr.r.assign(static_cast<size_t>(n), 0);
    sr.mean_s_target = cfg.theta_f;
    for (int i = 0; i < n; ++i) {
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        LayerState& ls = st[static_cast<size_t>(i)];
        ScoreMatrix sc = score_weight(cfg.scorer, w, teacher.maps[static_cast<size_t>(i)]);
        ls.mask = unstructured_mask(sc, cfg.theta_f);
        Rng dummy{derive_seed(cfg.seed, "adapter." + dense.layers[static_cast<size_t>(i)].name),
                  0};
        ls.ad = init_adapter(w.rows, w.cols, 0, dummy, cfg.adapter_sigma);
        double l = recon_loss(w, ls.mask, ls.ad, teacher.maps[static_cast<size_t>(i)]);
        check_finite_loss(l, 1, dense.layers[static_cast<size_t>(i)].name);
        sr.loss_before.push_back(l);
        sr.loss_after.push_back(l);
        sr.mean_s_realized += ls.mask.sparsity / static_cast<double>(n);
    }
    RunResult res;
    res.mode = cfg.mode;
    res.steps.push_back(std::move(sr));
    res.model = merge_model(dense, st, false);
    for (LayerState& ls : st) res.adapters.push_back(std::move(ls.ad));
    return res;
}

RunResult run_lora_baseline(const RunConfig& cfg, const LayerStack& dense, const Matrix& calib) {
    ForwardCapture teacher = forward_capture(dense, calib, cfg.act);
    int n = dense.depth();
    std::vector<LayerState> st(static_cast<size_t>(n));
    long long total_updates = static_cast<long long>(cfg.steps) * cfg.epochs;
    StepReport sr;
    sr.t = 1;
    sr.theta = cfg.theta_f;
    sr.omega = 0;
    sr.p = importance(importance_maps(teacher, cfg.use_inputs), cfg.center).p;
    sr.s.assign(static_cast<size_t>(n), cfg.theta_f);
    sr.mean_s_target = cfg.theta_f;
    for (int i = 0; i < n; ++i) {
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        LayerState& ls = st[static_cast<size_t>(i)];
        ScoreMatrix sc = score_weight(cfg.scorer, w, teacher.maps[static_cast<size_t>(i)]);
        ls.mask = unstructured_mask(sc, cfg.theta_f);
        int rank = std::min(cfg.lora_rank, std::min(w.rows, w.cols));
        Rng init_rng{derive_seed(cfg.seed, "adapter." + dense.layers[static_cast<size_t>(i)].name),
                     0};
        ls.ad = init_adapter(w.rows, w.cols, rank, init_rng, cfg.adapter_sigma);
        ls.opt = init_opt_state(ls.ad, opt_params(cfg, total_updates));
        sr.r.push_back(rank);
        double l = dense_adapter_loss(w, ls.mask, ls.ad, teacher.maps[static_cast<size_t>(i)]);
        check_finite_loss(l, 1, dense.layers[static_cast<size_t>(i)].name);
        sr.loss_before.push_back(l);
        sr.mean_s_realized += ls.mask.sparsity / static_cast<double>(n);
    }

    // Budget parity with the progressive loop: steps * epochs updates.
    parallel_layers(n, cfg.threads, [&](int i) {
        LayerState& ls = st[static_cast<size_t>(i)];
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        const Matrix& x = teacher.maps[static_cast<size_t>(i)];
        for (long long e = 0; e < total_updates; ++e) {
            AdapterGrads g = dense_adapter_grads(w, ls.mask, ls.ad, x);
            adam_step(ls.ad, g, ls.opt);
        }
    });

    for (int i = 0; i < n; ++i) {
        double l = dense_adapter_loss(dense.layers[static_cast<size_t>(i)].weight,
                                      st[static_cast<size_t>(i)].mask,
                                      st[static_cast<size_t>(i)].ad,
                                      teacher.maps[static_cast<size_t>(i)]);
        check_finite_loss(l, 1, dense.layers[static_cast<size_t>(i)].name);
        sr.loss_after.push_back(l);
        if (l > sr.loss_before[static_cast<size_t>(i)]) sr.nondescent = true;
    }
    RunResult res;
    res.mode = cfg.mode;
    res.steps.push_back(std::move(sr));
    res.model = merge_model(dense, st, true);
    for (LayerState& ls : st) res.adapters.push_back(std::move(ls.ad));
    return res;
}

}  // namespace

EvalReport evaluate(const LayerStack& dense, const SparseModel& sparse, const Matrix& calib,
                    Activation act) {
    if (dense.depth() != sparse.merged.depth()) {
        throw shape_error("evaluate: dense model has " + std::to_string(dense.depth()) +
                          " layers but sparse model has " +
                          std::to_string(sparse.merged.depth()));
    }
    ForwardCapture teacher = forward_capture(dense, calib, act);
    EvalReport ev;
    size_t total_entries = 0, total_zeros = 0;
    for (int i = 0; i < dense.depth(); ++i) {
        const Matrix& w = dense.layers[static_cast<size_t>(i)].weight;
        const Matrix& ws = sparse.merged.layers[static_cast<size_t>(i)].weight;
        if (!w.same_shape(ws)) {
            throw shape_error("evaluate: layer " + dense.layers[static_cast<size_t>(i)].name +
                              " is " + shape_str(w) + " dense but " + shape_str(ws) + " sparse");
        }
        const Matrix& x = teacher.maps[static_cast<size_t>(i)];
        Matrix dense_out = matmul(x, transpose(w));
        Matrix sparse_out = matmul(x, transpose(ws));
        Matrix diff = sub(dense_out, sparse_out);
        ev.layer_mse.push_back(frobenius_norm_sq(diff) / static_cast<double>(x.rows));
        ev.total_loss += ev.layer_mse.back();
        size_t zeros = 0;
        for (double v : ws.data) zeros += (v == 0.0);
        ev.layer_sparsity.push_back(static_cast<double>(zeros) /
                                    static_cast<double>(ws.data.size()));
        total_entries += ws.data.size();
        total_zeros += zeros;
    }
    ev.overall_sparsity =
        total_entries ? static_cast<double>(total_zeros) / static_cast<double>(total_entries)
                      : 0.0;
    ForwardCapture out_sparse = forward_capture(sparse.merged, calib, act);
    Matrix diff = sub(teacher.outputs, out_sparse.outputs);
    ev.end_to_end_mse = frobenius_norm_sq(diff) / static_cast<double>(diff.data.size());
    double rsum = 0.0;
    for (int r : sparse.ranks) rsum += r;
    ev.mean_rank = sparse.ranks.empty() ? 0.0 : rsum / static_cast<double>(sparse.ranks.size());
    return ev;
}

RunResult run_on(const RunConfig& cfg, const LayerStack& dense, const Matrix& calib) {
    validate_config(cfg);
    dense.validate_chain();
    if (dense.layers.empty()) {
        throw shape_error("run_on: empty layer stack");
    }
    RunResult res;
    switch (cfg.mode) {
        case Mode::losa:
        case Mode::nm_losa:
            res = run_progressive(cfg, dense, calib);
            break;
        case Mode::oneshot:
            res = run_oneshot(cfg, dense, calib);
            break;
        case Mode::lora_baseline:
            res = run_lora_baseline(cfg, dense, calib);
            break;
    }
    res.eval = evaluate(dense, res.model, calib, cfg.act);
    if (!std::isfinite(res.eval.total_loss) || !std::isfinite(res.eval.end_to_end_mse)) {
        throw numeric_error("final evaluation produced a non-finite loss");
    }
    return res;
}

RunResult run(const RunConfig& cfg) {
    validate_config(cfg);
    LayerStack dense = make_synthetic(static_cast<int>(cfg.dims.size()) - 1, cfg.dims, cfg.seed,
                                      cfg.model_sigma);
    Matrix calib = make_synthetic_calib(cfg.calib_samples, cfg.dims[0], cfg.seed);
    return run_on(cfg, dense, calib);
}

}  // namespace losa
