#pragma once

#include <string>
#include <vector>

#include "losa/adapters.hpp"
#include "losa/masks.hpp"
#include "losa/model.hpp"
#include "losa/rmi.hpp"
#include "losa/schedule.hpp"

namespace losa {

enum class Mode { losa, lora_baseline, oneshot, nm_losa };

const char* mode_name(Mode m);

struct RunConfig {
    Mode mode = Mode::losa;
    std::vector<int> dims = {32, 64, 64, 64, 32};
    double model_sigma = 0.2;
    int calib_samples = 128;
    Activation act = Activation::relu;
    ScheduleKind schedule = ScheduleKind::cubic;
    int steps = 5;  // sparsification steps T
    double theta_f = 0.7;
    long long omega1 = 6;
    Scorer scorer = Scorer::wanda;
    bool center = true;
    bool use_inputs = false;  // importance over layer inputs instead of outputs
    double lp_delta = 0.1;    // half-width of the per-layer sparsity box
    int nm_group = 8;
    double lr = 2e-4;
    int epochs = 50;  // adapter updates per sparsification step
    double adapter_sigma = 0.02;
    int lora_rank = 8;
    double max_grad_norm = 0.3;
    double weight_decay = 0.0;
    int threads = 1;
    uint64_t seed = 42;
};

struct StepReport {
    int t = 0;
    double theta = 0.0;
    long long omega = 0;
    std::vector<double> s;
    std::vector<double> p;
    std::vector<int> r;
    std::vector<double> loss_before;
    std::vector<double> loss_after;
    bool nondescent = false;  // some layer's loss rose during this step
    double mean_s_target = 0.0;
    double mean_s_realized = 0.0;
    double wall_ms = 0.0;  // diagnostic only; never serialized
};

struct SparseModel {
    LayerStack merged;
    std::vector<Mask> masks;
    std::vector<double> realized_sparsity;  // zero fraction of each merged weight
    std::vector<int> ranks;
    bool mergeable = true;  // false when adapters were dense (baseline)
    long long zero_pattern_violations = 0;
};

struct EvalReport {
    std::vector<double> layer_mse;  // per-layer reconstruction error on teacher maps
    double total_loss = 0.0;        // sum of layer_mse
    double end_to_end_mse = 0.0;    // mean squared output difference, per entry
    std::vector<double> layer_sparsity;
    double overall_sparsity = 0.0;
    double mean_rank = 0.0;
};

struct RunResult {
    Mode mode = Mode::losa;
    SparseModel model;
    std::vector<StepReport> steps;
    std::vector<Adapter> adapters;
    EvalReport eval;
};

// Compare a sparse model against its dense source on a calibration batch.
EvalReport evaluate(const LayerStack& dense, const SparseModel& sparse, const Matrix& calib,
                    Activation act);

// Run the configured mode on a synthetic model drawn from cfg.seed.
RunResult run(const RunConfig& cfg);

// Same, but on a caller-provided model and calibration batch.
RunResult run_on(const RunConfig& cfg, const LayerStack& dense, const Matrix& calib);

}  // namespace losa
