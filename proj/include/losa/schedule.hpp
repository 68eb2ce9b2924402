#pragma once

#include <vector>

#include "losa/matrix.hpp"

namespace losa {

enum class ScheduleKind { cubic, linear };

const char* schedule_name(ScheduleKind k);

// Mean sparsity target at step t of T (1-based), ramping to theta_f.
// Cubic: theta_f * (1 - (1 - t/T)^3). Linear: theta_f * t / T.
double cubic_theta(double theta_f, int t, int total);
double linear_theta(double theta_f, int t, int total);
double schedule_theta(ScheduleKind k, double theta_f, int t, int total);

// Per-step rank budget: omega_1 at step 1, then +1 per step.
long long rank_budget(long long omega1, int t);

struct RankProfile {
    std::vector<int> r;
    long long budget = 0;
    bool degenerate = false;  // all losses were zero; fell back to a uniform split
};

// r_i = round_half_even(L_i / mean(L) * omega), capped at cap_i =
// min(c_out_i, c_in_i). The budget is not renormalized after rounding or
// capping.
RankProfile allocate_ranks(const std::vector<double>& losses, long long omega,
                           const std::vector<int>& caps);

}  // namespace losa
