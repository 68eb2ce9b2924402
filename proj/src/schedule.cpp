#include "losa/schedule.hpp"

#include <cmath>
#include <string>

#include "losa/error.hpp"

namespace losa {

const char* schedule_name(ScheduleKind k) {
    return k == ScheduleKind::cubic ? "cubic" : "linear";
}

namespace {

void check_step(double theta_f, int t, int total) {
    if (total <= 0) {
        throw numeric_error("schedule: total steps " + std::to_string(total) +
                            " must be positive");
    }
    if (t < 1 || t > total) {
        throw numeric_error("schedule: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(total) + "]");
    }
    if (theta_f < 0.0 || theta_f > 1.0) {
        throw numeric_error("schedule: final sparsity " + std::to_string(theta_f) +
                            " outside [0, 1]");
    }
}

}  // namespace

double cubic_theta(double theta_f, int t, int total) {
    check_step(theta_f, t, total);
    double u = 1.0 - static_cast<double>(t) / static_cast<double>(total);
    return theta_f * (1.0 - u * u * u);
}

double linear_theta(double theta_f, int t, int total) {
    check_step(theta_f, t, total);
    // Ratio first, so t = total yields exactly theta_f.
    return theta_f * (static_cast<double>(t) / static_cast<double>(total));
}

double schedule_theta(ScheduleKind k, double theta_f, int t, int total) {
    return k == ScheduleKind::cubic ? cubic_theta(theta_f, t, total)
                                    : linear_theta(theta_f, t, total);
}

long long rank_budget(long long omega1, int t) {
    if (omega1 < 0) {
        throw numeric_error("rank_budget: omega " + std::to_string(omega1) + " is negative");
    }
    if (t < 1) {
        throw numeric_error("rank_budget: step " + std::to_string(t) + " must be >= 1");
    }
    return omega1 + (t - 1);
}

RankProfile allocate_ranks(const std::vector<double>& losses, long long omega,
                           const std::vector<int>& caps) {
    size_t n = losses.size();
    if (caps.size() != n) {
        throw shape_error("allocate_ranks: " + std::to_string(n) + " losses but " +
                          std::to_string(caps.size()) + " caps");
    }
    if (omega < 0) {
        throw numeric_error("allocate_ranks: omega " + std::to_string(omega) + " is negative");
    }
    RankProfile out;
    out.budget = omega;
    out.r.assign(n, 0);
    if (n == 0) return out;

    double total = 0.0;
    for (double l : losses) {
        if (l < 0.0) {
            throw numeric_error("allocate_ranks: negative loss " + std::to_string(l));
        }
        total += l;
    }
    double mean = total / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
        long long r;
        if (mean == 0.0) {
            // No signal to apportion by; spread the budget evenly.
            out.degenerate = true;
            r = round_half_even(static_cast<double>(omega));
        } else {
            r = round_half_even(losses[i] / mean * static_cast<double>(omega));
        }
        if (r < 0) r = 0;
        if (caps[i] < 0) {
            throw numeric_error("allocate_ranks: negative cap " + std::to_string(caps[i]));
        }
        if (r > caps[i]) r = caps[i];
        out.r[i] = static_cast<int>(r);
    }
    return out;
}

}  // namespace losa
