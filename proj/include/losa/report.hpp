#pragma once

#include <string>

#include "losa/driver.hpp"

namespace losa {

// JSON document describing a finished run: config echo, per-step records,
// final metrics. Content is a pure function of the run result, so identical
// runs produce identical bytes.
std::string report_json(const RunConfig& cfg, const RunResult& res);

// Long-format per-layer step table: t,theta,layer,s,p,r,loss_before,loss_after.
std::string steps_csv(const RunConfig& cfg, const RunResult& res);

// Plot-ready error-vs-step table, one row per step.
std::string curves_csv(const RunConfig& cfg, const RunResult& res);

// Write report.json, steps.csv, curves.csv and model.ckpt under outdir
// (created if missing).
void save_run_outputs(const std::string& outdir, const RunConfig& cfg, const RunResult& res);

}  // namespace losa
