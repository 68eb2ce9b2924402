#include "losa/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "losa/error.hpp"

namespace losa {

namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json config_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["mode"] = mode_name(cfg.mode);
    j["dims"] = cfg.dims;
    j["model_sigma"] = cfg.model_sigma;
    j["calib_samples"] = cfg.calib_samples;
    j["activation"] = activation_name(cfg.act);
    j["schedule"] = schedule_name(cfg.schedule);
    j["steps"] = cfg.steps;
    j["theta_f"] = cfg.theta_f;
    j["omega1"] = cfg.omega1;
    j["scorer"] = scorer_name(cfg.scorer);
    j["center"] = cfg.center;
    j["use_inputs"] = cfg.use_inputs;
    j["lp_delta"] = cfg.lp_delta;
    j["nm_group"] = cfg.nm_group;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["adapter_sigma"] = cfg.adapter_sigma;
    j["lora_rank"] = cfg.lora_rank;
    j["max_grad_norm"] = cfg.max_grad_norm;
    j["weight_decay"] = cfg.weight_decay;
    j["threads"] = cfg.threads;
    j["seed"] = cfg.seed;
    return j;
}

}  // namespace

std::string report_json(const RunConfig& cfg, const RunResult& res) {
    nlohmann::json j;
    j["config"] = config_json(cfg);

    const auto& names = res.model.merged.layers;
    nlohmann::json steps = nlohmann::json::array();
    for (const StepReport& sr : res.steps) {
        nlohmann::json s;
        s["t"] = sr.t;
        s["theta"] = sr.theta;
        s["omega"] = sr.omega;
        s["mean_s_target"] = sr.mean_s_target;
        s["mean_s_realized"] = sr.mean_s_realized;
        s["nondescent"] = sr.nondescent;
        nlohmann::json layers = nlohmann::json::array();
        for (size_t i = 0; i < sr.s.size(); ++i) {
            nlohmann::json l;
            l["name"] = i < names.size() ? names[i].name : "layer" + std::to_string(i);
            l["s"] = sr.s[i];
            l["p"] = i < sr.p.size() ? sr.p[i] : 0.0;
            l["r"] = i < sr.r.size() ? sr.r[i] : 0;
            l["loss_before"] = i < sr.loss_before.size() ? sr.loss_before[i] : 0.0;
            l["loss_after"] = i < sr.loss_after.size() ? sr.loss_after[i] : 0.0;
            layers.push_back(std::move(l));
        }
        s["layers"] = std::move(layers);
        steps.push_back(std::move(s));
    }
    j["steps"] = std::move(steps);

    nlohmann::json fin;
    fin["mode"] = mode_name(res.mode);
    fin["layer_loss"] = res.eval.layer_mse;
    fin["total_loss"] = res.eval.total_loss;
    fin["end_to_end_mse"] = res.eval.end_to_end_mse;
    fin["layer_sparsity"] = res.eval.layer_sparsity;
    fin["overall_sparsity"] = res.eval.overall_sparsity;
    nlohmann::json mask_s = nlohmann::json::array();
    for (const Mask& m : res.model.masks) mask_s.push_back(m.sparsity);
    fin["mask_sparsity"] = std::move(mask_s);
    fin["ranks"] = res.model.ranks;
    fin["mean_rank"] = res.eval.mean_rank;
    fin["mergeable"] = res.model.mergeable;
    fin["zero_pattern_violations"] = res.model.zero_pattern_violations;
    j["final"] = std::move(fin);

    return j.dump(2) + "\n";
}

std::string steps_csv(const RunConfig& cfg, const RunResult& res) {
    (void)cfg;
    const auto& names = res.model.merged.layers;
    std::string out = "t,theta,layer,s,p,r,loss_before,loss_after\n";
    for (const StepReport& sr : res.steps) {
        for (size_t i = 0; i < sr.s.size(); ++i) {
            out += std::to_string(sr.t);
            out += ',';
            out += fmt_g17(sr.theta);
            out += ',';
            out += i < names.size() ? names[i].name : "layer" + std::to_string(i);
            out += ',';
            out += fmt_g17(sr.s[i]);
            out += ',';
            out += fmt_g17(i < sr.p.size() ? sr.p[i] : 0.0);
            out += ',';
            out += std::to_string(i < sr.r.size() ? sr.r[i] : 0);
            out += ',';
            out += fmt_g17(i < sr.loss_before.size() ? sr.loss_before[i] : 0.0);
            out += ',';
            out += fmt_g17(i < sr.loss_after.size() ? sr.loss_after[i] : 0.0);
            out += '\n';
        }
    }
    return out;
}

std::string curves_csv(const RunConfig& cfg, const RunResult& res) {
    (void)cfg;
    std::string out = "t,theta,omega,mean_s_realized,total_loss_before,total_loss_after\n";
    for (const StepReport& sr : res.steps) {
        double before = 0.0, after = 0.0;
        for (double v : sr.loss_before) before += v;
        for (double v : sr.loss_after) after += v;
        out += std::to_string(sr.t);
        out += ',';
        out += fmt_g17(sr.theta);
        out += ',';
        out += std::to_string(sr.omega);
        out += ',';
        out += fmt_g17(sr.mean_s_realized);
        out += ',';
        out += fmt_g17(before);
        out += ',';
        out += fmt_g17(after);
        out += '\n';
    }
    return out;
}

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw io_error("write failed for " + path);
}

}  // namespace

void save_run_outputs(const std::string& outdir, const RunConfig& cfg, const RunResult& res) {
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw io_error("cannot create output directory " + outdir + ": " + ec.message());

    write_text(outdir + "/report.json", report_json(cfg, res));
    write_text(outdir + "/steps.csv", steps_csv(cfg, res));
    write_text(outdir + "/curves.csv", curves_csv(cfg, res));

    Checkpoint ckpt;
    ckpt.stack = res.model.merged;
    for (size_t i = 0; i < res.model.masks.size() && i < ckpt.stack.layers.size(); ++i) {
        ckpt.masks.emplace(ckpt.stack.layers[i].name, res.model.masks[i]);
    }
    save_checkpoint(outdir + "/model.ckpt", ckpt);
}

}  // namespace losa
