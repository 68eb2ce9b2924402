#include "losa/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "losa/config.hpp"
#include "losa/error.hpp"
#include "losa/report.hpp"

namespace losa {

namespace {

const char* kUsage =
    "usage: losa <subcommand> [options]\n"
    "\n"
    "subcommands:\n"
    "  run         run the mode named in the config (default: losa)\n"
    "  oneshot     one-shot uniform pruning, no adapters\n"
    "  lora        uniform mask + dense low-rank adapters baseline\n"
    "  nm          progressive run with mixed N:M structured masks\n"
    "  importance  print per-layer importance for a saved checkpoint\n"
    "  report      summarize a saved report.json\n"
    "\n"
    "common options:\n"
    "  --config PATH     key/value config file (see README for the schema)\n"
    "  --set KEY=VALUE   override one config key (repeatable, wins over file)\n"
    "  --outdir PATH     output directory (default: out)\n"
    "  --threads N       worker threads (default: LOSA_THREADS env, else 1)\n"
    "  --help            show this help\n"
    "\n"
    "importance options:\n"
    "  --ckpt PATH       checkpoint to analyze (required)\n"
    "  --calib PATH      calibration container; omitted -> synthetic batch\n"
    "\n"
    "report options:\n"
    "  --outdir PATH     directory holding report.json (or use --file)\n"
    "  --file PATH       explicit report.json path\n";

struct ParsedArgs {
    std::string subcommand;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string outdir = "out";
    std::string ckpt_path;
    std::string calib_path;
    std::string file_path;
    int threads = 0;  // 0 = not given
    bool help = false;
};

ParsedArgs parse_args(const std::vector<std::string>& args) {
    ParsedArgs pa;
    size_t i = 0;
    if (i < args.size() && !args[i].empty() && args[i][0] != '-') {
        pa.subcommand = args[i];
        ++i;
    }
    auto need_value = [&](const std::string& flag) -> std::string {
        if (i + 1 >= args.size()) {
            throw config_error(flag + " needs a value");
        }
        return args[++i];
    };
    for (; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--help" || a == "-h") {
            pa.help = true;
        } else if (a == "--config") {
            pa.config_path = need_value(a);
        } else if (a == "--set") {
            std::string kv = need_value(a);
            size_t eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw config_error("--set expects KEY=VALUE, got '" + kv + "'");
            }
            pa.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (a == "--outdir") {
            pa.outdir = need_value(a);
        } else if (a == "--ckpt") {
            pa.ckpt_path = need_value(a);
        } else if (a == "--calib") {
            pa.calib_path = need_value(a);
        } else if (a == "--file") {
            pa.file_path = need_value(a);
        } else if (a == "--threads") {
            std::string v = need_value(a);
            char* end = nullptr;
            long t = std::strtol(v.c_str(), &end, 10);
            if (v.empty() || end != v.c_str() + v.size() || t < 1) {
                throw config_error("--threads expects a positive integer, got '" + v + "'");
            }
            pa.threads = static_cast<int>(t);
        } else {
            throw config_error("unknown option '" + a + "'");
        }
    }
    return pa;
}

// Precedence: --threads flag, then an explicit config/--set value, then the
// LOSA_THREADS environment variable, then 1.
void resolve_threads(RunConfig& cfg, const ParsedArgs& pa, bool threads_in_config) {
    if (pa.threads > 0) {
        cfg.threads = pa.threads;
        return;
    }
    if (threads_in_config) return;
    if (const char* env = std::getenv("LOSA_THREADS")) {
        std::string v = env;
        char* end = nullptr;
        long t = std::strtol(v.c_str(), &end, 10);
        if (v.empty() || end != v.c_str() + v.size() || t < 1) {
            throw config_error("LOSA_THREADS expects a positive integer, got '" + v + "'");
        }
        cfg.threads = static_cast<int>(t);
    }
}

RunConfig build_config(const ParsedArgs& pa) {
    RunConfig cfg;
    bool threads_set = false;
    if (!pa.config_path.empty()) {
        if (!std::filesystem::exists(pa.config_path)) {
            throw config_error("file not found: " + pa.config_path);
        }
        std::ifstream f(pa.config_path, std::ios::binary);
        if (!f) throw config_error("cannot read config file: " + pa.config_path);
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        auto kv = parse_config_text(text);
        for (const auto& [k, v] : kv) {
            apply_kv(cfg, k, v);
            if (k == "threads" || k == "run.threads") threads_set = true;
        }
    }
    for (const auto& [k, v] : pa.overrides) {
        apply_kv(cfg, k, v);
        if (k == "threads" || k == "run.threads") threads_set = true;
    }
    resolve_threads(cfg, pa, threads_set);
    return cfg;
}

int cmd_run(const ParsedArgs& pa, Mode* forced_mode, std::ostream& out) {
    RunConfig cfg = build_config(pa);
    if (forced_mode) cfg.mode = *forced_mode;
    RunResult res = run(cfg);
    save_run_outputs(pa.outdir, cfg, res);
    out << "mode=" << mode_name(res.mode) << " total_loss=" << res.eval.total_loss
        << " end_to_end_mse=" << res.eval.end_to_end_mse
        << " overall_sparsity=" << res.eval.overall_sparsity
        << " mean_rank=" << res.eval.mean_rank << "\n";
    out << "wrote " << pa.outdir << "/report.json, steps.csv, curves.csv, model.ckpt\n";
    return 0;
}

int cmd_importance(const ParsedArgs& pa, std::ostream& out) {
    if (pa.ckpt_path.empty()) {
        throw config_error("importance needs --ckpt PATH");
    }
    if (!std::filesystem::exists(pa.ckpt_path)) {
        throw config_error("file not found: " + pa.ckpt_path);
    }
    RunConfig cfg = build_config(pa);
    Checkpoint ckpt = load_checkpoint(pa.ckpt_path);

    // Effective weights: stored weight, plus adapter, under the mask.
    LayerStack eff;
    for (const Layer& l : ckpt.stack.layers) {
        Matrix w = l.weight;
        auto ait = ckpt.adapters.find(l.name);
        if (ait != ckpt.adapters.end() && ait->second.rank > 0) {
            Matrix ba = ait->second.product();
            for (size_t i = 0; i < w.data.size(); ++i) w.data[i] += ba.data[i];
        }
        auto mit = ckpt.masks.find(l.name);
        if (mit != ckpt.masks.end()) w = apply_mask(mit->second, w);
        eff.layers.push_back({l.name, std::move(w)});
    }

    Matrix calib;
    if (!pa.calib_path.empty()) {
        if (!std::filesystem::exists(pa.calib_path)) {
            throw config_error("file not found: " + pa.calib_path);
        }
        calib = load_calib(pa.calib_path);
    } else {
        calib = make_synthetic_calib(cfg.calib_samples, eff.layers.front().weight.cols, cfg.seed);
    }

    ForwardCapture fc = forward_capture(eff, calib, cfg.act);
    std::vector<Matrix> maps;
    if (cfg.use_inputs) {
        maps = fc.maps;
    } else {
        maps.assign(fc.maps.begin() + 1, fc.maps.end());
        maps.push_back(fc.outputs);
    }
    ImportanceVector iv = importance(maps, cfg.center);

    nlohmann::json j;
    nlohmann::json layers = nlohmann::json::array();
    for (size_t i = 0; i < iv.p.size(); ++i) {
        nlohmann::json l;
        l["name"] = eff.layers[i].name;
        l["p"] = iv.p[i];
        l["degenerate"] = iv.degenerate[i] != 0;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    j["center"] = cfg.center;
    j["use_inputs"] = cfg.use_inputs;
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_report(const ParsedArgs& pa, std::ostream& out) {
    std::string path = pa.file_path.empty() ? pa.outdir + "/report.json" : pa.file_path;
    if (!std::filesystem::exists(path)) {
        throw config_error("file not found: " + path);
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot read " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": not valid JSON: " + e.what());
    }
    try {
        const auto& fin = j.at("final");
        out << "mode:             " << fin.at("mode").get<std::string>() << "\n";
        out << "steps:            " << j.at("steps").size() << "\n";
        out << "total_loss:       " << fin.at("total_loss").get<double>() << "\n";
        out << "end_to_end_mse:   " << fin.at("end_to_end_mse").get<double>() << "\n";
        out << "overall_sparsity: " << fin.at("overall_sparsity").get<double>() << "\n";
        out << "mean_rank:        " << fin.at("mean_rank").get<double>() << "\n";
        out << "mergeable:        " << (fin.at("mergeable").get<bool>() ? "yes" : "no") << "\n";
        const auto& ll = fin.at("layer_loss");
        out << "layer_loss:      ";
        for (const auto& v : ll) out << " " << v.get<double>();
        out << "\n";
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": missing report fields: " + e.what());
    }
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        ParsedArgs pa = parse_args(args);
        if (pa.subcommand.empty()) {
            if (pa.help) {
                out << kUsage;
                return 0;
            }
            err << "error: no subcommand\n" << kUsage;
            return 2;
        }
        if (pa.help) {
            out << kUsage;
            return 0;
        }
        if (pa.subcommand == "run") {
            return cmd_run(pa, nullptr, out);
        } else if (pa.subcommand == "oneshot") {
            Mode m = Mode::oneshot;
            return cmd_run(pa, &m, out);
        } else if (pa.subcommand == "lora") {
            Mode m = Mode::lora_baseline;
            return cmd_run(pa, &m, out);
        } else if (pa.subcommand == "nm") {
            Mode m = Mode::nm_losa;
            return cmd_run(pa, &m, out);
        } else if (pa.subcommand == "importance") {
            return cmd_importance(pa, out);
        } else if (pa.subcommand == "report") {
            return cmd_report(pa, out);
        }
        err << "error: unknown subcommand '" << pa.subcommand << "'\n" << kUsage;
        return 2;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        err << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const io_error& e) {
        err << "io error: " << e.what() << "\n";
        return 4;
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace losa
