#include "losa/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "losa/error.hpp"

namespace losa {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Cut a trailing comment, respecting double quotes.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

long long to_int(const std::string& key, const std::string& v) {
    std::string s = unquote(trim(v));
    char* end = nullptr;
    errno = 0;
    long long x = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw config_error("key '" + key + "' expects an integer, got '" + v + "'");
    }
    return x;
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    std::string s = unquote(trim(v));
    if (!s.empty() && s[0] == '-') {
        throw config_error("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    char* end = nullptr;
    errno = 0;
    unsigned long long x = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw config_error("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return static_cast<uint64_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
    std::string s = unquote(trim(v));
    char* end = nullptr;
    errno = 0;
    double x = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw config_error("key '" + key + "' expects a number, got '" + v + "'");
    }
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string s = unquote(trim(v));
    if (s == "true") return true;
    if (s == "false") return false;
    throw config_error("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> to_int_array(const std::string& key, const std::string& v) {
    std::string s = trim(v);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
        throw config_error("key '" + key + "' expects an array like [32, 64, 32], got '" + v +
                           "'");
    }
    std::vector<int> out;
    std::string body = s.substr(1, s.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            throw config_error("key '" + key + "' has an empty array element");
        }
        out.push_back(static_cast<int>(to_int(key, item)));
    }
    if (out.empty()) {
        throw config_error("key '" + key + "' expects a non-empty array");
    }
    return out;
}

}  // namespace

Mode parse_mode(const std::string& v) {
    std::string s = unquote(trim(v));
    if (s == "losa") return Mode::losa;
    if (s == "lora") return Mode::lora_baseline;
    if (s == "oneshot") return Mode::oneshot;
    if (s == "nm") return Mode::nm_losa;
    throw config_error("mode must be losa, lora, oneshot or nm, got '" + v + "'");
}

Activation parse_activation(const std::string& v) {
    std::string s = unquote(trim(v));
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw config_error("activation must be relu or identity, got '" + v + "'");
}

ScheduleKind parse_schedule(const std::string& v) {
    std::string s = unquote(trim(v));
    if (s == "cubic") return ScheduleKind::cubic;
    if (s == "linear") return ScheduleKind::linear;
    throw config_error("schedule must be cubic or linear, got '" + v + "'");
}

Scorer parse_scorer(const std::string& v) {
    std::string s = unquote(trim(v));
    if (s == "wanda") return Scorer::wanda;
    if (s == "magnitude") return Scorer::magnitude;
    throw config_error("scorer must be wanda or magnitude, got '" + v + "'");
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) {
                throw config_error("line " + std::to_string(lineno) + ": empty section header");
            }
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw config_error("line " + std::to_string(lineno) +
                               ": expected key = value, got '" + s + "'");
        }
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) {
            throw config_error("line " + std::to_string(lineno) + ": empty key");
        }
        if (value.empty()) {
            throw config_error("line " + std::to_string(lineno) + ": key '" + key +
                               "' has no value");
        }
        if (!section.empty()) key = section + "." + key;
        out[key] = value;
    }
    return out;
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"mode", "losa | lora | oneshot | nm"},
        {"dims", "integer array, layer widths"},
        {"model_sigma", "number"},
        {"calib_samples", "integer"},
        {"activation", "relu | identity"},
        {"schedule", "cubic | linear"},
        {"steps", "integer"},
        {"theta_f", "number in [0, 1]"},
        {"omega1", "integer"},
        {"scorer", "wanda | magnitude"},
        {"center", "bool"},
        {"use_inputs", "bool"},
        {"lp_delta", "number"},
        {"nm_group", "integer"},
        {"lr", "number"},
        {"epochs", "integer"},
        {"adapter_sigma", "number"},
        {"lora_rank", "integer"},
        {"max_grad_norm", "number"},
        {"weight_decay", "number"},
        {"threads", "integer"},
        {"seed", "non-negative integer"},
    };
    return keys;
}

void apply_kv(RunConfig& cfg, const std::string& raw_key, const std::string& value) {
    // Allow a "run." prefix so sectioned files read naturally.
    std::string key = raw_key;
    if (key.rfind("run.", 0) == 0) key = key.substr(4);

    if (key == "mode") {
        cfg.mode = parse_mode(value);
    } else if (key == "dims") {
        cfg.dims = to_int_array(key, value);
    } else if (key == "model_sigma") {
        cfg.model_sigma = to_double(key, value);
    } else if (key == "calib_samples") {
        cfg.calib_samples = static_cast<int>(to_int(key, value));
    } else if (key == "activation") {
        cfg.act = parse_activation(value);
    } else if (key == "schedule") {
        cfg.schedule = parse_schedule(value);
    } else if (key == "steps") {
        cfg.steps = static_cast<int>(to_int(key, value));
    } else if (key == "theta_f") {
        cfg.theta_f = to_double(key, value);
    } else if (key == "omega1") {
        cfg.omega1 = to_int(key, value);
    } else if (key == "scorer") {
        cfg.scorer = parse_scorer(value);
    } else if (key == "center") {
        cfg.center = to_bool(key, value);
    } else if (key == "use_inputs") {
        cfg.use_inputs = to_bool(key, value);
    } else if (key == "lp_delta") {
        cfg.lp_delta = to_double(key, value);
    } else if (key == "nm_group") {
        cfg.nm_group = static_cast<int>(to_int(key, value));
    } else if (key == "lr") {
        cfg.lr = to_double(key, value);
    } else if (key == "epochs") {
        cfg.epochs = static_cast<int>(to_int(key, value));
    } else if (key == "adapter_sigma") {
        cfg.adapter_sigma = to_double(key, value);
    } else if (key == "lora_rank") {
        cfg.lora_rank = static_cast<int>(to_int(key, value));
    } else if (key == "max_grad_norm") {
        cfg.max_grad_norm = to_double(key, value);
    } else if (key == "weight_decay") {
        cfg.weight_decay = to_double(key, value);
    } else if (key == "threads") {
        cfg.threads = static_cast<int>(to_int(key, value));
    } else if (key == "seed") {
        cfg.seed = to_u64(key, value);
    } else {
        throw config_error("unknown config key '" + raw_key + "'");
    }
}

RunConfig config_from(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [k, v] : kv) apply_kv(cfg, k, v);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw config_error("config file not found: " + path);
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot read config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from(parse_config_text(text));
}

}  // namespace losa
