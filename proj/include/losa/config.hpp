#pragma once

#include <map>
#include <string>
#include <vector>

#include "losa/driver.hpp"

namespace losa {

// Flat key/value view of a config file. Accepted syntax: `key = value`
// lines, `#` comments, blank lines, `[section]` headers (keys inside get a
// "section." prefix) and dotted keys. Values: numbers, true/false, "quoted"
// or bare strings, and [a, b, c] integer arrays.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Apply one key to a run config. Unknown keys and malformed values raise
// config_error naming the key.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig config_from(const std::map<std::string, std::string>& kv);

// Read and apply a config file; a missing file is a config error.
RunConfig load_run_config(const std::string& path);

// Recognized keys with their expected value type, for diagnostics.
const std::vector<std::pair<std::string, std::string>>& config_keys();

Mode parse_mode(const std::string& v);
Activation parse_activation(const std::string& v);
ScheduleKind parse_schedule(const std::string& v);
Scorer parse_scorer(const std::string& v);

}  // namespace losa
