#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "errors.hpp"

namespace mtoc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "variant",        "variants",       "sigma",
      "gamma",          "gamma1",         "gamma2",
      "gamma3",         "eta_b",          "eta_a",
      "eta_theta",      "epsilon",        "max_iters",
      "max_halvings",   "backtracking",   "project_psd",
      "prox_max_iters", "prox_tol",       "squared_group",
      "data",           "repetitions",    "sweep_gammas",
      "synth_tasks",    "synth_per_task", "synth_dim",
      "synth_relatedness", "synth_test_pos", "synth_test_neg",
      "synth_unrelated",   "synth_mean_scale", "synth_noise",
      "cv_folds",
  };
  return keys;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  const std::string n = lower(trim(name));
  if (n == "ocksr") return Variant::Ocksr;
  if (n == "c-ocksr") return Variant::COcksr;
  if (n == "ocksr-l") return Variant::OcksrL;
  if (n == "ocksr-n") return Variant::OcksrN;
  if (n == "ocksr-ns") return Variant::OcksrNs;
  fail(ErrorCode::InvalidArgument,
       "unknown variant '" + name +
           "' (expected ocksr, c-ocksr, ocksr-l, ocksr-n, or ocksr-ns)");
}

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::Ocksr: return "ocksr";
    case Variant::COcksr: return "c-ocksr";
    case Variant::OcksrL: return "ocksr-l";
    case Variant::OcksrN: return "ocksr-n";
    case Variant::OcksrNs: return "ocksr-ns";
  }
  return "unknown";
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream text;
  text << in.rdbuf();
  return from_string(text.str(), path);
}

Config Config::from_string(const std::string& text,
                           const std::string& origin) {
  Config config;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << origin << ":" << line_no << ": expected 'key = value'";
      fail(ErrorCode::Parse, msg.str());
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      std::ostringstream msg;
      msg << origin << ":" << line_no << ": empty key";
      fail(ErrorCode::Parse, msg.str());
    }
    if (config.values_.count(key) > 0) {
      std::ostringstream msg;
      msg << origin << ":" << line_no << ": duplicate key '" << key << "'";
      fail(ErrorCode::Parse, msg.str());
    }
    config.values_[key] = value;
  }
  return config;
}

bool Config::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorCode::InvalidArgument, "missing config key '" + key + "'");
  }
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string raw = get_string(key);
  const char* begin = raw.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(value)) {
    fail(ErrorCode::Parse,
         "config key '" + key + "': cannot parse number '" + raw + "'");
  }
  return value;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int Config::get_int(const std::string& key) const {
  const std::string raw = get_string(key);
  const char* begin = raw.c_str();
  char* end = nullptr;
  const long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    fail(ErrorCode::Parse,
         "config key '" + key + "': cannot parse integer '" + raw + "'");
  }
  return static_cast<int>(value);
}

int Config::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

uint64_t Config::get_uint64(const std::string& key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = get_string(key);
  const char* begin = raw.c_str();
  char* end = nullptr;
  const unsigned long long value = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0') {
    fail(ErrorCode::Parse,
         "config key '" + key + "': cannot parse integer '" + raw + "'");
  }
  return static_cast<uint64_t>(value);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string raw = lower(get_string(key));
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
    return false;
  }
  fail(ErrorCode::Parse,
       "config key '" + key + "': cannot parse boolean '" + raw + "'");
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<double> values;
  std::istringstream in(raw);
  std::string field;
  while (std::getline(in, field, ',')) {
    field = trim(field);
    if (field.empty()) continue;
    const char* begin = field.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(value)) {
      fail(ErrorCode::Parse,
           "config key '" + key + "': cannot parse number '" + field + "'");
    }
    values.push_back(value);
  }
  if (values.empty()) {
    fail(ErrorCode::Parse, "config key '" + key + "': empty list");
  }
  return values;
}

std::vector<std::string> Config::get_string_list(
    const std::string& key) const {
  const std::string raw = get_string(key);
  std::vector<std::string> values;
  std::istringstream in(raw);
  std::string field;
  while (std::getline(in, field, ',')) {
    field = trim(field);
    if (!field.empty()) values.push_back(field);
  }
  if (values.empty()) {
    fail(ErrorCode::Parse, "config key '" + key + "': empty list");
  }
  return values;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

uint64_t Config::fingerprint() const {
  uint64_t hash = 14695981039346656037ULL;
  auto mix = [&hash](const std::string& text) {
    for (unsigned char c : text) {
      hash ^= c;
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& [key, value] : values_) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  return hash;
}

void Config::validate_keys() const {
  for (const auto& [key, value] : values_) {
    if (known_keys().count(key) == 0) {
      fail(ErrorCode::InvalidArgument, "unrecognized config key '" + key +
                                           "'");
    }
  }
}

}  // namespace mtoc
