#include "tubempc/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace tubempc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_factor(const std::string& token, const std::string& key) {
  const std::string t = trim(token);
  if (t == "pi") return std::numbers::pi;
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || t.empty()) {
    throw ConfigError("config: key '" + key + "' has non-numeric value '" +
                      t + "'");
  }
  return v;
}

// Accepts plain numbers and products/quotients such as -pi/16 or 3*pi/4.
double parse_scalar(const std::string& text, const std::string& key) {
  std::string t = trim(text);
  double sign = 1.0;
  if (!t.empty() && t[0] == '-' && t.find("pi") != std::string::npos) {
    sign = -1.0;
    t = t.substr(1);
  }
  double value = 1.0;
  char op = '*';
  std::size_t start = 0;
  for (std::size_t i = 0; i <= t.size(); ++i) {
    // Exponent signs such as 1e-3 never follow '*' or '/', so only those
    // two characters split factors.
    if (i == t.size() || t[i] == '*' || t[i] == '/') {
      const double f = parse_factor(t.substr(start, i - start), key);
      value = op == '*' ? value * f : value / f;
      if (i < t.size()) op = t[i];
      start = i + 1;
    }
  }
  return sign * value;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::Parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return Parse(in);
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

double KeyValueConfig::number(const std::string& key) const {
  return parse_scalar(raw(key), key);
}

std::int64_t KeyValueConfig::integer(const std::string& key) const {
  const std::string t = trim(raw(key));
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config: key '" + key + "' expects an integer");
  }
  return v;
}

bool KeyValueConfig::boolean(const std::string& key) const {
  std::string t = trim(raw(key));
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean");
}

std::vector<double> KeyValueConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& w : split_list(raw(key))) out.push_back(parse_scalar(w, key));
  return out;
}

std::vector<std::string> KeyValueConfig::words(const std::string& key) const {
  return split_list(raw(key));
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : entries_) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

const std::set<std::string>& plant_config_keys() {
  static const std::set<std::string> keys = {
      "link_lengths", "theta_lower", "theta_upper", "input_lower",
      "input_upper",  "eta1",        "seed"};
  return keys;
}

namespace {

Eigen::Vector3d triple(const KeyValueConfig& cfg, const std::string& key) {
  const auto v = cfg.numbers(key);
  if (v.size() != 3) {
    throw ConfigError("config: key '" + key + "' expects 3 numbers");
  }
  return Eigen::Vector3d(v[0], v[1], v[2]);
}

}  // namespace

PlantConfig plant_config_from(const KeyValueConfig& cfg) {
  PlantConfig out;
  ArmParams& p = out.params;
  if (cfg.has("link_lengths")) p.link_lengths = triple(cfg, "link_lengths");
  if (cfg.has("theta_lower")) p.state_box.lower.tail<3>() = triple(cfg, "theta_lower");
  if (cfg.has("theta_upper")) p.state_box.upper.tail<3>() = triple(cfg, "theta_upper");
  if (cfg.has("input_lower")) p.input_box.lower = triple(cfg, "input_lower");
  if (cfg.has("input_upper")) p.input_box.upper = triple(cfg, "input_upper");
  if (cfg.has("eta1")) p.eta1 = cfg.number("eta1");
  if (cfg.has("seed")) {
    const auto s = cfg.integer("seed");
    if (s < 0) throw ConfigError("config: seed must be nonnegative");
    out.seed = static_cast<std::uint64_t>(s);
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return out;
}

PlantConfig load_plant_config(std::istream& in) {
  const auto cfg = KeyValueConfig::Parse(in);
  cfg.reject_unknown(plant_config_keys());
  return plant_config_from(cfg);
}

}  // namespace tubempc
