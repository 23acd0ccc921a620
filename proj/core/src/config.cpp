#include "regrasp/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace regrasp {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty section name");
      cfg.sections_[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    auto& sec = cfg.sections_[section];
    if (sec.count(key))
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                               "' in [" + section + "]");
    sec[key] = value;
  }
  return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return false;
  return it->second.count(key) > 0;
}

std::string ConfigFile::raw(const std::string& section, const std::string& key) const {
  touched_.insert({section, key});
  auto it = sections_.find(section);
  if (it == sections_.end()) return {};
  auto kt = it->second.find(key);
  if (kt == it->second.end()) return {};
  return kt->second;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const std::string v = raw(section, key);
  return has(section, key) ? v : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  const std::string v = raw(section, key);
  if (!has(section, key)) return fallback;
  size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size())
    throw std::runtime_error(origin_ + ": [" + section + "] " + key + ": not a number: " + v);
  return d;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
  const std::string v = raw(section, key);
  if (!has(section, key)) return fallback;
  size_t pos = 0;
  const long long i = std::stoll(v, &pos);
  if (pos != v.size())
    throw std::runtime_error(origin_ + ": [" + section + "] " + key + ": not an integer: " + v);
  return i;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  std::string v = raw(section, key);
  if (!has(section, key)) return fallback;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error(origin_ + ": [" + section + "] " + key + ": not a boolean: " + v);
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  const std::string v = raw(section, key);
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(v, ',')) {
    size_t pos = 0;
    out.push_back(std::stod(item, &pos));
    if (pos != item.size())
      throw std::runtime_error(origin_ + ": [" + section + "] " + key + ": bad list entry: " + item);
  }
  return out;
}

std::vector<long long> ConfigFile::get_ints(const std::string& section, const std::string& key,
                                            const std::vector<long long>& fallback) const {
  const std::string v = raw(section, key);
  if (!has(section, key)) return fallback;
  std::vector<long long> out;
  for (const auto& item : split_list(v, ',')) {
    size_t pos = 0;
    out.push_back(std::stoll(item, &pos));
    if (pos != item.size())
      throw std::runtime_error(origin_ + ": [" + section + "] " + key + ": bad list entry: " + item);
  }
  return out;
}

void ConfigFile::validate() const {
  std::vector<std::string> unknown;
  for (const auto& [section, kv] : sections_) {
    for (const auto& [key, value] : kv) {
      (void)value;
      if (!touched_.count({section, key})) unknown.push_back("[" + section + "] " + key);
    }
  }
  if (!unknown.empty()) {
    std::string msg = origin_ + ": unknown config keys:";
    for (const auto& u : unknown) msg += " " + u;
    throw std::runtime_error(msg);
  }
}

}  // namespace regrasp
