#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace regrasp {

// Minimal sectioned key-value config:
//   [section] or [section.sub] headers, key = value lines, # comments.
// Readers record every key they touch; validate() then rejects anything
// unknown, so typos fail loudly instead of being ignored.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& section, const std::string& key,
                                  const std::vector<long long>& fallback) const;

  // Throws listing every (section, key) never read by a getter.
  void validate() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::string raw(const std::string& section, const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
  mutable std::set<std::pair<std::string, std::string>> touched_;
};

std::vector<std::string> split_list(const std::string& value, char sep);

}  // namespace regrasp
