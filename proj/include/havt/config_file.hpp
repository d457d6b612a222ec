#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "havt/errors.hpp"

namespace havt {

// Flat "section.key=value" configuration. Lines starting with '#' are
// comments. Later assignments (and overrides) win.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::filesystem::path& file);

  // "section.key=value"; throws ConfigError when malformed.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  // Throws ConfigError naming any key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace havt
