#pragma once

#include <map>
#include <string>
#include <vector>

#include "gkcv/common.hpp"

namespace gkcv {

// Flat key-value configuration: one `key = value` pair per line, dotted
// section keys, '#' comments. See docs/config.md for the grammar and the key
// reference. Unknown keys are rejected to catch typos.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // throws ConfigError when a key is not in the known set
  void validate_keys(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace gkcv
