#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace weedid::io {

// Flat `key = value` configuration. Lines starting with '#' or ';' are
// comments; `[section]` headers prefix following keys as `section.key`.
// Environment variables override file values: key `serve.port` is looked up
// as WEEDID_SERVE_PORT, and explicitly registered aliases (e.g. PORT) win over
// both.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  void alias_env(const std::string& key, std::string env_name);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace weedid::io
