#include "weedid/io/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include "weedid/error.hpp"
#include "weedid/io/files.hpp"

namespace weedid::io {
namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string env_name_for(const std::string& key) {
  std::string name = "WEEDID_";
  for (char c : key) name.push_back(std::isalnum(static_cast<unsigned char>(c))
                                        ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                                        : '_');
  return name;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::ConfigError, "bad section header on line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "expected key = value on line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::ConfigError, "empty key on line " + std::to_string(lineno));
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void KeyValueConfig::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

void KeyValueConfig::alias_env(const std::string& key, std::string env_name) {
  aliases_[key] = std::move(env_name);
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  if (auto alias = aliases_.find(key); alias != aliases_.end()) {
    if (const char* v = std::getenv(alias->second.c_str())) return std::string(v);
  }
  if (const char* v = std::getenv(env_name_for(key).c_str())) return std::string(v);
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long long out = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, key + " is not an integer: " + *v);
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, key + " is not a number: " + *v);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw Error(ErrorCode::ConfigError, key + " is not a boolean: " + *v);
}

}  // namespace weedid::io
