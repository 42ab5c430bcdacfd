#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fmsv/errors.hpp"

// sectioned key/value config. `#` starts a comment, keys are unique within
// their section, and parse(to_string(c)) == c so configs can be embedded in
// run manifests and reproduced losslessly.

namespace fmsv {

class ConfigFile {
 public:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };

  static ConfigFile parse(const std::string& text, const std::string& origin = "config") {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']')
          throw UsageError(origin + ":" + std::to_string(lineno) + ": unterminated section");
        cfg.sections_.push_back({trim(trimmed.substr(1, trimmed.size() - 2)), {}});
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      if (cfg.sections_.empty())
        throw UsageError(origin + ":" + std::to_string(lineno) + ": entry before any section");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
      auto& entries = cfg.sections_.back().entries;
      const bool dup = std::any_of(entries.begin(), entries.end(),
                                   [&](const auto& e) { return e.first == key; });
      if (dup)
        throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                         "' in section [" + cfg.sections_.back().name + "]");
      entries.emplace_back(std::move(key), std::move(value));
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      if (i > 0) out << '\n';
      out << '[' << sections_[i].name << "]\n";
      for (const auto& [key, value] : sections_[i].entries) out << key << " = " << value << '\n';
    }
    return out.str();
  }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  std::string get(const std::string& section, const std::string& key) const {
    if (const std::string* v = find(section, key)) return *v;
    throw UsageError("config is missing " + section + "." + key);
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
      throw UsageError("config " + section + "." + key + ": '" + v + "' is not a number");
    return x;
  }

  long long get_int(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
      throw UsageError("config " + section + "." + key + ": '" + v + "' is not an integer");
    return x;
  }

  std::uint64_t get_uint64(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty())
      throw UsageError("config " + section + "." + key + ": '" + v +
                       "' is not a nonnegative integer");
    return x;
  }

  void set(const std::string& section, const std::string& key, std::string value) {
    for (auto& sec : sections_) {
      if (sec.name != section) continue;
      for (auto& entry : sec.entries) {
        if (entry.first == key) {
          entry.second = std::move(value);
          return;
        }
      }
      sec.entries.emplace_back(key, std::move(value));
      return;
    }
    sections_.push_back({section, {{key, std::move(value)}}});
  }

  const std::vector<Section>& sections() const { return sections_; }

  friend bool operator==(const ConfigFile& a, const ConfigFile& b) {
    if (a.sections_.size() != b.sections_.size()) return false;
    for (std::size_t i = 0; i < a.sections_.size(); ++i) {
      if (a.sections_[i].name != b.sections_[i].name) return false;
      if (a.sections_[i].entries != b.sections_[i].entries) return false;
    }
    return true;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto begin = s.begin(), end = s.end();
    while (begin != end && is_space(*begin)) ++begin;
    while (end != begin && is_space(*(end - 1))) --end;
    return {begin, end};
  }

  const std::string* find(const std::string& section, const std::string& key) const {
    for (const auto& sec : sections_) {
      if (sec.name != section) continue;
      for (const auto& entry : sec.entries)
        if (entry.first == key) return &entry.second;
    }
    return nullptr;
  }

  std::vector<Section> sections_;
};

}  // namespace fmsv
