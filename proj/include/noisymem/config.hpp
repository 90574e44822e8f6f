#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "noisymem/error.hpp"

namespace noisymem {

/// Sectioned key-value text:
///
///   # comment
///   [section]
///   key = 0.25
///   name = "text"
///   list = [a, b, c]
///
/// Every read marks its key as used; reject_unused() then reports whatever
/// the caller did not understand, with the line it came from.
class ConfigDocument {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    bool used = false;
  };

  static ConfigDocument parse(std::istream& in, std::string origin = "<config>") {
    ConfigDocument doc;
    doc.origin_ = std::move(origin);
    std::string raw;
    std::string section;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const std::string text = trim(strip_comment(raw));
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') doc.fail(line, "malformed section header '" + text + "'");
        section = trim(text.substr(1, text.size() - 2));
        if (section.empty()) doc.fail(line, "empty section name");
        if (doc.section_lines_.count(section)) doc.fail(line, "section [" + section + "] appears twice");
        doc.section_lines_[section] = line;
        doc.sections_[section];
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) doc.fail(line, "expected 'key = value', got '" + text + "'");
      const std::string key = trim(text.substr(0, eq));
      std::string value = trim(text.substr(eq + 1));
      if (key.empty()) doc.fail(line, "missing key before '='");
      if (section.empty()) doc.fail(line, "key '" + key + "' appears before any [section]");
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      auto& entries = doc.sections_[section];
      if (entries.count(key)) doc.fail(line, "duplicate key '" + key + "' in [" + section + "]");
      entries[key] = {value, line, false};
    }
    return doc;
  }

  static ConfigDocument parse_string(const std::string& text, std::string origin = "<config>") {
    std::istringstream in(text);
    return parse(in, std::move(origin));
  }

  static ConfigDocument parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, path + ": cannot open config file");
    return parse(in, path);
  }

  const std::string& origin() const noexcept { return origin_; }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key);
  }

  std::string text(const std::string& section, const std::string& key, const std::string& fallback) {
    Entry* e = find(section, key);
    return e ? e->value : fallback;
  }

  double number(const std::string& section, const std::string& key, double fallback) {
    Entry* e = find(section, key);
    if (!e) return fallback;
    return parse_double(*e, key);
  }

  std::uint64_t count(const std::string& section, const std::string& key, std::uint64_t fallback) {
    Entry* e = find(section, key);
    if (!e) return fallback;
    std::uint64_t v = 0;
    const auto* end = e->value.data() + e->value.size();
    const auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc() || ptr != end) fail(e->line, "'" + key + "' needs a non-negative integer, got '" + e->value + "'");
    return v;
  }

  bool flag(const std::string& section, const std::string& key, bool fallback) {
    Entry* e = find(section, key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    fail(e->line, "'" + key + "' needs true or false, got '" + e->value + "'");
  }

  std::vector<std::string> list(const std::string& section, const std::string& key,
                                const std::vector<std::string>& fallback) {
    Entry* e = find(section, key);
    if (!e) return fallback;
    std::string body = e->value;
    if (body.size() < 2 || body.front() != '[' || body.back() != ']')
      fail(e->line, "'" + key + "' needs a list like [a, b], got '" + e->value + "'");
    body = body.substr(1, body.size() - 2);
    std::vector<std::string> out;
    std::istringstream items(body);
    std::string item;
    while (std::getline(items, item, ',')) {
      item = trim(item);
      if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  /// Line of a key (0 if absent); for errors raised after parsing.
  std::size_t line_of(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return 0;
    const auto k = s->second.find(key);
    return k == s->second.end() ? 0 : k->second.line;
  }

  /// Throws on the first section or key nobody asked for.
  void reject_unused(const std::vector<std::string>& known_sections) const {
    for (const auto& [name, line] : section_lines_)
      if (std::find(known_sections.begin(), known_sections.end(), name) == known_sections.end())
        fail(line, "unknown section [" + name + "]");
    std::size_t first = 0;
    std::string message;
    for (const auto& [name, entries] : sections_)
      for (const auto& [key, e] : entries)
        if (!e.used && (first == 0 || e.line < first)) {
          first = e.line;
          message = "unknown key '" + key + "' in [" + name + "]";
        }
    if (first) fail(first, message);
  }

  [[noreturn]] void fail(std::size_t line, const std::string& what) const {
    throw Error(ErrorKind::Config, origin_ + ":" + std::to_string(line) + ": " + what);
  }

 private:
  Entry* find(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }

  double parse_double(const Entry& e, const std::string& key) const {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (e.value.empty() || end != begin + e.value.size())
      fail(e.line, "'" + key + "' needs a number, got '" + e.value + "'");
    return v;
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (!quoted && s[i] == '#') return s.substr(0, i);
    }
    return s;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::string origin_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::map<std::string, std::size_t> section_lines_;
};

}  // namespace noisymem
