#pragma once

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fm/error.hpp"
#include "fm/prompt_bank.hpp"

namespace fm {

/// Flat `key = value` document. Later duplicates override earlier ones.
struct RunConfig {
  std::vector<std::pair<std::string, std::string>> entries;

  [[nodiscard]] const std::string* find(std::string_view key) const {
    const std::string* hit = nullptr;
    for (const auto& [k, v] : entries) {
      if (k == key) hit = &v;
    }
    return hit;
  }
};

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
/// Keys outside `known` are rejected with InvalidConfig.
inline RunConfig parse_run_config(std::string_view text, const std::set<std::string>& known) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    // Underscores and dashes are interchangeable in keys.
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    if (!known.contains(key)) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    cfg.entries.emplace_back(std::move(key), std::move(value));
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path, const std::set<std::string>& known) {
  std::string text;
  for (const auto& l : read_lines(path)) text += l + "\n";
  return parse_run_config(text, known);
}

}  // namespace fm
