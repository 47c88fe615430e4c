#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fm/error.hpp"
#include "fm/rng.hpp"

namespace fm {

inline constexpr std::string_view kPlaceholder = "{}";

inline std::size_t count_placeholders(std::string_view pattern) {
  std::size_t count = 0;
  for (std::size_t pos = pattern.find(kPlaceholder); pos != std::string_view::npos;
       pos = pattern.find(kPlaceholder, pos + kPlaceholder.size())) {
    ++count;
  }
  return count;
}

/// A hand-crafted prompt with exactly one `{}` slot for the class name.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
    if (pattern_.empty()) throw Error(ErrorCode::MalformedTemplate, "empty template");
    const std::size_t n = count_placeholders(pattern_);
    if (n != 1) {
      throw Error(ErrorCode::MalformedTemplate,
                  "'" + pattern_ + "' has " + std::to_string(n) + " placeholders, expected 1");
    }
  }

  [[nodiscard]] const std::string& pattern() const noexcept { return pattern_; }

  [[nodiscard]] std::string render(std::string_view class_name) const {
    const std::size_t pos = pattern_.find(kPlaceholder);
    std::string out;
    out.reserve(pattern_.size() + class_name.size());
    out.append(pattern_, 0, pos);
    out.append(class_name);
    out.append(pattern_, pos + kPlaceholder.size());
    return out;
  }

  bool operator==(const PromptTemplate&) const = default;

 private:
  std::string pattern_;
};

inline std::string render_prompt(const PromptTemplate& tmpl, std::string_view class_name) {
  return tmpl.render(class_name);
}

/// Validates the raw pattern, so malformed text is rejected at render time too.
inline std::string render_prompt(std::string_view pattern, std::string_view class_name) {
  return PromptTemplate(std::string(pattern)).render(class_name);
}

// CLIP-style hand-crafted templates; editable copy lives in assets/templates.txt.
inline constexpr std::array<std::string_view, 60> kDefaultTemplates = {
    "a photo of a {}.",
    "a bad photo of a {}.",
    "a photo of many {}.",
    "a sculpture of a {}.",
    "a photo of the hard to see {}.",
    "a low resolution photo of the {}.",
    "a rendering of a {}.",
    "graffiti of a {}.",
    "a bad photo of the {}.",
    "a cropped photo of the {}.",
    "a tattoo of a {}.",
    "the embroidered {}.",
    "a photo of a hard to see {}.",
    "a bright photo of a {}.",
    "a photo of a clean {}.",
    "a photo of a dirty {}.",
    "a dark photo of the {}.",
    "a drawing of a {}.",
    "a photo of my {}.",
    "the plastic {}.",
    "a photo of the cool {}.",
    "a close-up photo of a {}.",
    "a black and white photo of the {}.",
    "a painting of the {}.",
    "a painting of a {}.",
    "a pixelated photo of the {}.",
    "a sculpture of the {}.",
    "a bright photo of the {}.",
    "a cropped photo of a {}.",
    "a plastic {}.",
    "a photo of the dirty {}.",
    "a jpeg corrupted photo of a {}.",
    "a blurry photo of the {}.",
    "a photo of the {}.",
    "a good photo of the {}.",
    "a rendering of the {}.",
    "a {} in a video game.",
    "a photo of one {}.",
    "a doodle of a {}.",
    "a close-up photo of the {}.",
    "the origami {}.",
    "the {} in a video game.",
    "a sketch of a {}.",
    "a doodle of the {}.",
    "a origami {}.",
    "a low resolution photo of a {}.",
    "the toy {}.",
    "a rendition of the {}.",
    "a photo of the clean {}.",
    "a photo of a large {}.",
    "a rendition of a {}.",
    "a photo of a nice {}.",
    "a photo of a weird {}.",
    "a blurry photo of a {}.",
    "a cartoon {}.",
    "art of a {}.",
    "a sketch of the {}.",
    "a embroidered {}.",
    "a pixelated photo of a {}.",
    "itap of the {}.",
};

/// Ordered, nonempty list of templates.
class TemplateBank {
 public:
  explicit TemplateBank(std::vector<PromptTemplate> templates) : templates_(std::move(templates)) {
    if (templates_.empty()) throw Error(ErrorCode::InvalidConfig, "template bank is empty");
  }

  /// The first `count` default templates. Counts beyond the built-in list
  /// reuse it with a numbered suffix so every pattern stays distinct.
  static TemplateBank defaults(std::size_t count = kDefaultTemplates.size()) {
    if (count == 0) throw Error(ErrorCode::InvalidConfig, "template count must be >= 1");
    std::vector<PromptTemplate> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::string pattern(kDefaultTemplates[i % kDefaultTemplates.size()]);
      if (i >= kDefaultTemplates.size()) {
        pattern += " (variant " + std::to_string(i / kDefaultTemplates.size()) + ")";
      }
      out.emplace_back(std::move(pattern));
    }
    return TemplateBank(std::move(out));
  }

  [[nodiscard]] std::size_t size() const noexcept { return templates_.size(); }
  [[nodiscard]] const PromptTemplate& operator[](std::size_t i) const { return templates_[i]; }
  [[nodiscard]] const std::vector<PromptTemplate>& templates() const noexcept { return templates_; }

  [[nodiscard]] std::vector<std::string> patterns() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& t : templates_) out.push_back(t.pattern());
    return out;
  }

  bool operator==(const TemplateBank&) const = default;

 private:
  std::vector<PromptTemplate> templates_;
};

inline std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct BaseNovelSplit {
  std::vector<std::size_t> base;   // sorted ascending
  std::vector<std::size_t> novel;  // sorted ascending
};

/// Class names plus an optional base/novel partition.
class ClassVocabulary {
 public:
  explicit ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      const std::string key = trim(n);
      if (key.empty()) throw Error(ErrorCode::InvalidConfig, "empty class name");
      if (!seen.insert(key).second) throw Error(ErrorCode::DuplicateClass, "'" + key + "'");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
  [[nodiscard]] const std::string& operator[](std::size_t i) const { return names_[i]; }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] const std::optional<BaseNovelSplit>& split() const noexcept { return split_; }

  void set_split(BaseNovelSplit split) {
    std::vector<bool> hit(names_.size(), false);
    for (const auto* part : {&split.base, &split.novel}) {
      for (std::size_t i : *part) {
        if (i >= names_.size() || hit[i]) {
          throw Error(ErrorCode::SplitMismatch, "split must partition class indices");
        }
        hit[i] = true;
      }
    }
    if (std::find(hit.begin(), hit.end(), false) != hit.end()) {
      throw Error(ErrorCode::SplitMismatch, "split does not cover every class");
    }
    std::sort(split.base.begin(), split.base.end());
    std::sort(split.novel.begin(), split.novel.end());
    split_ = std::move(split);
  }

  bool operator==(const ClassVocabulary&) const = default;

 private:
  std::vector<std::string> names_;
  std::optional<BaseNovelSplit> split_;
};

/// Random even partition: ceil(K/2) base classes, floor(K/2) novel.
inline ClassVocabulary split_base_novel(ClassVocabulary vocab, std::uint64_t seed) {
  const std::size_t k = vocab.size();
  if (k < 2) throw Error(ErrorCode::TooFewClasses, "need at least 2 classes, got " + std::to_string(k));
  const auto perm = permutation(k, Stream(seed, Purpose::Split, {k}));
  const std::size_t n_base = (k + 1) / 2;
  BaseNovelSplit split;
  split.base.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_base));
  split.novel.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_base), perm.end());
  vocab.set_split(std::move(split));
  return vocab;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// One template per line; blank lines and `#` comments are skipped.
inline TemplateBank parse_template_text(std::string_view text) {
  std::vector<PromptTemplate> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return TemplateBank(std::move(out));
}

inline TemplateBank load_template_file(const std::string& path) {
  std::string text;
  for (const auto& l : read_lines(path)) text += l + "\n";
  return parse_template_text(text);
}

/// One class name per line; blank lines are skipped.
inline ClassVocabulary load_class_file(const std::string& path) {
  std::vector<std::string> names;
  for (const auto& l : read_lines(path)) {
    std::string t = trim(l);
    if (!t.empty()) names.push_back(std::move(t));
  }
  return ClassVocabulary(std::move(names));
}

}  // namespace fm
