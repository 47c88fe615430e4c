#pragma once

// Independent reference implementations and random fixtures shared by the
// unit tests and the acceptance runner.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "fm/fm.hpp"

namespace oracle {

/// Store with random shape, names and unit rows (stored as float).
inline fm::EmbeddingStore random_store(std::uint64_t seed) {
  const fm::Stream s(seed, fm::Purpose::Instance, {0xF11E});
  fm::EmbeddingStore st;
  st.dim = static_cast<std::uint32_t>(1 + s.below(48, 0));
  const std::size_t t = 1 + s.below(6, 1);
  const std::size_t k = 1 + s.below(7, 2);
  const std::size_t n = s.below(20, 3);
  for (std::size_t c = 0; c < k; ++c) st.class_names.push_back("cls-" + std::to_string(c) + "\xC3\xA9");
  for (std::size_t p = 0; p < t; ++p) st.templates.push_back("template " + std::to_string(p) + " of a {}.");
  std::size_t cursor = 100;
  const auto unit_row = [&](std::vector<float>& out) {
    fm::Vec v(st.dim);
    for (double& x : v) x = s.gaussian(cursor++);
    for (double x : fm::l2_normalize(v)) out.push_back(static_cast<float>(x));
  };
  for (std::size_t e = 0; e < t * k; ++e) unit_row(st.text);
  for (std::size_t i = 0; i < n; ++i) {
    st.labels.push_back(static_cast<std::uint32_t>(s.below(k, 1000 + i)));
    unit_row(st.images);
  }
  return st;
}

/// Score matrix with values drawn from a small grid when `ties` is set, so
/// that equal scores appear inside and across columns.
inline fm::ScoreMatrix random_scores(std::uint64_t seed, std::size_t index, bool ties, std::size_t& t,
                                     std::size_t& k) {
  const fm::Stream s(seed, fm::Purpose::Instance, {index, 77});
  t = 1 + s.below(10, 0);
  k = 2 + s.below(9, 1);
  std::vector<double> v(t * k);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = ties ? -1.0 + 0.25 * static_cast<double>(s.below(9, 10 + i)) : 2.0 * s.uniform(10 + i) - 1.0;
  }
  return fm::ScoreMatrix(t, k, std::move(v));
}

/// Full stable sort of each pool in (template, class) order.
inline fm::UnexpectedSelection brute_force_select(const fm::ScoreMatrix& s, std::size_t label, std::size_t beta) {
  fm::UnexpectedSelection sel;
  sel.label = label;
  std::vector<fm::FeatureIndex> pos;
  std::vector<fm::FeatureIndex> neg;
  for (std::size_t p = 0; p < s.num_templates(); ++p) {
    for (std::size_t c = 0; c < s.num_classes(); ++c) (c == label ? pos : neg).push_back({p, c});
  }
  const auto score = [&](const fm::FeatureIndex& f) { return s(f.template_index, f.class_index); };
  std::stable_sort(pos.begin(), pos.end(), [&](auto& a, auto& b) { return score(a) < score(b); });
  std::stable_sort(neg.begin(), neg.end(), [&](auto& a, auto& b) { return score(a) > score(b); });
  sel.designated.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(beta));
  sel.non_designated.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(beta));
  return sel;
}

inline bool has_ties(const fm::ScoreMatrix& s) {
  std::vector<double> v(s.values().begin(), s.values().end());
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace oracle
