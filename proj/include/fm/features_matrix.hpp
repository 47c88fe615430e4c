#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fm/encoder.hpp"
#include "fm/error.hpp"
#include "fm/prompt_bank.hpp"
#include "fm/vecmath.hpp"

namespace fm {

inline constexpr double kEntryNormSlack = 1e-6;

/// Frozen T x K grid of unit text features, one per (template, class).
class FeaturesMatrix {
 public:
  FeaturesMatrix(std::size_t num_templates, std::size_t num_classes, std::size_t dim, std::vector<double> data,
                 std::vector<std::string> templates = {}, std::vector<std::string> class_names = {})
      : t_(num_templates),
        k_(num_classes),
        d_(dim),
        data_(std::move(data)),
        templates_(std::move(templates)),
        class_names_(std::move(class_names)) {
    if (t_ < 1) throw Error(ErrorCode::InvalidConfig, "features matrix needs at least one template");
    if (k_ < 2) throw Error(ErrorCode::TooFewClasses, "features matrix needs at least 2 classes");
    if (data_.size() != t_ * k_ * d_) throw Error(ErrorCode::DimensionMismatch, "features matrix data size");
    for (std::size_t p = 0; p < t_; ++p) {
      for (std::size_t k = 0; k < k_; ++k) {
        if (std::abs(norm(entry(p, k)) - 1.0) > kEntryNormSlack) {
          throw Error(ErrorCode::InvalidConfig, "features matrix entry is not unit-normalized");
        }
      }
    }
  }

  /// Features straight from a store's text block, renormalized in 64-bit.
  static FeaturesMatrix from_store(const EmbeddingStore& store) {
    const std::size_t t = store.num_templates();
    const std::size_t k = store.num_classes();
    std::vector<double> data;
    data.reserve(t * k * store.dim);
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        const Vec e = store.text_embedding(p, c);
        data.insert(data.end(), e.begin(), e.end());
      }
    }
    return FeaturesMatrix(t, k, store.dim, std::move(data), store.templates, store.class_names);
  }

  [[nodiscard]] std::size_t num_templates() const noexcept { return t_; }
  [[nodiscard]] std::size_t num_classes() const noexcept { return k_; }
  [[nodiscard]] std::size_t dim() const noexcept { return d_; }
  [[nodiscard]] const std::vector<std::string>& templates() const noexcept { return templates_; }
  [[nodiscard]] const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  [[nodiscard]] VecView entry(std::size_t p, std::size_t k) const {
    return {data_.data() + (p * k_ + k) * d_, d_};
  }

  /// Copy keeping only the listed class columns, in the listed order.
  [[nodiscard]] FeaturesMatrix restrict_classes(const std::vector<std::size_t>& classes) const {
    std::vector<double> data;
    data.reserve(t_ * classes.size() * d_);
    std::vector<std::string> names;
    for (std::size_t c : classes) {
      if (c >= k_) throw Error(ErrorCode::LabelOutOfRange, "class " + std::to_string(c));
      if (!class_names_.empty()) names.push_back(class_names_[c]);
    }
    for (std::size_t p = 0; p < t_; ++p) {
      for (std::size_t c : classes) {
        const VecView e = entry(p, c);
        data.insert(data.end(), e.begin(), e.end());
      }
    }
    return FeaturesMatrix(t_, classes.size(), d_, std::move(data), templates_, std::move(names));
  }

  /// normalize(mean over templates of column k).
  [[nodiscard]] Vec column_mean(std::size_t k) const {
    Vec acc(d_, 0.0);
    for (std::size_t p = 0; p < t_; ++p) axpy(1.0, entry(p, k), acc);
    for (double& x : acc) x /= static_cast<double>(t_);
    return l2_normalize(acc);
  }

  bool operator==(const FeaturesMatrix&) const = default;

 private:
  std::size_t t_;
  std::size_t k_;
  std::size_t d_;
  std::vector<double> data_;
  std::vector<std::string> templates_;
  std::vector<std::string> class_names_;
};

inline FeaturesMatrix build_features_matrix(const Encoder& encoder, const TemplateBank& bank,
                                            const ClassVocabulary& vocab) {
  if (vocab.size() < 2) throw Error(ErrorCode::TooFewClasses, "need at least 2 classes");
  const std::size_t d = encoder.dim();
  std::vector<double> data;
  data.reserve(bank.size() * vocab.size() * d);
  for (std::size_t p = 0; p < bank.size(); ++p) {
    for (std::size_t k = 0; k < vocab.size(); ++k) {
      const Vec e = l2_normalize(encoder.encode_text(render_prompt(bank[p], vocab[k])));
      if (e.size() != d) throw Error(ErrorCode::DimensionMismatch, "encoder output dimension");
      data.insert(data.end(), e.begin(), e.end());
    }
  }
  return FeaturesMatrix(bank.size(), vocab.size(), d, std::move(data), bank.patterns(), vocab.names());
}

/// Cosine of one adapted image feature against every features-matrix entry.
class ScoreMatrix {
 public:
  ScoreMatrix(std::size_t num_templates, std::size_t num_classes, std::vector<double> scores)
      : t_(num_templates), k_(num_classes), scores_(std::move(scores)) {
    if (scores_.size() != t_ * k_) throw Error(ErrorCode::DimensionMismatch, "score matrix size");
  }

  [[nodiscard]] std::size_t num_templates() const noexcept { return t_; }
  [[nodiscard]] std::size_t num_classes() const noexcept { return k_; }
  [[nodiscard]] double operator()(std::size_t p, std::size_t k) const { return scores_[p * k_ + k]; }
  [[nodiscard]] VecView values() const noexcept { return scores_; }

  bool operator==(const ScoreMatrix&) const = default;

 private:
  std::size_t t_;
  std::size_t k_;
  std::vector<double> scores_;
};

inline ScoreMatrix compute_score_matrix(const FeaturesMatrix& fm, VecView v_tun) {
  if (v_tun.size() != fm.dim()) throw Error(ErrorCode::DimensionMismatch, "v_tun dimension");
  std::vector<double> scores;
  scores.reserve(fm.num_templates() * fm.num_classes());
  for (std::size_t p = 0; p < fm.num_templates(); ++p) {
    for (std::size_t k = 0; k < fm.num_classes(); ++k) scores.push_back(cosine(fm.entry(p, k), v_tun));
  }
  return ScoreMatrix(fm.num_templates(), fm.num_classes(), std::move(scores));
}

struct FeatureIndex {
  std::size_t template_index = 0;
  std::size_t class_index = 0;

  auto operator<=>(const FeatureIndex&) const = default;
};

/// Hard positives (lowest-scoring label-column entries) and hard negatives
/// (highest-scoring entries of other classes), each listed in rank order.
struct UnexpectedSelection {
  std::size_t label = 0;
  std::vector<FeatureIndex> designated;
  std::vector<FeatureIndex> non_designated;

  bool operator==(const UnexpectedSelection&) const = default;
};

enum class NegativePool {
  Global,   // top-beta over every non-label (template, class) pair
  PerClass, // best template of each non-label class, then top-beta classes
};

inline void check_selection_args(std::size_t t, std::size_t k, std::size_t label, std::size_t beta,
                                 NegativePool pool) {
  if (label >= k) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " with K=" + std::to_string(k));
  }
  if (beta < 1) throw Error(ErrorCode::BetaTooSmall, "beta must be >= 1");
  if (beta > t) {
    throw Error(ErrorCode::BetaTooLarge, "beta " + std::to_string(beta) + " exceeds T=" + std::to_string(t));
  }
  const std::size_t pool_size = pool == NegativePool::Global ? t * (k - 1) : k - 1;
  if (beta > pool_size) {
    throw Error(ErrorCode::BetaTooLarge,
                "beta " + std::to_string(beta) + " exceeds negative pool of " + std::to_string(pool_size));
  }
}

inline UnexpectedSelection select_unexpected(const ScoreMatrix& scores, std::size_t label, std::size_t beta,
                                             NegativePool pool = NegativePool::Global) {
  const std::size_t t = scores.num_templates();
  const std::size_t k = scores.num_classes();
  check_selection_args(t, k, label, beta, pool);

  UnexpectedSelection sel;
  sel.label = label;

  // Low-beta of the label column; ties go to the smaller template.
  std::vector<std::size_t> rows(t);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(beta), rows.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores(a, label);
                      const double sb = scores(b, label);
                      return sa < sb || (sa == sb && a < b);
                    });
  sel.designated.reserve(beta);
  for (std::size_t i = 0; i < beta; ++i) sel.designated.push_back({rows[i], label});

  const auto higher = [&](const FeatureIndex& a, const FeatureIndex& b) {
    const double sa = scores(a.template_index, a.class_index);
    const double sb = scores(b.template_index, b.class_index);
    return sa > sb || (sa == sb && a < b);
  };

  std::vector<FeatureIndex> candidates;
  if (pool == NegativePool::Global) {
    candidates.reserve(t * (k - 1));
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t c = 0; c < k; ++c) {
        if (c != label) candidates.push_back({p, c});
      }
    }
  } else {
    candidates.reserve(k - 1);
    for (std::size_t c = 0; c < k; ++c) {
      if (c == label) continue;
      FeatureIndex best{0, c};
      for (std::size_t p = 1; p < t; ++p) {
        if (scores(p, c) > scores(best.template_index, c)) best.template_index = p;
      }
      candidates.push_back(best);
    }
  }
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(beta), candidates.end(),
                    higher);
  sel.non_designated.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(beta));
  return sel;
}

}  // namespace fm
