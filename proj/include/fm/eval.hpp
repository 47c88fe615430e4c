#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <thread>
#include <vector>

#include "fm/encoder.hpp"
#include "fm/error.hpp"
#include "fm/features_matrix.hpp"
#include "fm/prompt_bank.hpp"
#include "fm/trainer.hpp"
#include "fm/vecmath.hpp"

namespace fm {

enum class ClassifierKind { ZeroShotSingle, ZeroShotEnsemble, Tuned };

constexpr std::string_view to_string(ClassifierKind k) noexcept {
  switch (k) {
    case ClassifierKind::ZeroShotSingle: return "zero_shot_single";
    case ClassifierKind::ZeroShotEnsemble: return "zero_shot_ensemble";
    case ClassifierKind::Tuned: return "tuned";
  }
  return "unknown";
}

/// Cosine-softmax classifier over a subset of classes.
struct Classifier {
  std::vector<Vec> class_feats;    // unit-normalized
  std::vector<std::size_t> classes;  // global id of each row
  double tau = 0.01;
  ClassifierKind kind = ClassifierKind::ZeroShotEnsemble;
};

enum class ZeroShotMode { Single, Ensemble };

inline Classifier zero_shot_classifier(const FeaturesMatrix& fm, const std::vector<std::size_t>& classes,
                                       ZeroShotMode mode, double tau = 0.01) {
  if (classes.empty()) throw Error(ErrorCode::EmptyClassSet, "classifier needs at least one class");
  Classifier clf;
  clf.tau = tau;
  clf.classes = classes;
  clf.kind = mode == ZeroShotMode::Single ? ClassifierKind::ZeroShotSingle : ClassifierKind::ZeroShotEnsemble;
  for (std::size_t c : classes) {
    if (c >= fm.num_classes()) throw Error(ErrorCode::LabelOutOfRange, "class " + std::to_string(c));
    if (mode == ZeroShotMode::Single) {
      const VecView e = fm.entry(0, c);
      clf.class_feats.emplace_back(e.begin(), e.end());
    } else {
      clf.class_feats.push_back(fm.column_mean(c));
    }
  }
  return clf;
}

inline Classifier tuned_classifier(const AdapterState& st) {
  if (st.base_classes.empty()) throw Error(ErrorCode::EmptyClassSet, "adapter has no base classes");
  Classifier clf;
  clf.tau = st.tau;
  clf.classes = st.base_classes;
  clf.kind = ClassifierKind::Tuned;
  for (const auto& t : st.text_feats) clf.class_feats.push_back(l2_normalize(t));
  return clf;
}

struct Prediction {
  std::size_t label = 0;  // row index into the classifier, ties to the smaller row
  Vec probabilities;
};

inline Prediction predict(const Classifier& clf, VecView v) {
  Vec scores(clf.class_feats.size());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (clf.class_feats[c].size() != v.size()) throw Error(ErrorCode::DimensionMismatch, "predict");
    scores[c] = cosine(clf.class_feats[c], v);
  }
  Prediction p;
  p.label = argmax(scores);
  p.probabilities = softmax(scores, clf.tau);
  return p;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // aligned with the classifier's classes
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
};

/// Accuracy of `clf` on samples whose labels belong to its class set, after
/// mapping every image through `adapter`. Per-sample work may be split over
/// threads; counts are reduced in sample order.
inline EvalResult evaluate(const Classifier& clf, const VisualAdapter& adapter, const std::vector<Sample>& samples,
                           std::size_t threads = 1) {
  std::vector<std::size_t> row_of(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = std::find(clf.classes.begin(), clf.classes.end(), samples[i].label);
    if (it == clf.classes.end()) {
      throw Error(ErrorCode::SplitMismatch, "label " + std::to_string(samples[i].label) + " not in classifier");
    }
    row_of[i] = static_cast<std::size_t>(it - clf.classes.begin());
  }

  std::vector<unsigned char> hit(samples.size(), 0);
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      hit[i] = predict(clf, adapter.apply(samples[i].feature)).label == row_of[i] ? 1 : 0;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    work(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (samples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = std::min(samples.size(), t * chunk);
      const std::size_t e = std::min(samples.size(), b + chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  EvalResult r;
  std::vector<std::size_t> correct(clf.classes.size(), 0);
  std::vector<std::size_t> total(clf.classes.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ++total[row_of[i]];
    correct[row_of[i]] += hit[i];
    r.n_correct += hit[i];
  }
  r.n_total = samples.size();
  r.accuracy = r.n_total == 0 ? 0.0 : static_cast<double>(r.n_correct) / static_cast<double>(r.n_total);
  r.per_class_accuracy.resize(clf.classes.size());
  for (std::size_t c = 0; c < clf.classes.size(); ++c) {
    r.per_class_accuracy[c] = total[c] == 0 ? 0.0 : static_cast<double>(correct[c]) / static_cast<double>(total[c]);
  }
  return r;
}

/// 2ab / (a + b), with 0 when a + b == 0.
inline double harmonic_mean(double a, double b) {
  if (a < 0.0 || b < 0.0) throw Error(ErrorCode::NegativeInput, "harmonic mean of negative value");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

struct BaseToNovelResult {
  EvalResult base;
  EvalResult novel;
  double hm = 0.0;  // percentage
  ClassifierKind base_classifier = ClassifierKind::Tuned;
  ClassifierKind novel_classifier = ClassifierKind::ZeroShotEnsemble;
};

/// Novel classes are scored with the frozen ensemble; this overload never
/// sees learned text features.
inline EvalResult evaluate_novel(const VisualAdapter& visual, const FeaturesMatrix& fm,
                                 const std::vector<std::size_t>& novel, const std::vector<Sample>& samples,
                                 double tau, std::size_t threads = 1) {
  const Classifier clf = zero_shot_classifier(fm, novel, ZeroShotMode::Ensemble, tau);
  return evaluate(clf, visual, samples, threads);
}

inline std::vector<Sample> store_samples(const EmbeddingStore& store) {
  std::vector<Sample> out;
  out.reserve(store.num_images());
  for (std::size_t i = 0; i < store.num_images(); ++i) out.push_back({store.labels[i], store.image_embedding(i)});
  return out;
}

/// Base accuracy with the tuned classifier over base classes, novel accuracy
/// with the frozen ensemble over novel classes, both through the adapter.
inline BaseToNovelResult evaluate_base_to_novel(const AdapterState& adapter, const FeaturesMatrix& fm,
                                                const EmbeddingStore& test, const BaseNovelSplit& split,
                                                std::size_t threads = 1) {
  if (test.num_classes() != fm.num_classes()) {
    throw Error(ErrorCode::SplitMismatch, "test store and features matrix disagree on class count");
  }
  std::vector<std::size_t> base = adapter.base_classes;
  std::sort(base.begin(), base.end());
  if (base != split.base) throw Error(ErrorCode::SplitMismatch, "adapter was trained on a different base split");

  std::vector<Sample> base_samples;
  std::vector<Sample> novel_samples;
  const auto in = [](const std::vector<std::size_t>& v, std::size_t x) {
    return std::binary_search(v.begin(), v.end(), x);
  };
  for (auto& s : store_samples(test)) {
    if (in(split.base, s.label)) {
      base_samples.push_back(std::move(s));
    } else if (in(split.novel, s.label)) {
      novel_samples.push_back(std::move(s));
    } else {
      throw Error(ErrorCode::SplitMismatch, "test label " + std::to_string(s.label) + " not covered by split");
    }
  }

  BaseToNovelResult r;
  r.base = evaluate(tuned_classifier(adapter), adapter.visual, base_samples, threads);
  r.novel = evaluate_novel(adapter.visual, fm, split.novel, novel_samples, adapter.tau, threads);
  r.hm = harmonic_mean(100.0 * r.base.accuracy, 100.0 * r.novel.accuracy);
  return r;
}

}  // namespace fm
