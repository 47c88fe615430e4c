#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fm/encoder.hpp"
#include "fm/error.hpp"
#include "fm/features_matrix.hpp"
#include "fm/objective.hpp"
#include "fm/rng.hpp"
#include "fm/vecmath.hpp"

namespace fm {

/// One labeled image feature. Labels are global class indices.
struct Sample {
  std::size_t label = 0;
  Vec feature;
};

/// Linear residual stand-in for visual prompt tuning: u = W x + b.
struct VisualAdapter {
  Matrix weight;
  Vec bias;

  static VisualAdapter identity(std::size_t dim) { return {Matrix::identity(dim), Vec(dim, 0.0)}; }

  [[nodiscard]] std::size_t dim() const noexcept { return bias.size(); }

  [[nodiscard]] Vec apply(VecView x) const {
    Vec u = weight.multiply(x);
    axpy(1.0, bias, u);
    return u;
  }

  bool operator==(const VisualAdapter&) const = default;
};

/// Learnable parameters: the visual adapter plus one text feature per base class.
struct AdapterState {
  VisualAdapter visual;
  std::vector<Vec> text_feats;            // indexed like base_classes
  std::vector<std::size_t> base_classes;  // global class ids
  double tau = 0.01;

  /// W = I, b = 0, text features = normalized template means of each base column.
  static AdapterState initial(const FeaturesMatrix& fm, const std::vector<std::size_t>& base_classes, double tau) {
    AdapterState st;
    st.visual = VisualAdapter::identity(fm.dim());
    st.base_classes = base_classes;
    st.tau = tau;
    st.text_feats.reserve(base_classes.size());
    for (std::size_t c : base_classes) {
      if (c >= fm.num_classes()) throw Error(ErrorCode::LabelOutOfRange, "base class " + std::to_string(c));
      st.text_feats.push_back(fm.column_mean(c));
    }
    return st;
  }

  [[nodiscard]] bool all_finite() const {
    if (!fm::all_finite(visual.weight.data()) || !fm::all_finite(visual.bias)) return false;
    return std::all_of(text_feats.begin(), text_feats.end(), [](const Vec& t) { return fm::all_finite(t); });
  }

  bool operator==(const AdapterState&) const = default;
};

struct TrainConfig {
  double gamma = 0.1;
  std::size_t beta = 5;
  double tau = 0.01;
  double lr = 0.0025;
  std::size_t epochs = 30;
  std::size_t shots = 16;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  bool negatives_per_class = false;

  [[nodiscard]] NegativePool pool() const noexcept {
    return negatives_per_class ? NegativePool::PerClass : NegativePool::Global;
  }

  void validate() const {
    // lr == 0 is accepted as a no-op optimizer.
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "lr must be finite and >= 0");
    if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
    if (shots < 1) throw Error(ErrorCode::InvalidConfig, "shots must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau must be positive");
    if (!(gamma >= 0.0)) throw Error(ErrorCode::NegativeGamma, "gamma must be >= 0");
    if (beta < 1) throw Error(ErrorCode::BetaTooSmall, "beta must be >= 1");
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "gamma=" << gamma << " beta=" << beta << " tau=" << tau << " lr=" << lr << " epochs=" << epochs
       << " shots=" << shots << " batch_size=" << batch_size << " seed=" << seed
       << " negatives_per_class=" << (negatives_per_class ? "true" : "false");
    return os.str();
  }
};

struct FewShotSet {
  std::vector<std::size_t> image_indices;  // into the store, grouped by class
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

/// Up to `shots` images from each base class, chosen by a seeded permutation.
inline FewShotSet sample_few_shot(const EmbeddingStore& store, const std::vector<std::size_t>& base_classes,
                                  std::size_t shots, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < store.num_images(); ++i) by_class[store.labels[i]].push_back(i);

  FewShotSet out;
  for (std::size_t c : base_classes) {
    const auto it = by_class.find(c);
    if (it == by_class.end() || it->second.empty()) {
      throw Error(ErrorCode::EmptyClass, "base class " + std::to_string(c) + " has no images");
    }
    const auto& pool = it->second;
    std::vector<std::size_t> chosen;
    if (pool.size() <= shots) {
      chosen = pool;
      if (pool.size() < shots) {
        out.warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                               " images, fewer than " + std::to_string(shots) + " shots");
      }
    } else {
      const auto perm = permutation(pool.size(), Stream(seed, Purpose::FewShot, {c}));
      for (std::size_t j = 0; j < shots; ++j) chosen.push_back(pool[perm[j]]);
      std::sort(chosen.begin(), chosen.end());
    }
    for (std::size_t i : chosen) {
      out.image_indices.push_back(i);
      out.samples.push_back({c, store.image_embedding(i)});
    }
  }
  return out;
}

/// Mean losses and parameter gradients over a batch.
struct BatchGradient {
  LossBreakdown loss;
  std::size_t correct = 0;
  Matrix grad_weight;
  Vec grad_bias;
  std::vector<Vec> grad_text;
  std::vector<UnexpectedSelection> selections;
};

namespace detail {

inline std::vector<std::size_t> local_labels(const AdapterState& st, std::span<const Sample> batch) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    const auto it = std::find(st.base_classes.begin(), st.base_classes.end(), s.label);
    if (it == st.base_classes.end()) {
      throw Error(ErrorCode::LabelOutOfRange, "sample label " + std::to_string(s.label) + " is not a base class");
    }
    out.push_back(static_cast<std::size_t>(it - st.base_classes.begin()));
  }
  return out;
}

}  // namespace detail

/// Forward and backward pass of the total objective over one batch.
/// `base_fm` holds only the base-class columns, in base_classes order.
/// When `frozen` is given those selections are reused instead of
/// recomputing the unexpected features from the current scores.
inline BatchGradient batch_gradient(const FeaturesMatrix& base_fm, const AdapterState& st,
                                    std::span<const Sample> batch, const TrainConfig& cfg,
                                    const std::vector<UnexpectedSelection>* frozen = nullptr) {
  if (batch.empty()) throw Error(ErrorCode::InvalidConfig, "empty batch");
  const std::size_t d = st.visual.dim();
  const auto labels = detail::local_labels(st, batch);

  BatchGradient g;
  g.grad_weight = Matrix(d, d);
  g.grad_bias.assign(d, 0.0);
  g.grad_text.assign(st.text_feats.size(), Vec(d, 0.0));
  double ce_sum = 0.0;
  double cl_sum = 0.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const VecView x = batch[i].feature;
    const Vec u = st.visual.apply(x);
    const auto ce = cross_entropy_loss(st.text_feats, u, labels[i], cfg.tau);
    if (argmax(ce.probabilities) == labels[i]) ++g.correct;

    UnexpectedSelection sel;
    if (frozen != nullptr) {
      sel = frozen->at(i);
    } else {
      const ScoreMatrix scores = compute_score_matrix(base_fm, l2_normalize(u));
      sel = select_unexpected(scores, labels[i], cfg.beta, cfg.pool());
    }
    const auto cl = contrastive_loss(base_fm, sel, u);
    g.selections.push_back(std::move(sel));

    ce_sum += ce.loss;
    cl_sum += cl.loss;
    const Vec grad_u = combine_gradients(ce.grad_v, cl.grad_v, cfg.gamma);
    for (std::size_t r = 0; r < d; ++r) {
      auto row = g.grad_weight.row(r);
      for (std::size_t c = 0; c < d; ++c) row[c] += grad_u[r] * x[c];
      g.grad_bias[r] += grad_u[r];
    }
    for (std::size_t c = 0; c < g.grad_text.size(); ++c) axpy(1.0, ce.grad_text[c], g.grad_text[c]);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& w : g.grad_weight.data()) w *= inv_n;
  for (double& b : g.grad_bias) b *= inv_n;
  for (auto& t : g.grad_text) {
    for (double& x : t) x *= inv_n;
  }
  g.loss = total_loss(ce_sum * inv_n, cl_sum * inv_n, cfg.gamma);
  return g;
}

/// Plain SGD step; text features are renormalized afterwards.
inline void sgd_update(AdapterState& st, const BatchGradient& g, double lr) {
  auto w = st.visual.weight.data();
  const auto gw = g.grad_weight.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
  for (std::size_t i = 0; i < st.visual.bias.size(); ++i) st.visual.bias[i] -= lr * g.grad_bias[i];
  for (std::size_t c = 0; c < st.text_feats.size(); ++c) {
    auto& t = st.text_feats[c];
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= lr * g.grad_text[c][i];
    if (fm::all_finite(t)) t = l2_normalize(t);
  }
}

/// Epoch-level shuffle order.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  return permutation(n, Stream(seed, Purpose::Shuffle, {epoch}));
}

struct EpochRecord {
  std::size_t epoch = 0;
  double ce = 0.0;
  double cl = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;
};

struct TrainReport {
  TrainConfig config;
  LossBreakdown initial;  // mean losses over the training set before any step
  std::vector<EpochRecord> epochs;
  AdapterState final_state;
  std::vector<std::string> warnings;
};

namespace detail {

[[noreturn]] inline void non_finite(std::size_t step, const LossBreakdown& l, const char* what) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at step " << step << " (ce=" << l.ce << " cl=" << l.cl << " total=" << l.total << ")";
  throw Error(ErrorCode::NonFiniteLoss, os.str());
}

}  // namespace detail

/// Mini-batch SGD on ce + gamma * cl with selection recomputed every step.
/// `fm` spans all classes; only the base columns take part in training.
inline TrainReport train(const FeaturesMatrix& fm, const std::vector<std::size_t>& base_classes,
                         const std::vector<Sample>& trainset, const TrainConfig& cfg) {
  cfg.validate();
  if (trainset.empty()) throw Error(ErrorCode::InvalidConfig, "empty training set");
  if (base_classes.size() < 2) throw Error(ErrorCode::TooFewClasses, "need at least 2 base classes");
  const FeaturesMatrix base_fm = fm.restrict_classes(base_classes);
  check_selection_args(base_fm.num_templates(), base_fm.num_classes(), 0, cfg.beta, cfg.pool());

  TrainReport report;
  report.config = cfg;
  AdapterState st = AdapterState::initial(fm, base_classes, cfg.tau);
  report.initial = batch_gradient(base_fm, st, trainset, cfg).loss;

  const std::size_t n = trainset.size();
  std::size_t step = 0;
  std::vector<Sample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch);
    double ce = 0.0;
    double cl = 0.0;
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      batch.clear();
      for (std::size_t j = start; j < end; ++j) batch.push_back(trainset[order[j]]);
      BatchGradient g;
      try {
        g = batch_gradient(base_fm, st, batch, cfg);
      } catch (const Error& e) {
        // Overflowing parameters surface as a degenerate feature norm.
        if (step == 0 || e.code() != ErrorCode::ZeroNorm) throw;
        throw Error(ErrorCode::NonFiniteLoss, "diverged at step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(g.loss.total) || !std::isfinite(g.loss.ce) || !std::isfinite(g.loss.cl)) {
        detail::non_finite(step, g.loss, "non-finite loss");
      }
      const double weight = static_cast<double>(end - start);
      ce += g.loss.ce * weight;
      cl += g.loss.cl * weight;
      total += g.loss.total * weight;
      correct += g.correct;
      sgd_update(st, g, cfg.lr);
      if (!st.all_finite()) detail::non_finite(step, g.loss, "non-finite parameters");
      ++step;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    report.epochs.push_back({epoch, ce * inv_n, cl * inv_n, total * inv_n,
                             static_cast<double>(correct) * inv_n});
  }
  report.final_state = std::move(st);
  return report;
}

}  // namespace fm
