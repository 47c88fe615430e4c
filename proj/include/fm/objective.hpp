#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <vector>

#include "fm/error.hpp"
#include "fm/features_matrix.hpp"
#include "fm/vecmath.hpp"

namespace fm {

// All losses take the adapted image feature as given (not necessarily unit)
// and return gradients with respect to that raw input, so the normalization
// v = u / |u| is part of the differentiated expression.

struct ContrastiveResult {
  double loss = 0.0;
  Vec grad_v;
};

/// Loss and score-space gradients of the contrastive term given the cosines
/// of the designated anchors and non-designated negatives.
struct ContrastiveScores {
  double loss = 0.0;
  Vec grad_designated;
  Vec grad_non_designated;
};

/// Mean over anchors i of -log(e^{s_i} / (e^{s_i} + sum_j e^{n_j})).
inline ContrastiveScores contrastive_from_scores(VecView designated, VecView negatives) {
  if (designated.empty() || negatives.empty()) {
    throw Error(ErrorCode::InconsistentSelection, "contrastive loss needs anchors and negatives");
  }
  ContrastiveScores out;
  out.grad_designated.assign(designated.size(), 0.0);
  out.grad_non_designated.assign(negatives.size(), 0.0);
  const double inv_beta = 1.0 / static_cast<double>(designated.size());

  Vec logits(negatives.size() + 1);
  std::copy(negatives.begin(), negatives.end(), logits.begin() + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < designated.size(); ++i) {
    logits[0] = designated[i];
    const double lse = log_sum_exp(logits);
    total += lse - designated[i];
    // d/ds_i = p_i - 1, d/dn_j = p_j, with p = softmax(logits).
    out.grad_designated[i] = (std::exp(designated[i] - lse) - 1.0) * inv_beta;
    for (std::size_t j = 0; j < negatives.size(); ++j) {
      out.grad_non_designated[j] += std::exp(negatives[j] - lse) * inv_beta;
    }
  }
  out.loss = total * inv_beta;
  return out;
}

inline void check_selection(const FeaturesMatrix& fm, const UnexpectedSelection& sel) {
  const auto fail = [](const std::string& why) { throw Error(ErrorCode::InconsistentSelection, why); };
  if (sel.label >= fm.num_classes()) fail("label out of range");
  if (sel.designated.empty() || sel.designated.size() != sel.non_designated.size()) {
    fail("designated and non-designated sets must both have beta entries");
  }
  std::set<FeatureIndex> seen;
  for (const auto& f : sel.designated) {
    if (f.class_index != sel.label) fail("designated feature outside the label column");
    if (f.template_index >= fm.num_templates()) fail("template index out of range");
    if (!seen.insert(f).second) fail("duplicate designated feature");
  }
  for (const auto& f : sel.non_designated) {
    if (f.class_index == sel.label) fail("non-designated feature inside the label column");
    if (f.class_index >= fm.num_classes() || f.template_index >= fm.num_templates()) fail("index out of range");
    if (!seen.insert(f).second) fail("duplicate non-designated feature");
  }
}

/// Contrastive loss over the selected unexpected features. The features
/// matrix is frozen, so only the image side receives a gradient.
inline ContrastiveResult contrastive_loss(const FeaturesMatrix& fm, const UnexpectedSelection& sel, VecView v) {
  check_selection(fm, sel);
  if (v.size() != fm.dim()) throw Error(ErrorCode::DimensionMismatch, "image feature dimension");
  const double nv = norm(v);
  if (!(nv > kZeroNormThreshold)) throw Error(ErrorCode::ZeroNorm, "image feature");

  const auto cos_of = [&](const FeatureIndex& f) {
    return std::clamp(dot(fm.entry(f.template_index, f.class_index), v) / nv, -1.0, 1.0);
  };
  Vec pos(sel.designated.size());
  Vec neg(sel.non_designated.size());
  std::transform(sel.designated.begin(), sel.designated.end(), pos.begin(), cos_of);
  std::transform(sel.non_designated.begin(), sel.non_designated.end(), neg.begin(), cos_of);
  const ContrastiveScores cs = contrastive_from_scores(pos, neg);

  // d cos(t, v) / dv = (t - cos * v^) / |v| for unit t.
  Vec acc(fm.dim(), 0.0);
  double radial = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const auto& f = sel.designated[i];
    axpy(cs.grad_designated[i], fm.entry(f.template_index, f.class_index), acc);
    radial += cs.grad_designated[i] * dot(fm.entry(f.template_index, f.class_index), v) / nv;
  }
  for (std::size_t j = 0; j < neg.size(); ++j) {
    const auto& f = sel.non_designated[j];
    axpy(cs.grad_non_designated[j], fm.entry(f.template_index, f.class_index), acc);
    radial += cs.grad_non_designated[j] * dot(fm.entry(f.template_index, f.class_index), v) / nv;
  }
  ContrastiveResult out;
  out.loss = cs.loss;
  out.grad_v.resize(fm.dim());
  for (std::size_t d = 0; d < fm.dim(); ++d) out.grad_v[d] = (acc[d] - radial * v[d] / nv) / nv;
  return out;
}

struct CrossEntropyResult {
  double loss = 0.0;
  Vec grad_v;
  std::vector<Vec> grad_text;
  Vec probabilities;
};

/// -log softmax(cos(t_k, v) / tau)[label], with gradients through the
/// normalization of both the image feature and every class feature.
inline CrossEntropyResult cross_entropy_loss(std::span<const Vec> text_feats, VecView v, std::size_t label,
                                             double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidTemperature, "tau must be positive");
  const std::size_t k = text_feats.size();
  if (label >= k) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label));

  Vec logits(k);
  for (std::size_t c = 0; c < k; ++c) logits[c] = cosine(text_feats[c], v) / tau;
  const double lse = log_sum_exp(logits);

  CrossEntropyResult out;
  out.loss = lse - logits[label];
  out.probabilities.resize(k);
  out.grad_v.assign(v.size(), 0.0);
  out.grad_text.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.probabilities[c] = std::exp(logits[c] - lse);
    const double dcos = (out.probabilities[c] - (c == label ? 1.0 : 0.0)) / tau;
    axpy(dcos, cosine_grad_a(v, text_feats[c]), out.grad_v);
    out.grad_text[c] = cosine_grad_a(text_feats[c], v);
    for (double& g : out.grad_text[c]) g *= dcos;
  }
  return out;
}

struct LossBreakdown {
  double ce = 0.0;
  double cl = 0.0;
  double total = 0.0;
  double gamma = 0.0;
};

inline LossBreakdown total_loss(double ce, double cl, double gamma) {
  if (gamma < 0.0) throw Error(ErrorCode::NegativeGamma, "gamma must be >= 0");
  return {ce, cl, ce + gamma * cl, gamma};
}

/// ce_grad + gamma * cl_grad; with gamma == 0 the CE gradient is returned unchanged.
inline Vec combine_gradients(VecView ce_grad, VecView cl_grad, double gamma) {
  if (gamma < 0.0) throw Error(ErrorCode::NegativeGamma, "gamma must be >= 0");
  Vec out(ce_grad.begin(), ce_grad.end());
  if (gamma == 0.0) return out;
  check_same_dim(ce_grad, cl_grad);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gamma * cl_grad[i];
  return out;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares an analytic gradient against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps), coordinate by coordinate,
/// using |a - n| / max(1e-8, |a| + |n|).
template <typename F>
GradientCheck finite_difference_check(F&& f, VecView point, VecView analytic, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw Error(ErrorCode::InvalidConfig, "epsilon must lie in (0, 1e-2]");
  check_same_dim(point, analytic);
  GradientCheck report;
  Vec x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(VecView(x));
    x[i] = orig - eps;
    const double fm_ = f(VecView(x));
    x[i] = orig;
    const double numeric = (fp - fm_) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (i == 0 || err > report.max_rel_error) report = {err, i, a, numeric};
  }
  return report;
}

}  // namespace fm
