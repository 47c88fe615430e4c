#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "fm/features_matrix.hpp"
#include "fm/objective.hpp"
#include "fm/rng.hpp"
#include "fm/trainer.hpp"
#include "fm/vecmath.hpp"

namespace fm {

/// Random problem used to verify analytic gradients.
struct GradcheckInstance {
  FeaturesMatrix fm;       // every column is a "base" class here
  AdapterState state;      // non-identity adapter, non-unit text features
  std::vector<Sample> batch;
  TrainConfig config;
};

struct GradcheckLimits {
  std::size_t max_templates = 10;
  std::size_t max_classes = 10;
  std::size_t max_dim = 32;
  std::size_t max_beta = 5;
  double tau = 1.0;
  double gamma = 0.1;
};

namespace detail {

inline Vec gaussian_vec(const Stream& s, std::size_t first, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = scale * s.gaussian(first + i);
  return v;
}

inline std::size_t uniform_in(const Stream& s, std::size_t slot, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(s.below(hi - lo + 1, slot));
}

}  // namespace detail

inline GradcheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t index,
                                                 const GradcheckLimits& lim = {}) {
  const Stream s(seed, Purpose::Instance, {index});
  const std::size_t k = detail::uniform_in(s, 0, 2, lim.max_classes);
  const std::size_t t = detail::uniform_in(s, 1, 1, lim.max_templates);
  const std::size_t d = detail::uniform_in(s, 2, 2, lim.max_dim);
  const std::size_t beta = detail::uniform_in(s, 3, 1, std::min({lim.max_beta, t, t * (k - 1)}));
  const std::size_t n = detail::uniform_in(s, 4, 1, 3);

  std::size_t cursor = 1000;
  const auto draw = [&](std::size_t len, double scale) {
    Vec v = detail::gaussian_vec(s, cursor, len, scale);
    cursor += len;
    return v;
  };

  std::vector<double> data;
  for (std::size_t e = 0; e < t * k; ++e) {
    const Vec v = l2_normalize(draw(d, 1.0));
    data.insert(data.end(), v.begin(), v.end());
  }
  FeaturesMatrix fm(t, k, d, std::move(data));

  std::vector<std::size_t> classes(k);
  for (std::size_t c = 0; c < k; ++c) classes[c] = c;
  AdapterState st;
  st.base_classes = classes;
  st.tau = lim.tau;
  st.visual.weight = Matrix::identity(d);
  const Vec noise = draw(d * d, 0.2);
  for (std::size_t i = 0; i < d * d; ++i) st.visual.weight.data()[i] += noise[i];
  st.visual.bias = draw(d, 0.2);
  for (std::size_t c = 0; c < k; ++c) st.text_feats.push_back(draw(d, 1.0));

  std::vector<Sample> batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back({s.below(k, 10 + i), l2_normalize(draw(d, 1.0))});
  }

  TrainConfig cfg;
  cfg.beta = beta;
  cfg.tau = lim.tau;
  cfg.gamma = lim.gamma;
  return {std::move(fm), std::move(st), std::move(batch), cfg};
}

struct GradcheckErrors {
  double contrastive = 0.0;
  double cross_entropy = 0.0;
  double total = 0.0;
};

/// Flattened (W, b, text features) parameter vector of an adapter.
inline Vec pack_parameters(const AdapterState& st) {
  Vec theta(st.visual.weight.data().begin(), st.visual.weight.data().end());
  theta.insert(theta.end(), st.visual.bias.begin(), st.visual.bias.end());
  for (const auto& t : st.text_feats) theta.insert(theta.end(), t.begin(), t.end());
  return theta;
}

inline AdapterState unpack_parameters(const AdapterState& like, VecView theta) {
  AdapterState st = like;
  std::size_t at = 0;
  for (double& w : st.visual.weight.data()) w = theta[at++];
  for (double& b : st.visual.bias) b = theta[at++];
  for (auto& t : st.text_feats) {
    for (double& x : t) x = theta[at++];
  }
  return st;
}

/// Checks the three analytic gradients of one instance. `corrupt` adds a
/// deliberate error to every analytic gradient (negative control).
inline GradcheckErrors check_instance(const GradcheckInstance& inst, double eps, bool corrupt = false) {
  GradcheckErrors out;
  const auto spoil = [&](Vec& g) {
    if (corrupt && !g.empty()) g[0] += 1e-3 * std::max(1.0, std::abs(g[0]));
  };
  const Sample& first = inst.batch.front();
  const std::size_t label = first.label;
  const Vec u0 = inst.state.visual.apply(first.feature);

  // Contrastive term on the raw adapted feature, selection frozen at u0.
  {
    const ScoreMatrix scores = compute_score_matrix(inst.fm, l2_normalize(u0));
    const UnexpectedSelection sel = select_unexpected(scores, label, inst.config.beta, inst.config.pool());
    Vec g = contrastive_loss(inst.fm, sel, u0).grad_v;
    spoil(g);
    const auto f = [&](VecView u) { return contrastive_loss(inst.fm, sel, u).loss; };
    out.contrastive = finite_difference_check(f, u0, g, eps).max_rel_error;
  }

  // Cross-entropy with respect to the image feature and every text feature.
  {
    const std::size_t d = u0.size();
    Vec x = u0;
    for (const auto& t : inst.state.text_feats) x.insert(x.end(), t.begin(), t.end());
    const auto split = [&](VecView z, Vec& u, std::vector<Vec>& text) {
      u.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
      text.assign(inst.state.text_feats.size(), Vec(d));
      for (std::size_t c = 0; c < text.size(); ++c) {
        std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(d * (c + 1)), d, text[c].begin());
      }
    };
    const auto ce = cross_entropy_loss(inst.state.text_feats, u0, label, inst.config.tau);
    Vec g = ce.grad_v;
    for (const auto& gt : ce.grad_text) g.insert(g.end(), gt.begin(), gt.end());
    spoil(g);
    const auto f = [&](VecView z) {
      Vec u;
      std::vector<Vec> text;
      split(z, u, text);
      return cross_entropy_loss(text, u, label, inst.config.tau).loss;
    };
    out.cross_entropy = finite_difference_check(f, x, g, eps).max_rel_error;
  }

  // Total objective through the adapter and normalization, over the batch.
  {
    const BatchGradient bg = batch_gradient(inst.fm, inst.state, inst.batch, inst.config);
    const auto frozen = bg.selections;
    Vec g(bg.grad_weight.data().begin(), bg.grad_weight.data().end());
    g.insert(g.end(), bg.grad_bias.begin(), bg.grad_bias.end());
    for (const auto& gt : bg.grad_text) g.insert(g.end(), gt.begin(), gt.end());
    spoil(g);
    const auto f = [&](VecView theta) {
      const AdapterState st = unpack_parameters(inst.state, theta);
      return batch_gradient(inst.fm, st, inst.batch, inst.config, &frozen).loss.total;
    };
    out.total = finite_difference_check(f, pack_parameters(inst.state), g, eps).max_rel_error;
  }
  return out;
}

struct GradcheckSummary {
  double eps = 0.0;
  std::size_t instances = 0;
  GradcheckErrors worst;
};

inline GradcheckSummary run_gradcheck(std::uint64_t seed, std::size_t instances, double eps,
                                      const GradcheckLimits& lim = {}, bool corrupt = false) {
  GradcheckSummary s;
  s.eps = eps;
  s.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    const GradcheckErrors e = check_instance(make_gradcheck_instance(seed, i, lim), eps, corrupt);
    s.worst.contrastive = std::max(s.worst.contrastive, e.contrastive);
    s.worst.cross_entropy = std::max(s.worst.cross_entropy, e.cross_entropy);
    s.worst.total = std::max(s.worst.total, e.total);
  }
  return s;
}

}  // namespace fm
