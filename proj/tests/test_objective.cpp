#include <cmath>
#include <cstring>
#include <memory>

#include "helpers.hpp"

using fm::Vec;

namespace {

// Entries (c, s cos phi, s sin phi) all have cosine c with v = e1.
fm::FeaturesMatrix cone_fm(std::size_t t, std::size_t k, double c) {
  const double s = std::sqrt(1.0 - c * c);
  std::vector<double> data;
  for (std::size_t e = 0; e < t * k; ++e) {
    const double phi = 0.7 * static_cast<double>(e);
    data.insert(data.end(), {c, s * std::cos(phi), s * std::sin(phi)});
  }
  return fm::FeaturesMatrix(t, k, 3, std::move(data));
}

// Direct evaluation of the per-anchor-mean contrastive loss.
double contrastive_oracle(const Vec& pos, const Vec& neg) {
  double total = 0.0;
  for (double s : pos) {
    double denom = std::exp(s);
    for (double n : neg) denom += std::exp(n);
    total += -std::log(std::exp(s) / denom);
  }
  return total / static_cast<double>(pos.size());
}

std::vector<Vec> random_text(std::uint64_t seed, std::size_t k, std::size_t d) {
  const fm::Stream s(seed, fm::Purpose::Instance, {k, d, 5});
  std::vector<Vec> out(k, Vec(d));
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < d; ++i) out[c][i] = s.gaussian(c * d + i);
  }
  return out;
}

}  // namespace

TEST(Contrastive, SymmetricSingleFeatureIsLn2) {
  const auto f = cone_fm(1, 2, 0.3);
  const auto sel = fm::select_unexpected(fm::compute_score_matrix(f, Vec{1, 0, 0}), 0, 1);
  EXPECT_NEAR(fm::contrastive_loss(f, sel, Vec{1, 0, 0}).loss, std::log(2.0), 1e-12);
}

TEST(Contrastive, AllTiedBetaFiveIsLn6) {
  const auto f = cone_fm(5, 2, -0.2);
  const auto sel = fm::select_unexpected(fm::compute_score_matrix(f, Vec{2, 0, 0}), 1, 5);
  EXPECT_NEAR(fm::contrastive_loss(f, sel, Vec{2, 0, 0}).loss, std::log(6.0), 1e-12);
}

TEST(Contrastive, ExtremeScoresMatchDirectEvaluation) {
  for (std::size_t beta = 1; beta <= 5; ++beta) {
    const Vec pos(beta, 1.0);
    const Vec neg(beta, -1.0);
    const double bound = -std::log(std::exp(1.0) / (std::exp(1.0) + static_cast<double>(beta) * std::exp(-1.0)));
    const double got = fm::contrastive_from_scores(pos, neg).loss;
    EXPECT_NEAR(got, bound, 1e-14);
    EXPECT_LE(got, bound + 1e-15);
  }
}

TEST(Contrastive, MatchesOracleAndIsPositive) {
  const fm::Stream s(12, fm::Purpose::Instance, {});
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t beta = 1 + trial % 5;
    Vec pos(beta), neg(beta);
    for (std::size_t i = 0; i < beta; ++i) {
      pos[i] = 2.0 * s.uniform(trial * 20 + i) - 1.0;
      neg[i] = 2.0 * s.uniform(trial * 20 + 10 + i) - 1.0;
    }
    const double got = fm::contrastive_from_scores(pos, neg).loss;
    EXPECT_NEAR(got, contrastive_oracle(pos, neg), 1e-13);
    EXPECT_GT(got, 0.0);
  }
}

TEST(Contrastive, MonotoneInEachScore) {
  const fm::Stream s(13, fm::Purpose::Instance, {});
  for (std::size_t trial = 0; trial < 100; ++trial) {
    Vec pos(3), neg(3);
    for (std::size_t i = 0; i < 3; ++i) {
      pos[i] = 1.8 * s.uniform(trial * 8 + i) - 0.9;
      neg[i] = 1.8 * s.uniform(trial * 8 + 4 + i) - 0.9;
    }
    const double base = fm::contrastive_from_scores(pos, neg).loss;
    for (std::size_t i = 0; i < 3; ++i) {
      for (double step : {-1e-3, 1e-3}) {
        Vec p = pos, n = neg;
        p[i] += step;
        n[i] += step;
        const double lp = fm::contrastive_from_scores(p, neg).loss;
        const double ln = fm::contrastive_from_scores(pos, n).loss;
        if (step > 0) {
          EXPECT_LT(lp, base);
          EXPECT_GT(ln, base);
        } else {
          EXPECT_GT(lp, base);
          EXPECT_LT(ln, base);
        }
      }
    }
  }
}

TEST(Contrastive, RejectsInconsistentSelection) {
  const auto f = cone_fm(2, 3, 0.1);
  fm::UnexpectedSelection bad{0, {{0, 1}}, {{0, 2}}};
  EXPECT_FM_ERROR(fm::contrastive_loss(f, bad, Vec{1, 0, 0}), fm::ErrorCode::InconsistentSelection);
  bad = {0, {{0, 0}}, {{0, 0}}};
  EXPECT_FM_ERROR(fm::contrastive_loss(f, bad, Vec{1, 0, 0}), fm::ErrorCode::InconsistentSelection);
  bad = {0, {{0, 0}, {1, 0}}, {{0, 2}}};
  EXPECT_FM_ERROR(fm::contrastive_loss(f, bad, Vec{1, 0, 0}), fm::ErrorCode::InconsistentSelection);
  const fm::UnexpectedSelection ok{0, {{0, 0}}, {{0, 2}}};
  EXPECT_FM_ERROR(fm::contrastive_loss(f, ok, Vec{0, 0, 0}), fm::ErrorCode::ZeroNorm);
}

TEST(CrossEntropy, IdenticalFeaturesGiveLnK) {
  for (std::size_t k : {2u, 5u, 10u}) {
    const std::vector<Vec> text(k, Vec{0.2, -0.4, 1.0});
    const auto r = fm::cross_entropy_loss(text, Vec{1.0, 2.0, 3.0}, k - 1, 0.01);
    EXPECT_NEAR(r.loss, std::log(static_cast<double>(k)), 1e-12);
    for (double g : r.grad_v) EXPECT_NEAR(g, 0.0, 1e-12);
  }
}

TEST(CrossEntropy, BinaryHandEvaluation) {
  const std::vector<Vec> text{{1.0, 0.0}, {-1.0, 0.0}};
  const auto r = fm::cross_entropy_loss(text, Vec{3.0, 0.0}, 0, 1.0);
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-2.0)), 1e-14);
}

TEST(CrossEntropy, SharpTemperatureLimit) {
  const std::vector<Vec> text{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_LT(fm::cross_entropy_loss(text, Vec{1, 0, 0}, 0, 0.01).loss, 1e-8);
}

TEST(CrossEntropy, TextScaleInvariance) {
  auto text = random_text(1, 4, 6);
  const Vec v{0.1, 0.2, -0.3, 0.4, 0.5, -0.6};
  const double base = fm::cross_entropy_loss(text, v, 2, 0.05).loss;
  for (double c : {0.01, 3.0, 250.0}) {
    auto scaled = text;
    for (auto& t : scaled) {
      for (double& x : t) x *= c;
    }
    EXPECT_NEAR(fm::cross_entropy_loss(scaled, v, 2, 0.05).loss, base, 1e-12);
  }
}

TEST(CrossEntropy, Errors) {
  const std::vector<Vec> text{{1, 0}, {0, 1}};
  EXPECT_FM_ERROR(fm::cross_entropy_loss(text, Vec{1, 0}, 2, 1.0), fm::ErrorCode::LabelOutOfRange);
  EXPECT_FM_ERROR(fm::cross_entropy_loss(text, Vec{1, 0}, 0, 0.0), fm::ErrorCode::InvalidTemperature);
  EXPECT_FM_ERROR(fm::cross_entropy_loss(text, Vec{1, 0, 0}, 0, 1.0), fm::ErrorCode::DimensionMismatch);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(fm::total_loss(1.0, 2.0, 0.1).total, 1.0 + 0.1 * 2.0);
  EXPECT_NEAR(fm::total_loss(1.0, 2.0, 0.1).total, 1.2, 1e-15);
  EXPECT_EQ(fm::total_loss(0.7, 5.0, 0.0).total, 0.7);
  EXPECT_EQ(fm::total_loss(0.7, 0.0, 1.0).total, 0.7);
  EXPECT_FM_ERROR(fm::total_loss(1.0, 1.0, -0.1), fm::ErrorCode::NegativeGamma);
}

TEST(TotalLoss, GradientCombination) {
  const Vec ce{0.1, -0.2, 0.3};
  const Vec cl{1e-3, 5.0, -7.0};
  const Vec zero = fm::combine_gradients(ce, cl, 0.0);
  EXPECT_EQ(std::memcmp(zero.data(), ce.data(), sizeof(double) * ce.size()), 0);
  const Vec g = fm::combine_gradients(ce, cl, 0.1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], ce[i] + 0.1 * cl[i], 1e-12);
}

TEST(FiniteDifference, RejectsBadEpsilon) {
  const auto f = [](fm::VecView x) { return x[0] * x[0]; };
  EXPECT_FM_ERROR(fm::finite_difference_check(f, Vec{1.0}, Vec{2.0}, 0.0), fm::ErrorCode::InvalidConfig);
  EXPECT_FM_ERROR(fm::finite_difference_check(f, Vec{1.0}, Vec{2.0}, 0.1), fm::ErrorCode::InvalidConfig);
}

TEST(FiniteDifference, ReportsWorstCoordinate) {
  const auto f = [](fm::VecView x) { return x[0] * x[0] + 3.0 * x[1]; };
  const auto r = fm::finite_difference_check(f, Vec{1.0, 1.0}, Vec{2.0, 3.3}, 1e-4);
  EXPECT_EQ(r.worst_index, 1u);
  EXPECT_NEAR(r.max_rel_error, 0.3 / 6.3, 1e-8);
}

// Instance shape T=6, K=5, D=16, beta=3; eps=1e-5.
class GradientRegime : public ::testing::Test {
 protected:
  void SetUp() override {
    fm_ = std::make_unique<fm::FeaturesMatrix>(fmtest::random_fm(40, 6, 5, 16));
    const fm::Stream s(40, fm::Purpose::Instance, {9});
    u_.resize(16);
    for (std::size_t i = 0; i < 16; ++i) u_[i] = 1.5 * s.gaussian(i);
    text_ = random_text(40, 5, 16);
  }
  std::unique_ptr<fm::FeaturesMatrix> fm_;
  Vec u_;
  std::vector<Vec> text_;
  static constexpr std::size_t kLabel = 2;
  static constexpr std::size_t kBeta = 3;
  static constexpr double kEps = 1e-5;
};

TEST_F(GradientRegime, Contrastive) {
  const auto sel = fm::select_unexpected(fm::compute_score_matrix(*fm_, fm::l2_normalize(u_)), kLabel, kBeta);
  const auto f = [&](fm::VecView u) { return fm::contrastive_loss(*fm_, sel, u).loss; };
  const auto r = fm::finite_difference_check(f, u_, fm::contrastive_loss(*fm_, sel, u_).grad_v, kEps);
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST_F(GradientRegime, CrossEntropyImageSide) {
  const auto f = [&](fm::VecView u) { return fm::cross_entropy_loss(text_, u, kLabel, 1.0).loss; };
  const auto r = fm::finite_difference_check(f, u_, fm::cross_entropy_loss(text_, u_, kLabel, 1.0).grad_v, kEps);
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST_F(GradientRegime, CrossEntropyTextSide) {
  const auto ce = fm::cross_entropy_loss(text_, u_, kLabel, 1.0);
  for (std::size_t c = 0; c < text_.size(); ++c) {
    const auto f = [&](fm::VecView t) {
      auto text = text_;
      text[c].assign(t.begin(), t.end());
      return fm::cross_entropy_loss(text, u_, kLabel, 1.0).loss;
    };
    EXPECT_LE(fm::finite_difference_check(f, text_[c], ce.grad_text[c], kEps).max_rel_error, 1e-5) << c;
  }
}

TEST_F(GradientRegime, TotalThroughAdapter) {
  fm::TrainConfig cfg;
  cfg.beta = kBeta;
  cfg.tau = 1.0;
  fm::AdapterState st = fm::AdapterState::initial(*fm_, fmtest::iota(5), 1.0);
  const fm::Stream s(40, fm::Purpose::Instance, {10});
  for (std::size_t i = 0; i < 256; ++i) st.visual.weight.data()[i] += 0.2 * s.gaussian(i);
  for (std::size_t i = 0; i < 16; ++i) st.visual.bias[i] = 0.2 * s.gaussian(300 + i);
  st.text_feats = text_;
  const std::vector<fm::Sample> batch{{kLabel, fm::l2_normalize(u_)}};
  const auto g = fm::batch_gradient(*fm_, st, batch, cfg);
  Vec analytic(g.grad_weight.data().begin(), g.grad_weight.data().end());
  analytic.insert(analytic.end(), g.grad_bias.begin(), g.grad_bias.end());
  for (const auto& t : g.grad_text) analytic.insert(analytic.end(), t.begin(), t.end());
  const auto frozen = g.selections;
  const auto f = [&](fm::VecView theta) {
    return fm::batch_gradient(*fm_, fm::unpack_parameters(st, theta), batch, cfg, &frozen).loss.total;
  };
  EXPECT_LE(fm::finite_difference_check(f, fm::pack_parameters(st), analytic, kEps).max_rel_error, 1e-5);
}

TEST(Gradcheck, CorruptionIsDetected) {
  const auto s = fm::run_gradcheck(0, 5, 1e-5, {}, true);
  EXPECT_GT(s.worst.contrastive, 1e-5);
  EXPECT_GT(s.worst.cross_entropy, 1e-5);
  EXPECT_GT(s.worst.total, 1e-5);
}

TEST(Gradcheck, InstancesRespectLimits) {
  for (std::size_t i = 0; i < 200; ++i) {
    const auto inst = fm::make_gradcheck_instance(0, i);
    EXPECT_LE(inst.fm.num_templates(), 10u);
    EXPECT_LE(inst.fm.num_classes(), 10u);
    EXPECT_GE(inst.fm.num_classes(), 2u);
    EXPECT_LE(inst.fm.dim(), 32u);
    EXPECT_LE(inst.config.beta, std::min<std::size_t>(5, inst.fm.num_templates()));
  }
}
