#include "dfcurate/probe.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dfcurate/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace dfcurate {
namespace {

using testing::store_from_rows;
using testing::pool_of;

// Grid oracle over [-20,20]^2 refined to 1e-9; cross-checked against an
// independent BFGS run (3.3187216428191766).
constexpr double kSixPointObjective = 3.318721642819177;
constexpr double kSixPointW = 1.00439118;
constexpr double kSixPointB = -0.17330934;

LabeledDataset six_point_pool() {
  return pool_of(store_from_rows("D", {{0.2f}, {0.9f}, {1.1f}, {-0.3f}, {-1.0f}, {0.1f}},
                                 {Label::kSpoof, Label::kSpoof, Label::kSpoof, Label::kBonafide,
                                  Label::kBonafide, Label::kBonafide}));
}

TrainOptions with_c(double c) {
  TrainOptions o;
  o.C = c;
  return o;
}

TEST(Probe, SymmetricPairHasZeroBias) {
  const auto pool = pool_of(store_from_rows("D", {{1.f}, {-1.f}}, {Label::kSpoof, Label::kBonafide}));
  const ProbeModel m = train(pool);
  EXPECT_LE(std::abs(m.b), 1e-6);
  EXPECT_GT(m.w[0], 0.0);
  const std::vector<float> plus = {1.f}, minus = {-1.f};
  EXPECT_NEAR(decision(m, plus), -decision(m, minus), 1e-6);
}

TEST(Probe, SixPointMatchesGridOracle) {
  const ProbeModel m = train(six_point_pool(), with_c(1.0));
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.objective, kSixPointObjective, 1e-6);
  EXPECT_NEAR(m.w[0], kSixPointW, 1e-4);
  EXPECT_NEAR(m.b, kSixPointB, 1e-4);
}

TEST(Probe, OracleHelperAgreesWithFrozenValue) {
  const std::vector<double> x = {0.2, 0.9, 1.1, -0.3, -1.0, 0.1};
  const std::vector<int> s = {1, 1, 1, -1, -1, -1};
  EXPECT_NEAR(oracle::logistic_1d(kSixPointW, kSixPointB, x, s, 1.0), kSixPointObjective, 1e-12);
}

TEST(Probe, DecisionExamples) {
  ProbeModel m;
  m.w = {1.0, 0.0};
  const std::vector<float> x = {2.f, 5.f};
  EXPECT_DOUBLE_EQ(decision(m, x), 2.0);
  m.w = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(decision(m, x), 0.0);
  const std::vector<float> wrong = {1.f};
  EXPECT_THROW(decision(m, wrong), Error);
}

TEST(Probe, SingleClassAndEmptyRejected) {
  const auto pool = pool_of(store_from_rows("D", {{1.f}, {2.f}}, {Label::kSpoof, Label::kSpoof}));
  try {
    train(pool);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleClass);
  }
  EXPECT_THROW(train(LabeledDataset{}), Error);
}

TEST(Probe, InvalidOptionsRejected) {
  const auto pool = six_point_pool();
  TrainOptions o;
  o.C = 0;
  EXPECT_THROW(train(pool, o), Error);
  o = {};
  o.tol = -1;
  EXPECT_THROW(train(pool, o), Error);
  o = {};
  o.max_iter = 0;
  EXPECT_THROW(train(pool, o), Error);
}

TEST(Probe, ZeroModelBalancedPoolHasZeroBiasGradient) {
  testing::GaussianSpec spec;
  spec.n = 40;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  ProbeModel zero;
  zero.w.assign(pool.dim(), 0.0);
  const LossAndGrad lg = loss_and_grad(zero, pool);
  EXPECT_DOUBLE_EQ(lg.grad.back(), 0.0);
  EXPECT_NEAR(lg.loss, 40 * std::log(2.0), 1e-12);
}

TEST(Probe, GradientMatchesCentralDifferences) {
  testing::GaussianSpec spec;
  spec.n = 60;
  spec.dim = 5;
  spec.flip_fraction = 0.2;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (bool pen : {false, true}) {
    TrainOptions o = with_c(2.5);
    o.penalize_bias = pen;
    for (int trial = 0; trial < 20; ++trial) {
      ProbeModel m;
      m.C = o.C;
      for (std::uint32_t j = 0; j < pool.dim(); ++j) m.w.push_back(g(rng));
      m.b = g(rng);
      const LossAndGrad lg = loss_and_grad(m, pool, o);
      for (std::size_t k = 0; k <= pool.dim(); ++k) {
        const double h = 1e-5;
        ProbeModel p = m, q = m;
        if (k < pool.dim()) {
          p.w[k] += h;
          q.w[k] -= h;
        } else {
          p.b += h;
          q.b -= h;
        }
        const double fd = (loss_and_grad(p, pool, o).loss - loss_and_grad(q, pool, o).loss) / (2 * h);
        EXPECT_LE(std::abs(fd - lg.grad[k]), 1e-5 * std::max(1.0, std::abs(lg.grad[k])))
            << "component " << k;
      }
    }
  }
}

TEST(Probe, TrainedModelIsStationary) {
  testing::GaussianSpec spec;
  spec.n = 300;
  spec.dim = 8;
  spec.flip_fraction = 0.1;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  const ProbeModel m = train(pool);
  ASSERT_TRUE(m.converged);
  const LossAndGrad lg = loss_and_grad(m, pool);
  double inf = 0;
  for (double v : lg.grad) inf = std::max(inf, std::abs(v));
  EXPECT_LE(inf, 1e-4 * (1 + std::abs(lg.loss)));
  EXPECT_NEAR(lg.loss, m.objective, 1e-9 * (1 + m.objective));
  EXPECT_LE(m.objective, 300 * std::log(2.0));
}

TEST(Probe, SeparablePoolStaysBelowZeroModelObjective) {
  const auto pool = pool_of(store_from_rows("D", {{3.f, 0.f}, {4.f, 1.f}, {-3.f, 0.f}, {-5.f, 2.f}},
                                            {Label::kSpoof, Label::kSpoof, Label::kBonafide, Label::kBonafide}));
  const ProbeModel m = train(pool);
  EXPECT_LE(m.objective, 4 * std::log(2.0));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(decision(m, pool.features(i)) > 0, pool.target(i) == 1);
  }
}

TEST(Probe, ObjectiveIsConvex) {
  testing::GaussianSpec spec;
  spec.n = 50;
  spec.flip_fraction = 0.3;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  const TrainOptions o = with_c(0.5);
  for (int t = 0; t < 100; ++t) {
    ProbeModel a, b, mid;
    a.C = b.C = mid.C = o.C;
    for (std::uint32_t j = 0; j < pool.dim(); ++j) {
      a.w.push_back(g(rng));
      b.w.push_back(g(rng));
      mid.w.push_back(0.5 * (a.w[j] + b.w[j]));
    }
    a.b = g(rng);
    b.b = g(rng);
    mid.b = 0.5 * (a.b + b.b);
    const double la = loss_and_grad(a, pool, o).loss, lb = loss_and_grad(b, pool, o).loss;
    EXPECT_LE(loss_and_grad(mid, pool, o).loss, 0.5 * (la + lb) + 1e-12);
  }
}

std::vector<std::size_t> argsort_abs(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(v[a]) < std::abs(v[b]); });
  return idx;
}

std::vector<std::size_t> argsort(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  return idx;
}

TEST(Probe, SampleOrderInvariance) {
  testing::GaussianSpec spec;
  spec.n = 120;
  spec.dim = 6;
  spec.flip_fraction = 0.15;
  const auto store = testing::gaussian_store("D", spec, "g");
  const auto pool = pool_of(store);
  std::vector<std::size_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  const LabeledDataset shuffled = pool.subset(perm);

  const ProbeModel a = train(pool), b = train(shuffled);
  for (std::size_t j = 0; j < a.dim(); ++j) EXPECT_NEAR(a.w[j], b.w[j], 1e-5 * (1 + std::abs(a.w[j])));
  EXPECT_NEAR(a.b, b.b, 1e-5 * (1 + std::abs(a.b)));
  EXPECT_EQ(argsort_abs(decisions(a, pool)), argsort_abs(decisions(b, pool)));
}

TEST(Probe, FeatureScalingKeepsRanking) {
  testing::GaussianSpec spec;
  spec.n = 40;
  spec.dim = 3;
  spec.flip_fraction = 0.2;
  const auto store = testing::gaussian_store("D", spec, "g");
  std::vector<float> scaled(store->matrix.values().begin(), store->matrix.values().end());
  for (float& v : scaled) v *= 4.0f;
  const auto scaled_store = make_store(store->manifest, EmbeddingMatrix(spec.dim, scaled));
  const ProbeModel a = train(pool_of(store)), b = train(pool_of(scaled_store));

  testing::GaussianSpec eval_spec = spec;
  eval_spec.seed = 99;
  eval_spec.n = 30;
  const auto eval_store = testing::gaussian_store("E", eval_spec, "e");
  const auto eval_pool = pool_of(eval_store);
  std::vector<double> da, db;
  for (std::size_t i = 0; i < eval_pool.size(); ++i) {
    da.push_back(decision(a, eval_pool.features(i)));
    std::vector<float> x(eval_pool.features(i).begin(), eval_pool.features(i).end());
    for (float& v : x) v *= 4.0f;
    db.push_back(decision(b, x));
  }
  EXPECT_EQ(argsort(da), argsort(db));
}

TEST(Probe, StandardizeFoldsBackToRawSpace) {
  testing::GaussianSpec spec;
  spec.n = 200;
  spec.dim = 4;
  spec.offset = 30.0;
  spec.flip_fraction = 0.1;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  TrainOptions o = with_c(1e6);
  const ProbeModel raw = train(pool, o);
  o.standardize = true;
  const ProbeModel st = train(pool, o);
  ASSERT_TRUE(st.converged);
  // With near-zero regularization both parameterizations reach the same optimum.
  const auto dr = decisions(raw, pool), ds = decisions(st, pool);
  for (std::size_t i = 0; i < dr.size(); ++i) EXPECT_NEAR(dr[i], ds[i], 1e-3 * (1 + std::abs(dr[i])));
}

TEST(Probe, BitDeterministic) {
  testing::GaussianSpec spec;
  spec.n = 500;
  spec.dim = 16;
  spec.flip_fraction = 0.1;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  const ProbeModel a = train(pool), b = train(pool);
  EXPECT_EQ(a, b);
}

TEST(Probe, MaxIterReportsNonConvergence) {
  testing::GaussianSpec spec;
  spec.n = 200;
  spec.dim = 8;
  spec.flip_fraction = 0.1;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  TrainOptions o;
  o.max_iter = 1;
  const ProbeModel m = train(pool, o);
  EXPECT_FALSE(m.converged);
  EXPECT_EQ(m.iterations, 1);
  EXPECT_LE(m.objective, 200 * std::log(2.0));
}

TEST(Probe, JsonRoundTripIsExact) {
  testing::GaussianSpec spec;
  spec.n = 100;
  spec.dim = 7;
  const auto pool = pool_of(testing::gaussian_store("D", spec, "g"));
  const ProbeModel m = train(pool);
  const ProbeModel back = model_from_json(model_to_json(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_to_json(back), model_to_json(m));
}

TEST(Probe, JsonRejectsMalformed) {
  EXPECT_THROW(model_from_json("{}"), Error);
  EXPECT_THROW(model_from_json("not json"), Error);
  ProbeModel m;
  m.w = {1.0, 2.0};
  auto j = nlohmann::json::parse(model_to_json(m));
  j["dim"] = 3;
  const std::string text = j.dump();
  EXPECT_THROW(model_from_json(text), Error);
}

TEST(Probe, SigmoidIsStable) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_DOUBLE_EQ(sigmoid(1000.0), 1.0);
  EXPECT_DOUBLE_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

}  // namespace
}  // namespace dfcurate
