#include "colsbm/bench.hpp"
#include "colsbm/sim.hpp"
#include "colsbm/spectral.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace colsbm {
namespace {

using testing::shared_params;

TEST(Simulate, SingleBlockDensity) {
  const auto p = shared_params(Matrix::Constant(1, 1, 0.3), Eigen::RowVectorXd::Ones(1), 1);
  const auto sim = simulate(p, {100}, EmissionKind::bernoulli, true, 1);
  const auto& net = sim.collection.networks[0];
  const double dyads = 100.0 * 99;
  const double density = net.observed_edges().sum() / dyads;
  EXPECT_LT(std::abs(density - 0.3), 3 * std::sqrt(0.3 * 0.7 / dyads));
  EXPECT_EQ(net.adjacency().diagonal().sum(), 0.0);
}

TEST(Simulate, ExpectedEdgeCount) {
  Matrix alpha(2, 2);
  alpha << 0.6, 0.1, 0.2, 0.4;
  const Eigen::RowVectorXd pi = (Eigen::RowVectorXd(2) << 0.3, 0.7).finished();
  const auto p = shared_params(alpha, pi, 1);
  const double n = 20;
  double mean_rate = 0;
  for (int q = 0; q < 2; ++q)
    for (int r = 0; r < 2; ++r) mean_rate += pi(q) * pi(r) * alpha(q, r);
  const double expected = n * (n - 1) * mean_rate;
  double total = 0, total2 = 0;
  const int draws = 200;
  for (int d = 0; d < draws; ++d) {
    const double e = simulate(p, {20}, EmissionKind::bernoulli, true, 1000 + d).collection.networks[0].observed_edges().sum();
    total += e;
    total2 += e * e;
  }
  const double mean = total / draws;
  const double sd = std::sqrt((total2 / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(mean - expected), 3 * sd);
}

TEST(Simulate, PoissonAndUndirected) {
  Matrix alpha(2, 2);
  alpha << 3, 0.5, 0.5, 2;
  const auto p = shared_params(alpha, Eigen::RowVectorXd::Constant(2, 0.5), 2);
  const auto sim = simulate(p, {30, 20}, EmissionKind::poisson, false, 2);
  for (const auto& net : sim.collection.networks) {
    EXPECT_TRUE(net.adjacency().isApprox(net.adjacency().transpose()));
    EXPECT_FALSE(net.is_binary());
  }
  EXPECT_THROW(simulate(p, {30}, EmissionKind::poisson, false, 2), InvalidArgument);
  Matrix asym = alpha;
  asym(0, 1) = 1.0;
  EXPECT_THROW(simulate(shared_params(asym, Eigen::RowVectorXd::Constant(2, 0.5), 1), {10},
                        EmissionKind::poisson, false, 2),
               InvalidArgument);
}

TEST(Simulate, SeedDeterminesOutput) {
  const auto p = shared_params(Matrix::Constant(1, 1, 0.3), Eigen::RowVectorXd::Ones(1), 2);
  const auto a = simulate(p, {15, 15}, EmissionKind::bernoulli, true, 9);
  const auto b = simulate(p, {15, 15}, EmissionKind::bernoulli, true, 9);
  const auto c = simulate(p, {15, 15}, EmissionKind::bernoulli, true, 10);
  EXPECT_EQ(a.collection.networks[1].adjacency(), b.collection.networks[1].adjacency());
  EXPECT_NE(a.collection.networks[1].adjacency(), c.collection.networks[1].adjacency());
}

TEST(Simulate, TableS1SupportsLackABlockEach) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = scenarios::table_s1_params(0.2, rng);
    ASSERT_EQ(p.S.rows(), 2u);
    bool found = false;
    for (std::size_t q = 0; q < p.Q; ++q)
      for (std::size_t r = 0; r < p.Q; ++r)
        found |= p.S(0, q) && !p.S(1, q) && p.S(1, r) && !p.S(0, r);
    EXPECT_TRUE(found);
    EXPECT_TRUE(validate_support(p.S));
  }
}

TEST(Ari, Examples) {
  const Labels a{0, 0, 1, 1}, b{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(ari(a, a), 1.0);
  EXPECT_DOUBLE_EQ(ari(a, Labels{1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(ari(a, b), -0.5, 1e-12);
  EXPECT_THROW(ari(a, Labels{0, 1}), InvalidArgument);
}

TEST(Ari, InvariantToRelabeling) {
  Rng rng(3);
  std::uniform_int_distribution<std::size_t> d(0, 3);
  for (int rep = 0; rep < 50; ++rep) {
    Labels a(30), b(30);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng);
    Labels a2 = a, b2 = b;
    for (auto& x : a2) x = (x + 1) % 4;
    for (auto& x : b2) x = 3 - x;
    EXPECT_NEAR(ari(a, b), ari(a2, b2), 1e-12);
    EXPECT_NEAR(ari(a, b), ari(b, a), 1e-12);
  }
}

TEST(Ari, JointCountsCrossNetworkMatching) {
  const std::vector<Labels> truth{{0, 0, 1, 1}, {0, 0, 1, 1}};
  const std::vector<Labels> swapped{{0, 0, 1, 1}, {1, 1, 0, 0}};
  EXPECT_DOUBLE_EQ(mean_ari(truth, swapped), 1.0);
  EXPECT_LT(joint_ari(truth, swapped), 1.0);
}

TEST(RmseAlpha, Examples) {
  Matrix a(2, 2), b(2, 2);
  a << 0.5, 0.1, 0.2, 0.4;
  EXPECT_DOUBLE_EQ(rmse_alpha(a, a), 0.0);
  b = a;
  b(0, 0) = 0.6;
  EXPECT_NEAR(rmse_alpha(b, a), 0.05, 1e-12);
  Matrix p(2, 2);
  p << 0.4, 0.2, 0.1, 0.5;
  EXPECT_NEAR(rmse_alpha(p, a), 0.0, 1e-12);
}

TEST(RmseAlpha, IgnoresPairsThatNeverMeet) {
  Matrix a = Matrix::Constant(3, 3, 0.2), b = a;
  b(1, 2) = b(2, 1) = 0.9;
  const SupportMatrix S{{1, 1, 0}, {1, 0, 1}};
  EXPECT_NEAR(rmse_alpha(b, a, S), 0.0, 1e-12);
  EXPECT_GT(rmse_alpha(b, a), 0.0);
}

TEST(RmseAlpha, Pseudometric) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto draw = [&] {
    Matrix m(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) m.data()[i] = u(rng);
    return m;
  };
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix x = draw(), y = draw(), z = draw();
    EXPECT_NEAR(rmse_alpha(x, y), rmse_alpha(y, x), 1e-12);
    EXPECT_LE(rmse_alpha(x, z), rmse_alpha(x, y) + rmse_alpha(y, z) + 1e-12);
  }
}

TEST(RecSupport, Examples) {
  const SupportMatrix S{{1, 1, 0}, {1, 0, 1}};
  EXPECT_EQ(rec_support(S, S), 1);
  EXPECT_EQ(rec_support(S.permute_columns({2, 0, 1}), S), 1);
  EXPECT_EQ(rec_support(SupportMatrix{{1, 1, 1}, {1, 0, 1}}, S), 0);
  EXPECT_THROW(rec_support(SupportMatrix::all_true(2, 2), S), InvalidArgument);
}

TEST(Simulate, TrueStartDominatesRandomStarts) {
  Matrix alpha(2, 2);
  alpha << 0.8, 0.1, 0.2, 0.6;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto p = shared_params(alpha, Eigen::RowVectorXd::Constant(2, 0.5), 2);
    const auto sim = simulate(p, {30, 30}, EmissionKind::bernoulli, true, 40 + rep);
    const auto& col = sim.collection;
    VariationalState truth;
    for (const auto& z : sim.truth.z) truth.tau.push_back(labels_to_tau(z, 2));
    const double oracle = run_vem(col, ModelVariant::iid, 2, p.S, truth, VemConfig{}, p).elbo;
    Rng rng(rep);
    for (int k = 0; k < 3; ++k) {
      VariationalState st;
      for (std::size_t m = 0; m < 2; ++m) st.tau.push_back(testing::random_tau(rng, 30, p.S, m));
      EXPECT_GE(oracle, run_vem(col, ModelVariant::iid, 2, p.S, st, VemConfig{}).elbo - 1e-6);
    }
  }
}

TEST(Scenario, DeterministicTables) {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::table_s2;
  cfg.grid = {0.28};
  cfg.replicates = 1;
  cfg.seed = 3;
  cfg.search.q_max = 4;
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  ASSERT_EQ(a.tidy.rows.size(), 1u);
  EXPECT_EQ(a.tidy.rows, b.tidy.rows);
  EXPECT_EQ(a.summary.rows.size(), 1u);
}

}  // namespace
}  // namespace colsbm
