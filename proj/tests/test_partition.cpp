#include "colsbm/bench.hpp"
#include "colsbm/partition.hpp"
#include "colsbm/spectral.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>

namespace colsbm {
namespace {

using testing::random_network;
using testing::shared_params;
using testing::small_search;

Fit hard_fit(const std::vector<Labels>& z, std::size_t Q, ModelVariant v = ModelVariant::iid) {
  Fit f;
  f.params.variant = v;
  f.params.Q = Q;
  f.params.S = SupportMatrix::all_true(z.size(), Q);
  f.params.pi = Matrix::Constant(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(Q), 1.0 / Q);
  f.params.alpha = Matrix::Constant(static_cast<Eigen::Index>(Q), static_cast<Eigen::Index>(Q), 0.5);
  f.params.delta = Vector::Ones(static_cast<Eigen::Index>(z.size()));
  for (const auto& l : z) f.state.tau.push_back(labels_to_tau(l, Q, 0.0));
  return f;
}

TEST(SeparatedEstimates, HardMembershipsGiveBlockDensities) {
  Rng rng(1);
  const auto net = random_network(rng, 12, true, 0.4);
  Labels z(12);
  for (std::size_t i = 0; i < 12; ++i) z[i] = i < 5 ? 0 : 1;
  NetworkCollection col({net}, EmissionKind::bernoulli);
  const auto est = separated_estimates(hard_fit({z}, 2), col);
  EXPECT_NEAR(est.pi_tilde(0, 0), 5.0 / 12, 1e-12);
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t r = 0; r < 2; ++r) {
      double e = 0, d = 0;
      for (Eigen::Index i = 0; i < 12; ++i)
        for (Eigen::Index j = 0; j < 12; ++j)
          if (i != j && z[i] == q && z[j] == r) e += net.adjacency()(i, j), d += 1;
      EXPECT_NEAR(est.alpha_tilde[0](q, r), e / d, 1e-12);
    }
}

TEST(SeparatedEstimates, SingleBlockIsDensity) {
  Rng rng(2);
  const auto net = random_network(rng, 10, false, 0.3, 0.2);
  NetworkCollection col({net}, EmissionKind::bernoulli);
  const auto est = separated_estimates(hard_fit({Labels(10, 0)}, 1), col);
  EXPECT_NEAR(est.pi_tilde(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(est.alpha_tilde[0](0, 0), net.observed_edges().sum() / net.observed().sum(), 1e-12);
}

TEST(SeparatedEstimates, FractionalMemberships) {
  Matrix a(4, 4);
  a << 0, 1, 0, 1,
       1, 0, 1, 0,
       0, 0, 0, 1,
       1, 1, 0, 0;
  NetworkCollection col({Network(a, true)}, EmissionKind::bernoulli);
  Fit f = hard_fit({Labels{0, 0, 1, 1}}, 2);
  Matrix tau(4, 2);
  tau << 0.9, 0.1, 0.6, 0.4, 0.2, 0.8, 0.3, 0.7;
  f.state.tau[0] = tau;
  const auto est = separated_estimates(f, col);
  EXPECT_NEAR(est.pi_tilde(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(est.pi_tilde(0, 1), 0.5, 1e-12);
  for (Eigen::Index q = 0; q < 2; ++q)
    for (Eigen::Index r = 0; r < 2; ++r) {
      double e = 0, d = 0;
      for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
          if (i != j) {
            e += tau(i, q) * tau(j, r) * a(i, j);
            d += tau(i, q) * tau(j, r);
          }
      EXPECT_NEAR(est.alpha_tilde[0](q, r), e / d, 1e-12);
    }
  // (0,0): sum of tau_i0 tau_j0 over linked pairs / over all pairs
  EXPECT_NEAR(est.alpha_tilde[0](0, 0), 1.98 / 2.7, 1e-12);
}

TEST(SeparatedEstimates, OffSupportIsZero) {
  Rng rng(3);
  NetworkCollection col({random_network(rng, 8, true, 0.5), random_network(rng, 8, true, 0.5)},
                        EmissionKind::bernoulli);
  Fit f = hard_fit({Labels{0, 0, 0, 1, 1, 1, 1, 0}, Labels{0, 0, 0, 0, 2, 2, 2, 2}}, 3, ModelVariant::pi);
  f.params.S = SupportMatrix{{1, 1, 0}, {1, 0, 1}};
  const auto est = separated_estimates(f, col);
  EXPECT_EQ(est.pi_tilde(0, 2), 0.0);
  EXPECT_EQ(est.alpha_tilde[0].col(2).norm(), 0.0);
  EXPECT_EQ(est.alpha_tilde[1].row(1).norm(), 0.0);
}

TEST(Dissimilarity, ClosedForm) {
  SeparatedEstimates est;
  est.pi_tilde = Matrix(2, 2);
  est.pi_tilde << 0.5, 0.5, 0.2, 0.8;
  Matrix a1(2, 2), a2(2, 2);
  a1 << 0.6, 0.2, 0.1, 0.4;
  a2 << 0.5, 0.2, 0.3, 0.1;
  est.alpha_tilde = {a1, a2};
  EXPECT_NEAR(dissimilarity(0, 1, est, Vector::Ones(2)), 0.0761, 1e-12);
  EXPECT_NEAR(dissimilarity(0, 1, est, (Vector(2) << 1.0, 2.0).finished()), 0.114025, 1e-12);
  EXPECT_EQ(dissimilarity(0, 0, est, Vector::Ones(2)), 0.0);
}

TEST(Dissimilarity, MatrixIsSymmetricNonnegative) {
  Rng rng(4);
  std::vector<Network> nets;
  std::vector<Labels> z;
  std::uniform_int_distribution<std::size_t> d(0, 2);
  for (int m = 0; m < 5; ++m) {
    nets.push_back(random_network(rng, 15, true, 0.3));
    Labels l(15);
    for (auto& x : l) x = d(rng);
    z.push_back(l);
  }
  NetworkCollection col(nets, EmissionKind::bernoulli);
  for (auto v : {ModelVariant::iid, ModelVariant::delta}) {
    Fit f = hard_fit(z, 3, v);
    if (has_delta(v)) f.params.delta << 1.0, 0.8, 1.2, 0.9, 1.1;
    const Matrix D = dissimilarity_matrix(f, col);
    EXPECT_TRUE(D.isApprox(D.transpose(), 0.0));
    EXPECT_GE(D.minCoeff(), 0.0);
    EXPECT_EQ(D.diagonal().norm(), 0.0);
  }
}

TEST(TwoMedoids, SeparatesClusters) {
  const std::vector<double> x{0.0, 5.0, 0.1, 5.1, 0.2};
  Matrix D(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) D(i, j) = std::abs(x[i] - x[j]);
  const auto lab = two_medoids(D);
  EXPECT_EQ(lab[0], lab[2]);
  EXPECT_EQ(lab[0], lab[4]);
  EXPECT_EQ(lab[1], lab[3]);
  EXPECT_NE(lab[0], lab[1]);
}

TEST(TwoMedoids, TiesAndSmallInputs) {
  Matrix D = Matrix::Ones(3, 3);
  D.diagonal().setZero();
  EXPECT_EQ(two_medoids(D), (std::vector<int>{0, 1, 0}));
  Matrix two(2, 2);
  two << 0, 3, 3, 0;
  EXPECT_EQ(two_medoids(two), (std::vector<int>{0, 1}));
  EXPECT_THROW(two_medoids(Matrix::Zero(1, 1)), InvalidArgument);
}

Matrix structure(int kind) {
  Matrix a(2, 2);
  if (kind == 0) a << 0.7, 0.05, 0.05, 0.7;
  else a << 0.05, 0.6, 0.6, 0.05;
  return a;
}

NetworkCollection mixed(const std::vector<int>& kinds, Eigen::Index n, std::uint64_t seed) {
  std::vector<Network> nets;
  for (std::size_t m = 0; m < kinds.size(); ++m) {
    const auto p = shared_params(structure(kinds[m]), Eigen::RowVectorXd::Constant(2, 0.5), 1);
    nets.push_back(simulate(p, {n}, EmissionKind::bernoulli, false, derive_seed(seed, {m})).collection.networks[0]);
  }
  return {nets, EmissionKind::bernoulli};
}

TEST(Clust2Coll, SplitsUnrelatedNetworks) {
  const auto col = mixed({0, 1}, 50, 1);
  const auto p = clust2coll(col, ModelVariant::iid, small_search(3, 2));
  ASSERT_EQ(p.groups.size(), 2u);
  EXPECT_TRUE(p.trace.accepted);
  EXPECT_GT(p.trace.split_score, p.trace.score);
  EXPECT_NEAR(p.score, partition_score(p.group_fits), 0.0);
}

TEST(Clust2Coll, HomogeneousCollectionStaysWhole) {
  int whole = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto col = mixed({0, 0, 0, 0, 0, 0}, 30, 100 + rep);
    whole += clust2coll(col, ModelVariant::iid, small_search(3, rep)).groups.size() == 1;
  }
  EXPECT_GE(whole, 18);
}

TEST(Clust2Coll, TraceIsConsistent) {
  const auto col = mixed({0, 1, 0, 1}, 40, 3);
  const auto p = clust2coll(col, ModelVariant::iid, small_search(3, 4));
  std::size_t accepted = 0;
  const std::function<void(const PartitionNode&)> walk = [&](const PartitionNode& n) {
    if (n.accepted) {
      ++accepted;
      EXPECT_GT(n.split_score, n.score);
      ASSERT_EQ(n.children.size(), 2u);
      EXPECT_EQ(n.children[0].members.size() + n.children[1].members.size(), n.members.size());
      for (const auto& c : n.children) walk(c);
    }
  };
  walk(p.trace);
  EXPECT_EQ(p.groups.size(), accepted + 1);
  EXPECT_LE(accepted, col.size() - 1);
  const auto z = membership(p, col.size());
  EXPECT_EQ(z[0], z[2]);
  EXPECT_EQ(z[1], z[3]);
  EXPECT_NE(z[0], z[1]);
}

TEST(Clust2Coll, OrderInvariant) {
  const auto col = mixed({0, 1, 0, 1, 0}, 30, 5);
  const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  const auto shuffled = col.subset(perm);
  const auto cfg = small_search(3, 6);
  const auto a = clust2coll(col, ModelVariant::pi, cfg);
  const auto b = clust2coll(shuffled, ModelVariant::pi, cfg);
  EXPECT_EQ(a.score, b.score);
  const auto za = membership(a, 5), zb = membership(b, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(za[perm[i]] == za[perm[j]], zb[i] == zb[j]);
}

TEST(PartitionScore, SingletonsMatchSepSum) {
  const auto col = mixed({0, 1, 0}, 30, 7);
  const auto cfg = small_search(3, 8);
  const auto sep = fit_sep_sbm(col, cfg);
  const auto path = sep_paths(col, cfg);
  std::vector<ScoredFit> fits;
  for (std::size_t m = 0; m < col.size(); ++m) {
    SearchConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {9, m});
    SepPath single{path[m]};
    fits.push_back(model_search(col.subset({m}), ModelVariant::iid, c, &single).best);
  }
  EXPECT_NEAR(partition_score(fits), sep.bic_l, 1e-6);
}

}  // namespace
}  // namespace colsbm
