#pragma once

// Clustering a collection into sub-collections that share a connectivity
// structure: separated estimates, a weighted dissimilarity, 2-medoids and the
// recursive bisection driven by the summed BIC-L.

#include "colsbm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace colsbm {

struct SeparatedEstimates {
  Matrix pi_tilde;                   // M x Q
  std::vector<Matrix> alpha_tilde;   // M of Q x Q
};

/// Plug-in proportions and connectivities of each network alone, from the
/// memberships of the joint fit. Off-support entries and empty weights are 0.
inline SeparatedEstimates separated_estimates(const Fit& fit, const NetworkCollection& col) {
  const auto M = col.size();
  if (fit.state.tau.size() != M || fit.params.n_networks() != M)
    throw InvalidArgument("fit does not cover the collection");
  const auto Q = static_cast<Eigen::Index>(fit.params.Q);
  const auto& S = fit.params.S;
  SeparatedEstimates est;
  est.pi_tilde = Matrix::Zero(static_cast<Eigen::Index>(M), Q);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& net = col.networks[m];
    const Matrix& tau = fit.state.tau[m];
    if (tau.rows() != net.size() || tau.cols() != Q) throw InvalidArgument("tau has the wrong shape");
    const Matrix num = tau.transpose() * net.observed_edges() * tau;
    const Matrix den = tau.transpose() * net.observed() * tau;
    Matrix a = Matrix::Zero(Q, Q);
    for (Eigen::Index q = 0; q < Q; ++q) {
      if (!S(m, static_cast<std::size_t>(q))) continue;
      est.pi_tilde(static_cast<Eigen::Index>(m), q) = tau.col(q).sum() / static_cast<double>(net.size());
      for (Eigen::Index r = 0; r < Q; ++r)
        if (S(m, static_cast<std::size_t>(r)) && den(q, r) > 0.0) a(q, r) = num(q, r) / den(q, r);
    }
    est.alpha_tilde.push_back(std::move(a));
  }
  return est;
}

inline double dissimilarity(std::size_t m, std::size_t m2, const SeparatedEstimates& est,
                            const Vector& delta_hat) {
  const auto Q = est.pi_tilde.cols();
  const auto a = static_cast<Eigen::Index>(m), b = static_cast<Eigen::Index>(m2);
  double d = 0.0;
  for (Eigen::Index q = 0; q < Q; ++q)
    for (Eigen::Index r = 0; r < Q; ++r) {
      const double w = std::max(est.pi_tilde(a, q), est.pi_tilde(b, q)) *
                       std::max(est.pi_tilde(a, r), est.pi_tilde(b, r));
      const double diff = est.alpha_tilde[m](q, r) / delta_hat(a) -
                          est.alpha_tilde[m2](q, r) / delta_hat(b);
      d += w * diff * diff;
    }
  return d;
}

/// Pairwise dissimilarities under a joint fit; delta is taken as 1 unless the
/// variant estimates it.
inline Matrix dissimilarity_matrix(const Fit& fit, const NetworkCollection& col) {
  const auto est = separated_estimates(fit, col);
  const auto M = col.size();
  const Vector delta = has_delta(fit.params.variant) ? fit.params.delta
                                                     : Vector::Ones(static_cast<Eigen::Index>(M));
  Matrix D = Matrix::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = m + 1; k < M; ++k)
      D(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          D(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = dissimilarity(m, k, est, delta);
  return D;
}

/// Two medoids: start from the most dissimilar pair, assign to the nearest
/// medoid, then swap a medoid with a non-medoid while the total cost drops.
/// Ties go to the lower index. Returns 0/1 labels.
inline std::vector<int> two_medoids(const Matrix& D) {
  const auto M = static_cast<std::size_t>(D.rows());
  if (M < 2) throw InvalidArgument("two_medoids needs at least two items");
  std::size_t a = 0, b = 1;
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j)
      if (D(i, j) > D(a, b)) a = i, b = j;
  const auto cost = [&](std::size_t x, std::size_t y) {
    double c = 0.0;
    for (std::size_t i = 0; i < M; ++i) c += std::min(D(i, x), D(i, y));
    return c;
  };
  double current = cost(a, b);
  for (bool improved = true; improved;) {
    improved = false;
    std::size_t na = a, nb = b;
    double best = current;
    for (std::size_t i = 0; i < M; ++i) {
      if (i == a || i == b) continue;
      if (const double c = cost(i, b); c < best - 1e-12) best = c, na = i, nb = b;
      if (const double c = cost(a, i); c < best - 1e-12) best = c, na = a, nb = i;
    }
    if (best < current) {
      a = std::min(na, nb);
      b = std::max(na, nb);
      current = best;
      improved = true;
    }
  }
  std::vector<int> lab(M);
  for (std::size_t i = 0; i < M; ++i) {
    if (i == a) lab[i] = 0;
    else if (i == b) lab[i] = 1;
    else lab[i] = D(i, b) < D(i, a) ? 1 : 0;
  }
  return lab;
}

/// One node of the bisection trace: a group, its score and the tried split.
struct PartitionNode {
  std::vector<std::size_t> members;
  double score = 0.0;
  std::size_t q_hat = 0;
  double split_score = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
  std::vector<PartitionNode> children;
};

struct Partition {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<ScoredFit> group_fits;
  double score = 0.0;
  PartitionNode trace;
};

inline double partition_score(const std::vector<ScoredFit>& group_fits) {
  double s = 0.0;
  for (const auto& f : group_fits) s += f.bic_l;
  return s;
}

/// Group labels of the networks (index into groups).
inline std::vector<std::size_t> membership(const Partition& p, std::size_t M) {
  std::vector<std::size_t> z(M, 0);
  for (std::size_t g = 0; g < p.groups.size(); ++g)
    for (auto m : p.groups[g]) z.at(m) = g;
  return z;
}

/// Content hash of a network, so seeds and orderings do not depend on where
/// it sits in the collection.
inline std::uint64_t network_hash(const Network& net) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(net.size()) ^ (net.directed() ? 0x9e37u : 0u));
  const Matrix& a = net.adjacency();
  const Matrix& o = net.observed();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const auto v = static_cast<std::uint64_t>(o(i, j) == 0.0 ? 0xffffu : a(i, j) + 1.0);
      h = mix64(h ^ (v + static_cast<std::uint64_t>(i * a.cols() + j) * 0x100000001b3ull));
    }
  return h;
}

namespace detail {

struct Clust2CollContext {
  const NetworkCollection& col;
  ModelVariant variant;
  const SearchConfig& cfg;
  std::vector<std::uint64_t> hash;
  SepPath sep;
};

inline std::uint64_t group_seed(const Clust2CollContext& ctx, const std::vector<std::size_t>& g) {
  std::vector<std::size_t> keys;
  for (auto m : g) keys.push_back(static_cast<std::size_t>(ctx.hash[m]));
  std::sort(keys.begin(), keys.end());
  return derive_seed(ctx.cfg.seed, keys);
}

/// Members ordered by content hash, then index.
inline std::vector<std::size_t> canonical(const Clust2CollContext& ctx, std::vector<std::size_t> g) {
  std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
    return ctx.hash[a] != ctx.hash[b] ? ctx.hash[a] < ctx.hash[b] : a < b;
  });
  return g;
}

inline ScoredFit fit_group(const Clust2CollContext& ctx, const std::vector<std::size_t>& g) {
  const auto sub = ctx.col.subset(g);
  SepPath path;
  for (auto m : g) path.push_back(ctx.sep[m]);
  SearchConfig c = ctx.cfg;
  c.seed = group_seed(ctx, g);
  return model_search(sub, ctx.variant, c, &path).best;
}

inline void bisect(const Clust2CollContext& ctx, PartitionNode& node, ScoredFit fit,
                   Partition& out) {
  node.score = fit.bic_l;
  node.q_hat = fit.fit.params.Q;
  const auto& g = node.members;
  const auto leaf = [&] {
    out.groups.push_back(g);
    out.group_fits.push_back(std::move(fit));
  };
  if (g.size() < 2) return leaf();
  const Matrix D = dissimilarity_matrix(fit.fit, ctx.col.subset(g));
  const auto lab = two_medoids(D);
  std::vector<std::size_t> halves[2];
  for (std::size_t i = 0; i < g.size(); ++i) halves[lab[i]].push_back(g[i]);
  node.children.resize(2);
  ScoredFit fits[2];
  for (int h = 0; h < 2; ++h) node.children[h].members = canonical(ctx, halves[h]);
  parallel_for(2, [&](std::size_t h) { fits[h] = fit_group(ctx, node.children[h].members); });
  node.split_score = fits[0].bic_l + fits[1].bic_l;
  for (int h = 0; h < 2; ++h) {
    node.children[h].score = fits[h].bic_l;
    node.children[h].q_hat = fits[h].fit.params.Q;
  }
  node.accepted = node.split_score > node.score;
  if (!node.accepted) return leaf();
  for (int h = 0; h < 2; ++h) bisect(ctx, node.children[h], std::move(fits[h]), out);
}

}  // namespace detail

/// Recursive 2-medoids bisection; a split is kept only when the summed BIC-L of
/// the two halves strictly exceeds the group's own. Rejected splits are not
/// explored further.
inline Partition clust2coll(const NetworkCollection& col, ModelVariant variant,
                            const SearchConfig& cfg) {
  if (variant == ModelVariant::sep) throw InvalidArgument("clust2coll needs a joint variant");
  col.validate();
  detail::Clust2CollContext ctx{col, variant, cfg, {}, {}};
  for (const auto& net : col.networks) ctx.hash.push_back(network_hash(net));
  ctx.sep.resize(col.size());
  parallel_for(col.size(), [&](std::size_t m) {
    SearchConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {ctx.hash[m]});
    ctx.sep[m] = sep_paths(col.subset({m}), c).front();
  });
  std::vector<std::size_t> all(col.size());
  std::iota(all.begin(), all.end(), 0);
  Partition out;
  out.trace.members = detail::canonical(ctx, all);
  detail::bisect(ctx, out.trace, detail::fit_group(ctx, out.trace.members), out);
  out.score = partition_score(out.group_fits);
  return out;
}

}  // namespace colsbm
