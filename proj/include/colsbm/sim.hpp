#pragma once

// Sampling from the colSBM family and recovery metrics.

#include "colsbm/model.hpp"
#include "colsbm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace colsbm {

using Labels = std::vector<std::size_t>;

struct SimTruth {
  std::vector<Labels> z;
  ColSbmParams params;
};

struct Simulated {
  NetworkCollection collection;
  SimTruth truth;
};

/// Draws memberships from pi[m] then every dyad independently with rate
/// delta_m * alpha_{z_i z_j}; undirected dyads are drawn once.
inline Simulated simulate(const ColSbmParams& params, const std::vector<Eigen::Index>& sizes,
                          EmissionKind kind, bool directed, std::uint64_t seed) {
  const auto M = sizes.size();
  if (params.n_networks() != M) throw InvalidArgument("one size per network is required");
  validate_params(params, kind, 1e-8);
  if (!directed && !params.alpha.isApprox(params.alpha.transpose(), 1e-12))
    throw InvalidArgument("undirected simulation needs a symmetric alpha");
  Simulated out;
  out.truth.params = params;
  out.collection.emission = kind;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t m = 0; m < M; ++m) {
    const auto n = sizes[m];
    const Eigen::RowVectorXd row = params.pi.row(static_cast<Eigen::Index>(m));
    std::discrete_distribution<std::size_t> draw(row.data(), row.data() + row.size());
    Labels z(static_cast<std::size_t>(n));
    for (auto& zi : z) zi = draw(rng);
    Matrix a = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = directed ? 0 : i + 1; j < n; ++j) {
        if (i == j) continue;
        const double rate = params.rate(m, z[i], z[j]);
        double x;
        if (kind == EmissionKind::bernoulli) {
          x = u(rng) < rate ? 1.0 : 0.0;
        } else {
          std::poisson_distribution<int> pd(rate);
          x = pd(rng);
        }
        a(i, j) = x;
        if (!directed) a(j, i) = x;
      }
    out.collection.networks.emplace_back(std::move(a), directed);
    out.truth.z.push_back(std::move(z));
  }
  out.collection.validate();
  return out;
}

/// Adjusted Rand index from the contingency table.
inline double ari(const Labels& a, const Labels& b) {
  if (a.size() != b.size()) throw InvalidArgument("label vectors differ in length");
  const double n = static_cast<double>(a.size());
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sc = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : cells) sc += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = n > 1 ? sa * sb / c2(n) : 0.0;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (sc - expected) / (max_index - expected);
}

inline double mean_ari(const std::vector<Labels>& a, const std::vector<Labels>& b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("label collections differ");
  double s = 0;
  for (std::size_t m = 0; m < a.size(); ++m) s += ari(a[m], b[m]);
  return s / static_cast<double>(a.size());
}

/// ARI over all nodes of all networks, so block matching across networks counts.
inline double joint_ari(const std::vector<Labels>& a, const std::vector<Labels>& b) {
  if (a.size() != b.size()) throw InvalidArgument("label collections differ");
  Labels x, y;
  for (std::size_t m = 0; m < a.size(); ++m) {
    x.insert(x.end(), a[m].begin(), a[m].end());
    y.insert(y.end(), b[m].begin(), b[m].end());
  }
  return ari(x, y);
}

inline Labels hard_labels(const Matrix& tau) {
  Labels z(static_cast<std::size_t>(tau.rows()));
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    Eigen::Index arg;
    tau.row(i).maxCoeff(&arg);
    z[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
  }
  return z;
}

inline std::vector<Labels> hard_labels(const VariationalState& st) {
  std::vector<Labels> out;
  for (const auto& t : st.tau) out.push_back(hard_labels(t));
  return out;
}

inline constexpr std::size_t kMaxPermutationBlocks = 8;

/// RMSE between alpha_hat and alpha minimized over block relabelings. With a
/// support, only pairs of blocks that meet in some network of the truth enter
/// the mean; the others are not parameters of the model.
inline double rmse_alpha(const Matrix& alpha_hat, const Matrix& alpha,
                         const SupportMatrix* support = nullptr) {
  if (alpha_hat.rows() != alpha.rows() || alpha_hat.cols() != alpha.cols() ||
      alpha.rows() != alpha.cols())
    throw InvalidArgument("rmse_alpha needs square matrices of equal size");
  const auto Q = static_cast<std::size_t>(alpha.rows());
  if (Q > kMaxPermutationBlocks) throw InvalidArgument("rmse_alpha is exhaustive up to 8 blocks");
  if (support && support->cols() != Q) throw InvalidArgument("support does not match alpha");
  std::vector<std::size_t> s(Q);
  std::iota(s.begin(), s.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  double count = 0;
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t r = 0; r < Q; ++r) count += !support || support->co_occur(q, r);
  do {
    double acc = 0;
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t r = 0; r < Q; ++r) {
        if (support && !support->co_occur(q, r)) continue;
        const double d = alpha_hat(s[q], s[r]) - alpha(q, r);
        acc += d * d;
      }
    best = std::min(best, acc);
  } while (std::next_permutation(s.begin(), s.end()));
  return std::sqrt(best / count);
}

inline double rmse_alpha(const Matrix& alpha_hat, const Matrix& alpha,
                         const SupportMatrix& support) {
  return rmse_alpha(alpha_hat, alpha, &support);
}

/// 1 if a column permutation maps S_hat onto S, else 0.
inline int rec_support(const SupportMatrix& S_hat, const SupportMatrix& S) {
  if (S_hat.rows() != S.rows() || S_hat.cols() != S.cols())
    throw InvalidArgument("support matrices differ in shape");
  const auto Q = S.cols();
  if (Q > kMaxPermutationBlocks) throw InvalidArgument("rec_support is exhaustive up to 8 blocks");
  std::vector<std::size_t> s(Q);
  std::iota(s.begin(), s.end(), 0);
  do {
    bool ok = true;
    for (std::size_t m = 0; m < S.rows() && ok; ++m)
      for (std::size_t q = 0; q < Q && ok; ++q) ok = S(m, q) == S_hat(m, s[q]);
    if (ok) return 1;
  } while (std::next_permutation(s.begin(), s.end()));
  return 0;
}

}  // namespace colsbm
