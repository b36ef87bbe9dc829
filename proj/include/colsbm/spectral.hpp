#pragma once

// Single-network starting points: spectral clustering and random hard labels.

#include "colsbm/parallel.hpp"
#include "colsbm/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace colsbm {

/// Lloyd's k-means with k-means++ seeding; best of `restarts` by inertia.
inline std::vector<std::size_t> kmeans(const Matrix& x, std::size_t k, Rng& rng, int restarts = 10,
                                       int max_iter = 100) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> best(n, 0);
  if (k <= 1 || n == 0) return best;
  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> lab(n);
  std::vector<double> d2(n);
  for (int rs = 0; rs < restarts; ++rs) {
    Matrix c(static_cast<Eigen::Index>(k), x.cols());
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    c.row(0) = x.row(static_cast<Eigen::Index>(pick(rng)));
    for (std::size_t j = 1; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < j; ++l)
          m = std::min(m, (x.row(static_cast<Eigen::Index>(i)) - c.row(static_cast<Eigen::Index>(l)))
                              .squaredNorm());
        d2[i] = m;
      }
      const double tot = std::accumulate(d2.begin(), d2.end(), 0.0);
      std::size_t chosen = pick(rng);
      if (tot > 0.0) {
        std::discrete_distribution<std::size_t> dd(d2.begin(), d2.end());
        chosen = dd(rng);
      }
      c.row(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(chosen));
    }
    double inertia = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t l = 0; l < k; ++l) {
          const double d = (x.row(static_cast<Eigen::Index>(i)) - c.row(static_cast<Eigen::Index>(l)))
                               .squaredNorm();
          if (d < m) {
            m = d;
            arg = l;
          }
        }
        changed |= it == 0 || arg != lab[i];
        lab[i] = arg;
        inertia += m;
      }
      if (!changed) break;
      Matrix s = Matrix::Zero(c.rows(), c.cols());
      std::vector<double> cnt(k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        s.row(static_cast<Eigen::Index>(lab[i])) += x.row(static_cast<Eigen::Index>(i));
        cnt[lab[i]] += 1.0;
      }
      for (std::size_t l = 0; l < k; ++l)
        if (cnt[l] > 0) c.row(static_cast<Eigen::Index>(l)) = s.row(static_cast<Eigen::Index>(l)) / cnt[l];
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = lab;
    }
  }
  return best;
}

/// Rows of tau from hard labels, softened so every block keeps a little mass.
inline Matrix labels_to_tau(const std::vector<std::size_t>& lab, std::size_t Q, double eps = 1e-4) {
  Matrix t = Matrix::Constant(static_cast<Eigen::Index>(lab.size()), static_cast<Eigen::Index>(Q),
                              Q > 1 ? eps / static_cast<double>(Q - 1) : 0.0);
  for (std::size_t i = 0; i < lab.size(); ++i)
    t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(lab[i])) = Q > 1 ? 1.0 - eps : 1.0;
  return t;
}

/// k-means on the eigenvectors of the symmetrized observed adjacency with the
/// Q largest absolute eigenvalues, scaled by those eigenvalues.
inline std::vector<std::size_t> spectral_labels(const Network& net, std::size_t Q, Rng& rng) {
  const auto n = net.size();
  if (Q <= 1 || n <= 1) return std::vector<std::size_t>(static_cast<std::size_t>(n), 0);
  const Matrix sym = net.observed_edges() + net.observed_edges().transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(ev(a)) > std::abs(ev(b)); });
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(Q), n);
  Matrix emb(n, k);
  for (Eigen::Index j = 0; j < k; ++j) emb.col(j) = es.eigenvectors().col(order[j]) * ev(order[j]);
  return kmeans(emb, std::min<std::size_t>(Q, static_cast<std::size_t>(n)), rng);
}

inline std::vector<std::size_t> random_labels(Eigen::Index n, std::size_t Q, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, Q - 1);
  std::vector<std::size_t> lab(static_cast<std::size_t>(n));
  for (auto& l : lab) l = d(rng);
  return lab;
}

}  // namespace colsbm
