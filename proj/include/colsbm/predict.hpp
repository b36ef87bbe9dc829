#pragma once

// Link and dyad prediction from a fitted model, masking experiments and
// ROC-AUC scoring.

#include "colsbm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace colsbm {

/// p_ij = sum over supported (q,r) of tau_iq tau_jr delta_m alpha_qr, zero
/// diagonal. Bernoulli values are clamped to [0,1]; Poisson gives expected counts.
inline Matrix link_probabilities(const Fit& fit, std::size_t m, EmissionKind kind) {
  const auto& p = fit.params;
  if (m >= p.n_networks() || m >= fit.state.tau.size()) throw InvalidArgument("network index out of range");
  const auto Q = static_cast<Eigen::Index>(p.Q);
  Matrix tau = fit.state.tau[m];
  for (Eigen::Index q = 0; q < Q; ++q)
    if (!p.S(m, static_cast<std::size_t>(q))) tau.col(q).setZero();
  Matrix out = tau * (p.delta(static_cast<Eigen::Index>(m)) * p.alpha) * tau.transpose();
  out.diagonal().setZero();
  if (kind == EmissionKind::bernoulli) out = out.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

enum class MaskMode { links, dyads };

inline std::string to_string(MaskMode m) { return m == MaskMode::links ? "links" : "dyads"; }

inline MaskMode parse_mask_mode(std::string_view s) {
  if (s == "links") return MaskMode::links;
  if (s == "dyads") return MaskMode::dyads;
  throw InvalidArgument("unknown mask mode: " + std::string(s));
}

struct MaskSpec {
  std::size_t target_network = 0;
  double fraction = 0.0;
  MaskMode mode = MaskMode::links;
  std::uint64_t seed = 0;
};

struct Dyad {
  Eigen::Index i;
  Eigen::Index j;
};

/// Positions to score and their true values.
struct MaskedNetwork {
  Network network;
  std::vector<Dyad> dyads;
  std::vector<double> truth;
};

/// links: a random K-fraction of the observed links become 0 and the truth is
/// those links plus every observed non-link. dyads: a random K-fraction of the
/// observed dyads become missing and the truth is their values. Undirected
/// networks are handled on pairs i<j.
inline MaskedNetwork mask_network(const Network& net, const MaskSpec& spec) {
  if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0)) throw InvalidArgument("mask fraction must lie in [0,1]");
  const auto n = net.size();
  const bool directed = net.directed();
  std::vector<Dyad> ones, zeros, all;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = directed ? 0 : i + 1; j < n; ++j) {
      if (i == j || net.observed()(i, j) == 0.0) continue;
      all.push_back({i, j});
      (net.adjacency()(i, j) > 0.0 ? ones : zeros).push_back({i, j});
    }
  Rng rng(spec.seed);
  auto& pool = spec.mode == MaskMode::links ? ones : all;
  const auto k = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(pool.size()) + 1e-9));
  MaskedNetwork out;
  if (k == 0) {
    if (spec.fraction > 0.0) std::cerr << "warning: mask removes no dyad\n";
    out.network = net;
    return out;
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  Matrix adj = net.adjacency();
  Matrix obs = net.observed();
  for (auto t : idx) {
    const auto [i, j] = pool[t];
    out.dyads.push_back(pool[t]);
    out.truth.push_back(net.adjacency()(i, j));
    if (spec.mode == MaskMode::links) {
      adj(i, j) = 0.0;
      if (!directed) adj(j, i) = 0.0;
    } else {
      obs(i, j) = 0.0;
      if (!directed) obs(j, i) = 0.0;
    }
  }
  if (spec.mode == MaskMode::links)
    for (const auto& d : zeros) {
      out.dyads.push_back(d);
      out.truth.push_back(0.0);
    }
  out.network = Network(std::move(adj), std::move(obs), directed, net.labels());
  return out;
}

/// Mann-Whitney estimate of the area under the ROC curve, ties counting 1/2.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e < order.size() && scores[order[e]] == scores[order[s]]) ++e;
    const double avg = 0.5 * static_cast<double>(s + 1 + e);
    for (std::size_t t = s; t < e; ++t) {
      if (labels[order[t]] != 0 && labels[order[t]] != 1) throw InvalidArgument("labels must be 0 or 1");
      if (labels[order[t]] == 1) {
        pos += 1;
        rank_sum += avg;
      } else {
        neg += 1;
      }
    }
    s = e;
  }
  if (pos == 0 || neg == 0) throw InvalidArgument("roc_auc needs both classes");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

/// AUC of a fit's predictions on the masked positions of network m.
inline double masked_auc(const Fit& fit, std::size_t m, const MaskedNetwork& mk, EmissionKind kind) {
  const Matrix p = link_probabilities(fit, m, kind);
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t t = 0; t < mk.dyads.size(); ++t) {
    s.push_back(p(mk.dyads[t].i, mk.dyads[t].j));
    y.push_back(mk.truth[t] > 0.0 ? 1 : 0);
  }
  return roc_auc(s, y);
}

struct PredictConfig {
  std::size_t target = 0;
  std::vector<double> k_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::size_t replicates = 30;
  MaskMode mode = MaskMode::links;
  std::vector<ModelVariant> models{ModelVariant::iid, ModelVariant::pi, ModelVariant::sep};
  SearchConfig search;
};

struct PredictRow {
  std::size_t replicate;
  double K;
  MaskMode mode;
  ModelVariant model;
  double auc;
  std::size_t q_hat;
};

/// Masks the target network, re-selects every model on the masked collection
/// and scores its predictions. Rows are ordered by (K, replicate, model).
inline std::vector<PredictRow> prediction_experiment(const NetworkCollection& col, const PredictConfig& cfg) {
  if (cfg.target >= col.size()) throw InvalidArgument("target network out of range");
  const auto nk = cfg.k_grid.size();
  std::vector<std::vector<PredictRow>> slots(nk * cfg.replicates);
  parallel_for(slots.size(), [&](std::size_t s) {
    const auto ki = s / cfg.replicates, rep = s % cfg.replicates;
    MaskSpec spec{cfg.target, cfg.k_grid[ki], cfg.mode, derive_seed(cfg.search.seed, {11, ki, rep})};
    const auto mk = mask_network(col.networks[cfg.target], spec);
    if (mk.dyads.empty()) return;
    NetworkCollection masked = col;
    masked.networks[cfg.target] = mk.network;
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.search.seed, {12, ki, rep});
    const auto sep = sep_paths(masked, sc);
    for (auto v : cfg.models) {
      PredictRow row{rep, cfg.k_grid[ki], cfg.mode, v, 0.0, 0};
      if (v == ModelVariant::sep) {
        SepPath single{sep[cfg.target]};
        const auto res = model_search(masked.subset({cfg.target}), ModelVariant::iid, sc, &single);
        row.auc = masked_auc(res.best.fit, 0, mk, col.emission);
        row.q_hat = res.best.fit.params.Q;
      } else {
        const auto res = model_search(masked, v, sc, &sep);
        row.auc = masked_auc(res.best.fit, cfg.target, mk, col.emission);
        row.q_hat = res.best.fit.params.S.row_count(cfg.target);
      }
      slots[s].push_back(row);
    }
  });
  std::vector<PredictRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

}  // namespace colsbm
