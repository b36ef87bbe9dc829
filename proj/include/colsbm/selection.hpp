#pragma once

// BIC-L scoring, the stepwise model search and the sep-SBM baseline.

#include "colsbm/spectral.hpp"
#include "colsbm/vem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace colsbm {

struct SearchConfig {
  std::size_t q_min = 1;
  std::size_t q_max = 8;
  std::size_t best_k = 3;  // fits kept per Q
  std::vector<double> thresholds{0.0, 1e-3, 1e-2, 5e-2, 1e-1};
  std::size_t n_perm = 25;
  std::uint64_t seed = 0;
  std::size_t n_random_sep = 5;
  /// VEM iterations spent on every proposal before the best_k are run to convergence.
  int screen_iter = 5;
  int max_passes = 5;
  double pass_tol = 1e-4;
  VemConfig vem;
};

struct ScoredFit {
  Fit fit;
  double bic_l = -std::numeric_limits<double>::infinity();
  double N_M = 0.0;
};

/// Number of possible interactions over the collection.
inline double possible_interactions(const NetworkCollection& col) {
  double s = 0.0;
  for (const auto& net : col.networks) {
    const double n = static_cast<double>(net.size());
    s += col.directed() ? n * (n - 1) : n * (n - 1) / 2;
  }
  return s;
}

inline double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
         std::lgamma(static_cast<double>(n - k) + 1);
}

/// log p_Q(S) under uniform priors on each Q_m and on S given (Q_m).
inline double log_prior_support(const SupportMatrix& S, std::size_t Q) {
  if (!validate_support(S) || S.cols() != Q) throw InvalidArgument("invalid support matrix");
  double lp = -static_cast<double>(S.rows()) * std::log(static_cast<double>(Q));
  for (std::size_t m = 0; m < S.rows(); ++m) lp -= log_binomial(Q, S.row_count(m));
  return lp;
}

/// pen_pi + pen_alpha + pen_delta (+ pen_S) for a joint model.
inline double penalty(ModelVariant variant, std::size_t Q, const SupportMatrix& S,
                      const NetworkCollection& col) {
  const double nm = possible_interactions(col);
  const double log_nm = std::log(nm);
  const auto M = col.size();
  const bool directed = col.directed();
  const double full_alpha = directed ? double(Q * Q) : double(Q * (Q + 1) / 2);
  double pen = 0.0;
  switch (variant) {
    case ModelVariant::iid:
    case ModelVariant::delta: {
      double nodes = 0.0;
      for (const auto& net : col.networks) nodes += static_cast<double>(net.size());
      pen = static_cast<double>(Q - 1) * std::log(nodes) + full_alpha * log_nm;
      break;
    }
    case ModelVariant::pi:
    case ModelVariant::deltapi: {
      for (std::size_t m = 0; m < M; ++m)
        pen += static_cast<double>(S.row_count(m) - 1) *
               std::log(static_cast<double>(col.networks[m].size()));
      pen += static_cast<double>(count_alpha(S, directed)) * log_nm;
      pen -= 2.0 * log_prior_support(S, Q);
      break;
    }
    case ModelVariant::sep: throw InvalidArgument("sep is scored network by network");
  }
  if (has_delta(variant)) pen += static_cast<double>(M - 1) * log_nm;
  return pen;
}

inline double bic_l(const Fit& fit, const NetworkCollection& col) {
  return fit.elbo - 0.5 * penalty(fit.params.variant, fit.params.Q, fit.params.S, col);
}

inline ScoredFit score(Fit fit, const NetworkCollection& col) {
  ScoredFit s;
  s.bic_l = bic_l(fit, col);
  s.N_M = possible_interactions(col);
  s.fit = std::move(fit);
  return s;
}

/// Thresholded supports of the fitted proportions, repaired so that every row
/// and column keeps its largest proportion.
inline std::vector<SupportMatrix> support_candidates(const ColSbmParams& p,
                                                     const std::vector<double>& thresholds) {
  std::vector<SupportMatrix> out;
  const auto M = p.n_networks();
  const auto Q = p.Q;
  for (double t : thresholds) {
    SupportMatrix S(M, Q, false);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t q = 0; q < Q; ++q) S.set(m, q, p.pi(m, q) > t);
    for (std::size_t m = 0; m < M; ++m)
      if (S.row_count(m) == 0) {
        Eigen::Index arg;
        p.pi.row(static_cast<Eigen::Index>(m)).maxCoeff(&arg);
        S.set(m, static_cast<std::size_t>(arg), true);
      }
    for (std::size_t q = 0; q < Q; ++q)
      if (S.col_count(q) == 0) {
        Eigen::Index arg;
        p.pi.col(static_cast<Eigen::Index>(q)).maxCoeff(&arg);
        S.set(static_cast<std::size_t>(arg), q, true);
      }
    if (std::find(out.begin(), out.end(), S) == out.end()) out.push_back(std::move(S));
  }
  return out;
}

inline std::vector<SupportMatrix> support_candidates(const Fit& fit,
                                                     const std::vector<double>& thresholds) {
  return support_candidates(fit.params, thresholds);
}

/// Hard labels of every network agree up to one common relabeling.
inline bool same_clustering(const VariationalState& a, const VariationalState& b) {
  if (a.tau.size() != b.tau.size()) return false;
  std::map<Eigen::Index, Eigen::Index> fwd, back;
  for (std::size_t m = 0; m < a.tau.size(); ++m) {
    if (a.tau[m].rows() != b.tau[m].rows()) return false;
    for (Eigen::Index i = 0; i < a.tau[m].rows(); ++i) {
      Eigen::Index x, y;
      a.tau[m].row(i).maxCoeff(&x);
      b.tau[m].row(i).maxCoeff(&y);
      const auto f = fwd.emplace(x, y).first;
      const auto g = back.emplace(y, x).first;
      if (f->second != y || g->second != x) return false;
    }
  }
  return true;
}

/// Proposal for a joint fit: initial tau, support, optional warm parameters.
struct Proposal {
  VariationalState state;
  SupportMatrix S;
  std::optional<ColSbmParams> start;
};

namespace detail {

/// Insert into a list kept sorted by decreasing BIC-L with at most k entries;
/// near-identical fits (same clustering and support) keep the better copy.
inline void keep_best(std::vector<ScoredFit>& kept, ScoredFit f, std::size_t k) {
  for (auto& g : kept) {
    if (g.fit.params.S == f.fit.params.S && same_clustering(g.fit.state, f.fit.state)) {
      if (f.bic_l > g.bic_l) g = std::move(f);
      std::stable_sort(kept.begin(), kept.end(),
                       [](const ScoredFit& a, const ScoredFit& b) { return a.bic_l > b.bic_l; });
      return;
    }
  }
  kept.push_back(std::move(f));
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ScoredFit& a, const ScoredFit& b) { return a.bic_l > b.bic_l; });
  if (kept.size() > k) kept.resize(k);
}

/// Short VEM runs on every proposal, then the best `keep` of them (by BIC-L)
/// resumed to convergence.
inline std::vector<ScoredFit> evaluate(const NetworkCollection& col, ModelVariant variant,
                                       const std::vector<Proposal>& props, const SearchConfig& cfg,
                                       std::uint64_t seed, std::size_t keep) {
  std::vector<ScoredFit> screened(props.size());
  const bool screen = cfg.screen_iter > 0 && props.size() > keep;
  parallel_for(props.size(), [&](std::size_t i) {
    VemConfig vc = cfg.vem;
    vc.seed = derive_seed(seed, {i, 0});
    if (screen) vc.max_iter = cfg.screen_iter;
    const auto& p = props[i];
    screened[i] = score(run_vem(col, variant, p.S.cols(), p.S, p.state, vc, p.start), col);
  });
  if (!screen) return screened;
  std::vector<std::size_t> order(props.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return screened[a].bic_l > screened[b].bic_l;
  });
  order.resize(std::min(keep, order.size()));
  std::vector<ScoredFit> out(order.size());
  parallel_for(order.size(), [&](std::size_t j) {
    const auto& s = screened[order[j]];
    if (s.fit.converged) {
      out[j] = s;
      return;
    }
    VemConfig vc = cfg.vem;
    vc.seed = derive_seed(seed, {order[j], 1});
    const int used = s.fit.n_iterations;
    vc.max_iter = std::max(1, cfg.vem.max_iter - used);
    Fit f = run_vem(col, variant, s.fit.params.Q, s.fit.params.S, s.fit.state, vc, s.fit.params);
    f.n_iterations += used;
    out[j] = score(std::move(f), col);
  });
  return out;
}

}  // namespace detail

struct SearchResult {
  ScoredFit best;
  /// per_q[Q] holds the kept fits with Q blocks, best first (index 0 unused).
  std::vector<std::vector<ScoredFit>> per_q;
  bool reached_q_max = false;
  int passes = 0;
};

/// Per-network SBM paths: for each network, the best single-network fit at
/// every Q in [q_min, q_max].
using SepPath = std::vector<std::vector<ScoredFit>>;

/// Best single-network fit with Q blocks from spectral and random starts.
inline ScoredFit fit_sbm(const Network& net, EmissionKind kind, std::size_t Q,
                         const SearchConfig& cfg, std::uint64_t seed) {
  NetworkCollection one;
  one.emission = kind;
  one.networks.push_back(net);
  const auto S = SupportMatrix::all_true(1, Q);
  std::vector<VariationalState> starts;
  Rng rng(seed);
  starts.push_back({{labels_to_tau(spectral_labels(net, Q, rng), Q)}});
  if (Q > 1)
    for (std::size_t k = 0; k < cfg.n_random_sep; ++k)
      starts.push_back({{labels_to_tau(random_labels(net.size(), Q, rng), Q)}});
  std::vector<ScoredFit> fits(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    VemConfig vc = cfg.vem;
    vc.seed = derive_seed(seed, {i});
    fits[i] = score(run_vem(one, ModelVariant::iid, Q, S, starts[i], vc), one);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i)
    if (fits[i].fit.elbo > fits[best].fit.elbo) best = i;
  return fits[best];
}

inline SepPath sep_paths(const NetworkCollection& col, const SearchConfig& cfg) {
  SepPath path(col.size());
  parallel_for(col.size(), [&](std::size_t m) {
    path[m].resize(cfg.q_max + 1);
    for (std::size_t Q = cfg.q_min; Q <= cfg.q_max; ++Q)
      path[m][Q] = fit_sbm(col.networks[m], col.emission, Q, cfg, derive_seed(cfg.seed, {7, m, Q}));
  });
  return path;
}

namespace detail {

inline void add_support_proposals(const std::vector<ScoredFit>& fits, const SearchConfig& cfg,
                                  std::vector<Proposal>& props) {
  for (const auto& f : fits) {
    for (auto& S : support_candidates(f.fit, cfg.thresholds)) {
      if (S == f.fit.params.S) continue;
      ColSbmParams start = f.fit.params;
      start.S = S;
      for (std::size_t m = 0; m < S.rows(); ++m) {
        for (std::size_t q = 0; q < S.cols(); ++q)
          if (!S(m, q)) start.pi(m, q) = 0.0;
        floor_proportions(start.pi.row(static_cast<Eigen::Index>(m)), S, m,
                          static_cast<double>(f.fit.state.tau[m].rows()));
      }
      Proposal p;
      p.S = S;
      for (std::size_t m = 0; m < S.rows(); ++m)
        p.state.tau.push_back(project_to_support(f.fit.state.tau[m], S, m));
      p.start = std::move(start);
      props.push_back(std::move(p));
    }
  }
}

}  // namespace detail

/// Stepwise search over Q (and S for the pi variants): sep-SBM seeded starts,
/// then forward splits and backward merges while the best BIC-L improves.
inline SearchResult model_search(const NetworkCollection& col, ModelVariant variant,
                                 const SearchConfig& cfg, const SepPath* sep = nullptr) {
  if (variant == ModelVariant::sep) throw InvalidArgument("use fit_sep_sbm for the sep variant");
  if (cfg.q_min < 1 || cfg.q_max < cfg.q_min) throw InvalidArgument("invalid Q range");
  const auto M = col.size();
  const bool free_support = has_free_pi(variant);
  SepPath own;
  if (!sep) {
    own = sep_paths(col, cfg);
    sep = &own;
  }
  SearchResult res;
  res.per_q.resize(cfg.q_max + 1);
  const auto merge_in = [&](std::size_t Q, std::vector<ScoredFit> fits) {
    for (auto& f : fits) detail::keep_best(res.per_q[Q], std::move(f), cfg.best_k);
  };
  const auto refine_supports = [&](std::size_t Q, std::uint64_t seed) {
    if (!free_support || Q < 2) return;
    std::vector<Proposal> props;
    detail::add_support_proposals(res.per_q[Q], cfg, props);
    if (!props.empty()) merge_in(Q, detail::evaluate(col, variant, props, cfg, seed, cfg.best_k));
  };

  for (std::size_t Q = cfg.q_min; Q <= cfg.q_max; ++Q) {
    std::vector<Matrix> taus;
    for (std::size_t m = 0; m < M; ++m) taus.push_back((*sep)[m][Q].fit.state.tau[0]);
    const std::size_t n_perm = (M == 1 || Q == 1) ? 1 : cfg.n_perm;
    const auto inits = init_candidates(taus, Q, n_perm, derive_seed(cfg.seed, {1, Q}));
    std::vector<Proposal> props;
    for (const auto& st : inits) props.push_back({st, SupportMatrix::all_true(M, Q), std::nullopt});
    merge_in(Q, detail::evaluate(col, variant, props, cfg, derive_seed(cfg.seed, {2, Q}), cfg.best_k));
    refine_supports(Q, derive_seed(cfg.seed, {3, Q}));
  }

  const auto best_overall = [&] {
    double b = -std::numeric_limits<double>::infinity();
    for (std::size_t Q = cfg.q_min; Q <= cfg.q_max; ++Q)
      if (!res.per_q[Q].empty()) b = std::max(b, res.per_q[Q].front().bic_l);
    return b;
  };

  double best = best_overall();
  for (int pass = 1; pass <= cfg.max_passes; ++pass) {
    res.passes = pass;
    const auto up = static_cast<std::uint64_t>(pass);
    for (std::size_t Q = cfg.q_min + 1; Q <= cfg.q_max; ++Q) {
      std::vector<Proposal> props;
      for (const auto& f : res.per_q[Q - 1])
        for (auto& c : split_merge_candidates(f.fit, col, Direction::split))
          props.push_back({std::move(c.state), std::move(c.S), std::nullopt});
      merge_in(Q, detail::evaluate(col, variant, props, cfg, derive_seed(cfg.seed, {4, up, Q}),
                                   cfg.best_k));
      refine_supports(Q, derive_seed(cfg.seed, {5, up, Q}));
    }
    for (std::size_t Q = cfg.q_max - 1; Q >= cfg.q_min && Q >= 1; --Q) {
      std::vector<Proposal> props;
      for (const auto& f : res.per_q[Q + 1])
        for (auto& c : split_merge_candidates(f.fit, col, Direction::merge))
          props.push_back({std::move(c.state), std::move(c.S), std::nullopt});
      merge_in(Q, detail::evaluate(col, variant, props, cfg, derive_seed(cfg.seed, {6, up, Q}),
                                   cfg.best_k));
      refine_supports(Q, derive_seed(cfg.seed, {8, up, Q}));
    }
    const double now = best_overall();
    const bool improved = now - best >= cfg.pass_tol;
    best = std::max(best, now);
    if (!improved) break;
  }

  for (std::size_t Q = cfg.q_min; Q <= cfg.q_max; ++Q)
    if (!res.per_q[Q].empty() && res.per_q[Q].front().bic_l > res.best.bic_l)
      res.best = res.per_q[Q].front();
  res.reached_q_max = res.best.fit.params.Q == cfg.q_max;
  return res;
}

struct SepResult {
  std::vector<ScoredFit> per_network;  // selected fit of each network
  SepPath path;                        // best fit of each network at every Q
  double bic_l = 0.0;
};

/// Independent SBMs: each network gets its own stepwise search; the
/// collection score is the sum of the per-network maxima.
inline SepResult fit_sep_sbm(const NetworkCollection& col, const SearchConfig& cfg) {
  SepResult out;
  out.path = sep_paths(col, cfg);
  out.per_network.resize(col.size());
  parallel_for(col.size(), [&](std::size_t m) {
    const auto one = col.subset({m});
    SepPath single{out.path[m]};
    SearchConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {9, m});
    auto res = model_search(one, ModelVariant::iid, c, &single);
    for (std::size_t Q = cfg.q_min; Q <= cfg.q_max; ++Q)
      if (!res.per_q[Q].empty() && res.per_q[Q].front().bic_l > out.path[m][Q].bic_l)
        out.path[m][Q] = res.per_q[Q].front();
    out.per_network[m] = std::move(res.best);
  });
  for (const auto& f : out.per_network) out.bic_l += f.bic_l;
  return out;
}

struct CompareReport {
  std::map<ModelVariant, SearchResult> joint;
  SepResult sep;
  ModelVariant winner = ModelVariant::sep;
  bool common_structure = false;
};

/// Fits the four joint variants and the sep baseline. Ties go to the simpler
/// model (order iid, pi, delta, deltapi, then sep).
inline CompareReport compare_variants(const NetworkCollection& col, const SearchConfig& cfg) {
  CompareReport r;
  r.sep = fit_sep_sbm(col, cfg);
  double best = -std::numeric_limits<double>::infinity();
  for (auto v : {ModelVariant::iid, ModelVariant::pi, ModelVariant::delta, ModelVariant::deltapi}) {
    auto res = model_search(col, v, cfg, &r.sep.path);
    if (res.best.bic_l > best + 1e-6) {
      best = res.best.bic_l;
      r.winner = v;
    }
    r.joint.emplace(v, std::move(res));
  }
  r.common_structure = best > r.sep.bic_l;
  if (!r.common_structure) r.winner = ModelVariant::sep;
  return r;
}

}  // namespace colsbm
