#pragma once

// Variational EM for the colSBM family: fixed-point VE-step, per-variant
// M-steps, the network-at-a-time VEM loop and initialization proposals.

#include "colsbm/model.hpp"
#include "colsbm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace colsbm {

struct VemConfig {
  double tol = 1e-6;  // relative ELBO change
  int max_iter = 500;
  double fixed_point_tol = 1e-6;
  int fixed_point_max_iter = 50;
  std::uint64_t seed = 0;
  /// Refine Bernoulli delta/deltapi M-steps by coordinate golden-section ascent.
  bool strict_bernoulli_delta = false;
};

struct Fit {
  ColSbmParams params;
  VariationalState state;
  double elbo = -std::numeric_limits<double>::infinity();
  int n_iterations = 0;
  bool converged = false;
  std::vector<double> elbo_trace;
};

/// Largest ELBO decrease observed between consecutive VEM iterations in this
/// process. Tests read it to check monotonicity across whole suites.
inline std::atomic<double>& max_elbo_drop() {
  static std::atomic<double> drop{0.0};
  return drop;
}

inline std::atomic<std::uint64_t>& vem_iteration_count() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

inline void record_elbo_step(double before, double after) {
  ++vem_iteration_count();
  const double d = before - after;
  auto& slot = max_elbo_drop();
  double cur = slot.load();
  while (d > cur && !slot.compare_exchange_weak(cur, d)) {
  }
}

inline constexpr double kBlockMassFloor = 1e-3;

/// Zero tau outside the support of network m and renormalize rows; rows with
/// no mass left are spread uniformly over the support.
inline Matrix project_to_support(const Matrix& tau, const SupportMatrix& S, std::size_t m) {
  Matrix out = tau;
  const auto blocks = S.blocks_of(m);
  for (std::size_t q = 0; q < S.cols(); ++q)
    if (!S(m, q)) out.col(static_cast<Eigen::Index>(q)).setZero();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0 && std::isfinite(s)) {
      out.row(i) /= s;
    } else {
      out.row(i).setZero();
      for (auto q : blocks) out(i, static_cast<Eigen::Index>(q)) = 1.0 / static_cast<double>(blocks.size());
    }
  }
  return out;
}

namespace detail {

/// Per-dyad log-density coefficients for the VE-step: an observed edge value
/// x contributes x * a + b (Poisson) or x * a + (1 - x) * b (Bernoulli).
inline void log_rate_tables(const ColSbmParams& p, std::size_t m, EmissionKind kind, Matrix& la,
                            Matrix& lb) {
  const auto Q = static_cast<Eigen::Index>(p.Q);
  la.resize(Q, Q);
  lb.resize(Q, Q);
  for (Eigen::Index q = 0; q < Q; ++q)
    for (Eigen::Index r = 0; r < Q; ++r) {
      const double rate = clamp_rate(p.rate(m, q, r), kind);
      la(q, r) = std::log(rate);
      lb(q, r) = kind == EmissionKind::bernoulli ? std::log1p(-rate) : -rate;
    }
}

/// One application of the fixed-point map using products of the current tau.
inline Matrix fixed_point_map(const Network& net, const ColSbmParams& p, std::size_t m,
                              EmissionKind kind, const StatProducts& prod, const Matrix& la,
                              const Matrix& lb) {
  const auto n = net.size();
  const auto Q = static_cast<Eigen::Index>(p.Q);
  Matrix score;
  if (kind == EmissionKind::bernoulli) {
    const Matrix b_tau = prod.o_tau - prod.a_tau;
    score = prod.a_tau * la.transpose() + b_tau * lb.transpose();
    if (net.directed()) {
      const Matrix bt_tau = prod.ot_tau - prod.at_tau;
      score += prod.at_tau * la + bt_tau * lb;
    }
  } else {
    score = prod.a_tau * la.transpose() + prod.o_tau * lb.transpose();
    if (net.directed()) score += prod.at_tau * la + prod.ot_tau * lb;
  }
  const auto blocks = p.S.blocks_of(m);
  Matrix out = Matrix::Zero(n, Q);
  std::vector<double> logs(blocks.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto q = static_cast<Eigen::Index>(blocks[k]);
      const double piq = std::max(p.pi(static_cast<Eigen::Index>(m), q),
                                  std::numeric_limits<double>::min());
      logs[k] = std::log(piq) + score(i, q);
      mx = std::max(mx, logs[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      logs[k] = std::exp(logs[k] - mx);
      s += logs[k];
    }
    for (std::size_t k = 0; k < blocks.size(); ++k)
      out(i, static_cast<Eigen::Index>(blocks[k])) = logs[k] / s;
  }
  return out;
}

}  // namespace detail

/// VE-step for network m: iterate the fixed-point system with theta fixed.
/// Each accepted iterate does not decrease the bound; when the plain update
/// would, it is damped towards the previous iterate.
inline Matrix ve_step(const Network& net, const ColSbmParams& p, std::size_t m,
                      const Matrix& tau_init, EmissionKind kind, const VemConfig& cfg) {
  Matrix la, lb;
  detail::log_rate_tables(p, m, kind, la, lb);
  Matrix tau = project_to_support(tau_init, p.S, m);
  if (p.S.row_count(m) == 1) return tau;
  StatProducts prod = stat_products(net, tau);
  double j = network_elbo(net, tau, network_stats(net, tau, prod), p, m, kind);
  for (int it = 0; it < cfg.fixed_point_max_iter; ++it) {
    const Matrix target = detail::fixed_point_map(net, p, m, kind, prod, la, lb);
    bool accepted = false;
    double weight = 1.0;
    for (int damp = 0; damp < 12 && !accepted; ++damp, weight *= 0.5) {
      Matrix cand = weight == 1.0 ? target : Matrix(weight * target + (1.0 - weight) * tau);
      StatProducts cprod = stat_products(net, cand);
      const double cj = network_elbo(net, cand, network_stats(net, cand, cprod), p, m, kind);
      if (cj >= j) {
        const double change = (cand - tau).cwiseAbs().maxCoeff();
        tau = std::move(cand);
        prod = std::move(cprod);
        j = cj;
        accepted = true;
        if (change < cfg.fixed_point_tol) return tau;
      }
    }
    if (!accepted) break;
  }
  return tau;
}

/// Floor vanishing supported proportions at kBlockMassFloor / n and renormalize.
inline void floor_proportions(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, const SupportMatrix& S,
                              std::size_t m, double n_nodes) {
  const double floor = kBlockMassFloor / std::max(n_nodes, 1.0);
  for (std::size_t q = 0; q < S.cols(); ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    if (!S(m, q))
      row(qi) = 0.0;
    else if (row(qi) < floor)
      row(qi) = floor;
  }
  row /= row.sum();
}

inline double total_expected_loglik(const NetworkCollection& col, const SufficientStats& st,
                                    const ColSbmParams& p) {
  double s = 0.0;
  for (std::size_t m = 0; m < col.size(); ++m)
    s += expected_complete_loglik(col.networks[m], st.per_network[m], p, m, col.emission);
  return s;
}

namespace detail {

/// Golden-section maximization of a concave function on [lo, hi].
template <typename F>
double golden_max(F&& f, double lo, double hi, int iters = 80) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && (b - a) > 1e-12 * std::max(1.0, std::abs(a)); ++i) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    }
  }
  return fc > fd ? c : d;
}

/// Bernoulli edge log-likelihood of delta_m for fixed alpha.
inline double delta_objective(const SufficientStats& st, const ColSbmParams& p, std::size_t m,
                              double dm) {
  double s = 0.0;
  const auto blocks = p.S.blocks_of(m);
  const auto& ns = st.per_network[m];
  for (auto q : blocks)
    for (auto r : blocks) {
      const double rate = clamp_rate(dm * p.alpha(q, r), EmissionKind::bernoulli);
      s += ns.e(q, r) * std::log(rate) + (ns.n(q, r) - ns.e(q, r)) * std::log1p(-rate);
    }
  return s;
}

inline double alpha_objective(const SufficientStats& st, const ColSbmParams& p, std::size_t q,
                              std::size_t r, double a) {
  double s = 0.0;
  for (std::size_t m = 0; m < st.per_network.size(); ++m) {
    if (!(p.S(m, q) && p.S(m, r))) continue;
    const auto& ns = st.per_network[m];
    const double rate = clamp_rate(p.delta(m) * a, EmissionKind::bernoulli);
    s += ns.e(q, r) * std::log(rate) + (ns.n(q, r) - ns.e(q, r)) * std::log1p(-rate);
  }
  return s;
}

/// Projected coordinate ascent on (delta, alpha) for Bernoulli emissions.
inline void refine_bernoulli_delta(const SufficientStats& st, ColSbmParams& p, bool symmetric,
                                   int sweeps = 20) {
  const auto M = p.n_networks();
  const double hi_rate = 1.0 - kProbFloor;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double gain = 0.0;
    for (std::size_t m = 1; m < M; ++m) {
      double amax = 0.0;
      double amin = std::numeric_limits<double>::infinity();
      for (auto q : p.S.blocks_of(m))
        for (auto r : p.S.blocks_of(m)) {
          amax = std::max(amax, p.alpha(q, r));
          amin = std::min(amin, p.alpha(q, r));
        }
      if (amax <= 0.0) continue;
      const double lo = kProbFloor / amin, hi = hi_rate / amax;
      if (!(hi > lo)) continue;
      auto f = [&](double d) { return delta_objective(st, p, m, d); };
      const double before = f(p.delta(m));
      const double cand = golden_max(f, lo, hi);
      const double after = f(cand);
      if (after > before) {
        gain += after - before;
        p.delta(m) = cand;
      }
    }
    for (std::size_t q = 0; q < p.Q; ++q)
      for (std::size_t r = symmetric ? q : 0; r < p.Q; ++r) {
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < M; ++m)
          if (p.S(m, q) && p.S(m, r)) {
            dmax = std::max(dmax, p.delta(m));
            dmin = std::min(dmin, p.delta(m));
          }
        if (dmax <= 0.0) continue;
        auto f = [&](double a) {
          double v = alpha_objective(st, p, q, r, a);
          if (symmetric && q != r) v *= 2.0;
          return v;
        };
        const double before = f(p.alpha(q, r));
        const double cand = golden_max(f, kProbFloor / dmin, hi_rate / dmax);
        const double after = f(cand);
        if (after > before) {
          gain += after - before;
          p.alpha(q, r) = cand;
          if (symmetric) p.alpha(r, q) = cand;
        }
      }
    if (gain < 1e-10) break;
  }
}

}  // namespace detail

/// M-step: maximize the bound in theta for fixed tau, given its sufficient
/// statistics. `previous` seeds the iterative delta/alpha updates and acts as a
/// fallback so the bound never decreases.
inline ColSbmParams m_step(const NetworkCollection& col, const SufficientStats& st,
                           ModelVariant variant, const SupportMatrix& S,
                           const ColSbmParams& previous, const VemConfig& cfg = {}) {
  const auto M = col.size();
  const auto Q = S.cols();
  const auto Qi = static_cast<Eigen::Index>(Q);
  const auto kind = col.emission;
  ColSbmParams p;
  p.variant = variant;
  p.Q = Q;
  p.S = S;
  p.pi = Matrix::Zero(static_cast<Eigen::Index>(M), Qi);
  p.delta = Vector::Ones(static_cast<Eigen::Index>(M));

  if (has_free_pi(variant)) {
    for (std::size_t m = 0; m < M; ++m) {
      const double nm = static_cast<double>(col.networks[m].size());
      for (std::size_t q = 0; q < Q; ++q)
        if (S(m, q)) p.pi(m, q) = st.per_network[m].nq(q) / nm;
      floor_proportions(p.pi.row(static_cast<Eigen::Index>(m)), S, m, nm);
    }
  } else {
    Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(Qi);
    double total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      pooled += st.per_network[m].nq.transpose();
      total += static_cast<double>(col.networks[m].size());
    }
    pooled /= total;
    floor_proportions(pooled, SupportMatrix::all_true(1, Q), 0, total);
    for (std::size_t m = 0; m < M; ++m) p.pi.row(static_cast<Eigen::Index>(m)) = pooled;
  }

  Matrix esum = Matrix::Zero(Qi, Qi), nsum = Matrix::Zero(Qi, Qi);
  for (std::size_t m = 0; m < M; ++m) {
    esum += st.per_network[m].e;
    nsum += st.per_network[m].n;
  }
  const auto clamp_alpha = [&](ColSbmParams& par) {
    for (Eigen::Index q = 0; q < Qi; ++q)
      for (Eigen::Index r = 0; r < Qi; ++r) {
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < M; ++m)
          if (S(m, q) && S(m, r)) {
            dmax = std::max(dmax, par.delta(m));
            dmin = std::min(dmin, par.delta(m));
          }
        if (dmax == 0.0) {
          // the pair never meets in any network: not a parameter of the model
          par.alpha(q, r) = 0.0;
          continue;
        }
        double lo = kProbFloor / dmin;
        double hi = kind == EmissionKind::bernoulli ? (1.0 - kProbFloor) / dmax
                                                   : std::numeric_limits<double>::infinity();
        if (hi < lo) hi = lo;
        par.alpha(q, r) = std::clamp(par.alpha(q, r), lo, hi);
      }
  };

  const bool symmetric = !col.directed();
  if (!has_delta(variant)) {
    p.alpha = previous.alpha.rows() == Qi ? previous.alpha : Matrix::Constant(Qi, Qi, 0.5);
    for (Eigen::Index q = 0; q < Qi; ++q)
      for (Eigen::Index r = 0; r < Qi; ++r)
        if (nsum(q, r) > 0.0) p.alpha(q, r) = esum(q, r) / nsum(q, r);
    clamp_alpha(p);
  } else {
    p.alpha = previous.alpha.rows() == Qi ? previous.alpha : Matrix::Constant(Qi, Qi, 0.5);
    if (previous.delta.size() == static_cast<Eigen::Index>(M) && has_delta(previous.variant))
      p.delta = previous.delta;
    for (int round = 0; round < 100; ++round) {
      const Matrix old_alpha = p.alpha;
      const Vector old_delta = p.delta;
      for (Eigen::Index q = 0; q < Qi; ++q)
        for (Eigen::Index r = 0; r < Qi; ++r) {
          double den = 0.0;
          for (std::size_t m = 0; m < M; ++m) den += st.per_network[m].n(q, r) * p.delta(m);
          if (den > 0.0) p.alpha(q, r) = esum(q, r) / den;
        }
      for (std::size_t m = 0; m < M; ++m) {
        double num = 0.0, den = 0.0;
        for (auto q : S.blocks_of(m))
          for (auto r : S.blocks_of(m)) {
            num += st.per_network[m].e(q, r);
            den += st.per_network[m].n(q, r) * p.alpha(q, r);
          }
        if (den > 0.0 && num > 0.0) p.delta(m) = num / den;
      }
      const double scale = p.delta(0);
      p.delta /= scale;
      p.alpha *= scale;
      const double da = ((p.alpha - old_alpha).cwiseAbs().array() /
                         old_alpha.cwiseAbs().array().max(1e-300)).maxCoeff();
      const double dd = ((p.delta - old_delta).cwiseAbs().array() /
                         old_delta.cwiseAbs().array().max(1e-300)).maxCoeff();
      if (std::max(da, dd) < 1e-8) break;
    }
    clamp_alpha(p);
    if (kind == EmissionKind::bernoulli && cfg.strict_bernoulli_delta)
      detail::refine_bernoulli_delta(st, p, symmetric);
  }

  // The clipped Bernoulli moment update and the proportion floors are not
  // exact maximizers; fall back on the previous parameters when they lose.
  const bool comparable = previous.pi.rows() == p.pi.rows() && previous.pi.cols() == p.pi.cols() &&
                          previous.alpha.rows() == Qi && previous.S == S &&
                          previous.delta.size() == p.delta.size();
  if (comparable) {
    const double now = total_expected_loglik(col, st, p);
    ColSbmParams keep = previous;
    keep.variant = variant;
    if (!has_delta(variant)) keep.delta.setOnes();
    const double before = total_expected_loglik(col, st, keep);
    if (now < before) {
      // keep previous alpha/delta, but the proportions can still move.
      ColSbmParams mixed = keep;
      mixed.pi = p.pi;
      if (total_expected_loglik(col, st, mixed) >= before) keep = mixed;
      if (has_delta(variant) && kind == EmissionKind::bernoulli)
        detail::refine_bernoulli_delta(st, keep, symmetric);
      return keep;
    }
  }
  return p;
}

inline ColSbmParams m_step(const NetworkCollection& col, const VariationalState& state,
                           ModelVariant variant, const SupportMatrix& S,
                           const ColSbmParams& previous, const VemConfig& cfg = {}) {
  return m_step(col, sufficient_stats(col, state), variant, S, previous, cfg);
}

/// Alternates VE sweeps (one network at a time, seeded random order) and
/// M-steps until the relative ELBO change drops below cfg.tol.
inline Fit run_vem(const NetworkCollection& col, ModelVariant variant, std::size_t Q,
                   const SupportMatrix& S, const VariationalState& tau_init,
                   const VemConfig& cfg, const std::optional<ColSbmParams>& start = {}) {
  const auto M = col.size();
  if (variant == ModelVariant::sep) throw InvalidArgument("run_vem fits joint variants only");
  if (S.rows() != M || S.cols() != Q || !validate_support(S))
    throw InvalidArgument("support matrix inconsistent with the collection");
  if ((variant == ModelVariant::iid || variant == ModelVariant::delta) && !S.is_all_true())
    throw InvalidArgument("iid and delta variants require an all-true support");
  if (tau_init.tau.size() != M) throw InvalidArgument("initial state has the wrong length");

  Fit fit;
  fit.state.tau.resize(M);
  SufficientStats st;
  st.per_network.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (tau_init.tau[m].rows() != col.networks[m].size() ||
        tau_init.tau[m].cols() != static_cast<Eigen::Index>(Q))
      throw InvalidArgument("initial tau has the wrong shape");
    fit.state.tau[m] = project_to_support(tau_init.tau[m], S, m);
    st.per_network[m] = network_stats(col.networks[m], fit.state.tau[m]);
  }

  ColSbmParams params;
  if (start) {
    params = *start;
    params.variant = variant;
  } else {
    ColSbmParams seed_params;
    seed_params.variant = ModelVariant::iid;
    seed_params.Q = Q;
    seed_params.S = S;
    params = m_step(col, st, variant, S, seed_params, cfg);
  }
  params = m_step(col, st, variant, S, params, cfg);

  const auto bound = [&] {
    double j = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      j += network_elbo(col.networks[m], fit.state.tau[m], st.per_network[m], params, m,
                        col.emission);
    return j;
  };
  double j = bound();
  fit.elbo_trace.push_back(j);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto m : order) {
      fit.state.tau[m] =
          ve_step(col.networks[m], params, m, fit.state.tau[m], col.emission, cfg);
      st.per_network[m] = network_stats(col.networks[m], fit.state.tau[m]);
      params = m_step(col, st, variant, S, params, cfg);
    }
    const double jn = bound();
    record_elbo_step(j, jn);
    fit.elbo_trace.push_back(jn);
    fit.n_iterations = it;
    const double change = std::abs(jn - j);
    j = jn;
    if (change <= cfg.tol * std::max(1.0, std::abs(jn))) {
      fit.converged = true;
      break;
    }
  }
  fit.params = std::move(params);
  fit.elbo = elbo(col, fit.state, fit.params);
  return fit;
}

/// Initial joint states from per-network fits with Q blocks: the identity
/// alignment first, then independent random column permutations per network.
inline std::vector<VariationalState> init_candidates(const std::vector<Matrix>& sep_taus,
                                                     std::size_t Q, std::size_t n_perm,
                                                     std::uint64_t seed) {
  std::vector<VariationalState> out;
  if (n_perm == 0) return out;
  VariationalState identity;
  identity.tau = sep_taus;
  out.push_back(identity);
  Rng rng(seed);
  std::vector<std::size_t> perm(Q);
  for (std::size_t k = 1; k < n_perm; ++k) {
    VariationalState st;
    for (const auto& t : sep_taus) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      st.tau.push_back(permute_columns(t, perm));
    }
    out.push_back(std::move(st));
  }
  return out;
}

inline std::vector<VariationalState> init_candidates(const std::vector<Fit>& sep_fits,
                                                     std::size_t Q, std::size_t n_perm,
                                                     std::uint64_t seed) {
  std::vector<Matrix> taus;
  for (const auto& f : sep_fits) {
    if (f.params.Q != Q) throw InvalidArgument("sep fit has the wrong number of blocks");
    taus.push_back(f.state.tau.front());
  }
  return init_candidates(taus, Q, n_perm, seed);
}

struct Candidate {
  VariationalState state;
  SupportMatrix S;
};

enum class Direction { split, merge };

namespace detail {

/// Move tau mass of block q to a new last column for the nodes selected by
/// `moved` in each network.
inline Candidate split_block(const Fit& fit, std::size_t q,
                             const std::vector<std::vector<bool>>& moved) {
  const auto Q = fit.params.Q;
  const auto qi = static_cast<Eigen::Index>(q);
  Candidate c;
  c.S = SupportMatrix(fit.params.S.rows(), Q + 1, false);
  for (std::size_t m = 0; m < c.S.rows(); ++m) {
    for (std::size_t r = 0; r < Q; ++r) c.S.set(m, r, fit.params.S(m, r));
    c.S.set(m, Q, fit.params.S(m, q));
  }
  for (std::size_t m = 0; m < fit.state.tau.size(); ++m) {
    const auto& t = fit.state.tau[m];
    Matrix nt = Matrix::Zero(t.rows(), static_cast<Eigen::Index>(Q + 1));
    nt.leftCols(static_cast<Eigen::Index>(Q)) = t;
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      if (moved[m][static_cast<std::size_t>(i)]) {
        nt(i, static_cast<Eigen::Index>(Q)) = t(i, qi);
        nt(i, qi) = 0.0;
      }
    c.state.tau.push_back(std::move(nt));
  }
  return c;
}

/// Empirical connection rates of each node towards every block, both
/// directions for directed networks, rescaled by the network density.
inline Matrix node_profiles(const Network& net, const Matrix& tau, double delta) {
  const auto prod = stat_products(net, tau);
  const auto Q = tau.cols();
  Matrix f(net.size(), net.directed() ? 2 * Q : Q);
  for (Eigen::Index i = 0; i < net.size(); ++i)
    for (Eigen::Index r = 0; r < Q; ++r) {
      const double o = prod.o_tau(i, r);
      f(i, r) = o > 1e-12 ? prod.a_tau(i, r) / (o * delta) : 0.0;
      if (net.directed()) {
        const double ot = prod.ot_tau(i, r);
        f(i, Q + r) = ot > 1e-12 ? prod.at_tau(i, r) / (ot * delta) : 0.0;
      }
    }
  return f;
}

/// Two-means on rows of `x`, seeded from the two mutually farthest points.
inline std::vector<int> two_means(const std::vector<Eigen::VectorXd>& x) {
  const auto n = x.size();
  std::vector<int> lab(n, 0);
  if (n < 2) return lab;
  std::size_t a = 0, b = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (x[i] - x[j]).squaredNorm();
      if (d > best) {
        best = d;
        a = i;
        b = j;
      }
    }
  if (best <= 0.0) return lab;
  Eigen::VectorXd c0 = x[a], c1 = x[b];
  for (int it = 0; it < 50; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int l = (x[i] - c1).squaredNorm() < (x[i] - c0).squaredNorm() ? 1 : 0;
      changed |= l != lab[i];
      lab[i] = l;
    }
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(c0.size()), s1 = s0;
    double n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (lab[i]) {
        s1 += x[i];
        ++n1;
      } else {
        s0 += x[i];
        ++n0;
      }
    }
    if (n0 == 0 || n1 == 0) break;
    c0 = s0 / n0;
    c1 = s1 / n1;
    if (!changed && it > 0) break;
  }
  return lab;
}

}  // namespace detail

/// Proposals with one more block (split) or one fewer (merge).
///
/// Splits: for each block, its nodes are bisected by tau mass in order of
/// their out-degree residual (degree minus the tau-weighted mean degree of
/// their blocks, ties by node index); a second proposal per block separates
/// its nodes by 2-means on their block connection profiles, pooled across
/// networks. Merges: every pair of blocks.
inline std::vector<Candidate> split_merge_candidates(const Fit& fit, const NetworkCollection& col,
                                                     Direction direction) {
  std::vector<Candidate> out;
  const auto Q = fit.params.Q;
  const auto M = fit.state.tau.size();
  if (direction == Direction::merge) {
    if (Q < 2) return out;
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t r = q + 1; r < Q; ++r) {
        Candidate c;
        c.S = SupportMatrix(M, Q - 1, false);
        std::vector<std::size_t> keep;
        for (std::size_t k = 0; k < Q; ++k)
          if (k != r) keep.push_back(k);
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t k = 0; k < keep.size(); ++k)
            c.S.set(m, k, fit.params.S(m, keep[k]) || (keep[k] == q && fit.params.S(m, r)));
        for (const auto& t : fit.state.tau) {
          Matrix nt(t.rows(), static_cast<Eigen::Index>(Q - 1));
          for (std::size_t k = 0; k < keep.size(); ++k)
            nt.col(static_cast<Eigen::Index>(k)) = t.col(static_cast<Eigen::Index>(keep[k]));
          const auto qi = static_cast<Eigen::Index>(q);
          nt.col(qi) += t.col(static_cast<Eigen::Index>(r));
          c.state.tau.push_back(std::move(nt));
        }
        out.push_back(std::move(c));
      }
    return out;
  }

  for (std::size_t q = 0; q < Q; ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    // degree-residual bisection
    std::vector<std::vector<bool>> moved(M);
    for (std::size_t m = 0; m < M; ++m) {
      const auto& net = col.networks[m];
      const auto& t = fit.state.tau[m];
      const auto n = net.size();
      moved[m].assign(static_cast<std::size_t>(n), false);
      Vector deg = net.observed_edges().rowwise().sum();
      Vector mass = t.colwise().sum().transpose();
      Vector block_mean = (t.transpose() * deg).cwiseQuotient(mass.cwiseMax(1e-300));
      Vector resid = deg - t * block_mean;
      std::vector<Eigen::Index> members;
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (t(i, qi) > 0.0) {
          members.push_back(i);
          total += t(i, qi);
        }
      std::stable_sort(members.begin(), members.end(), [&](Eigen::Index a, Eigen::Index b) {
        return resid(a) > resid(b);
      });
      double acc = 0.0;
      for (auto i : members) {
        if (acc >= 0.5 * total) break;
        moved[m][static_cast<std::size_t>(i)] = true;
        acc += t(i, qi);
      }
    }
    out.push_back(detail::split_block(fit, q, moved));

    // profile 2-means across the whole collection
    std::vector<Eigen::VectorXd> feats;
    std::vector<std::pair<std::size_t, Eigen::Index>> where;
    for (std::size_t m = 0; m < M; ++m) {
      const auto& t = fit.state.tau[m];
      const Matrix prof = detail::node_profiles(col.networks[m], t, fit.params.delta(m));
      for (Eigen::Index i = 0; i < t.rows(); ++i) {
        Eigen::Index arg;
        t.row(i).maxCoeff(&arg);
        if (arg == qi) {
          feats.emplace_back(prof.row(i).transpose());
          where.emplace_back(m, i);
        }
      }
    }
    if (feats.size() >= 2) {
      const auto lab = detail::two_means(feats);
      if (std::any_of(lab.begin(), lab.end(), [](int l) { return l == 1; })) {
        std::vector<std::vector<bool>> moved2(M);
        for (std::size_t m = 0; m < M; ++m)
          moved2[m].assign(static_cast<std::size_t>(fit.state.tau[m].rows()), false);
        for (std::size_t k = 0; k < lab.size(); ++k)
          if (lab[k]) moved2[where[k].first][static_cast<std::size_t>(where[k].second)] = true;
        out.push_back(detail::split_block(fit, q, moved2));
      }
    }
  }
  return out;
}

}  // namespace colsbm
