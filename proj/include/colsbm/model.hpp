#pragma once

// Emission densities, variational bound, parameter counting and the
// exhaustive likelihood used to check the bound on tiny instances.

#include "colsbm/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace colsbm {

inline constexpr double kProbFloor = 1e-9;

/// Clamp a rate into the emission domain before taking logs.
inline double clamp_rate(double rate, EmissionKind kind) {
  if (kind == EmissionKind::bernoulli) return std::clamp(rate, kProbFloor, 1.0 - kProbFloor);
  return std::max(rate, kProbFloor);
}

inline bool in_emission_domain(double rate, EmissionKind kind) {
  if (!std::isfinite(rate) || rate <= 0.0) return false;
  return kind == EmissionKind::poisson || rate < 1.0;
}

/// log f(x; rate).
inline double log_emission(double x, double rate, EmissionKind kind) {
  if (!in_emission_domain(rate, kind))
    throw DomainError("rate " + std::to_string(rate) + " outside the " + to_string(kind) +
                      " domain");
  if (x < 0.0 || x != std::floor(x)) throw DomainError("edge value must be a nonnegative integer");
  if (kind == EmissionKind::bernoulli) {
    if (x > 1.0) throw DomainError("bernoulli edge value must be 0 or 1");
    return x * std::log(rate) + (1.0 - x) * std::log1p(-rate);
  }
  return -rate + x * std::log(rate) - std::lgamma(x + 1.0);
}

/// x log x with 0 log 0 = 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline double entropy(const Matrix& tau) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < tau.cols(); ++j)
    for (Eigen::Index i = 0; i < tau.rows(); ++i) h -= xlogx(tau(i, j));
  return h;
}

inline double entropy(const VariationalState& state) {
  double h = 0.0;
  for (const auto& t : state.tau) h += entropy(t);
  return h;
}

/// Sum over j != i of tau_j, restricted to observed dyads: observed * tau.
inline Matrix observed_times(const Network& net, const Matrix& tau) {
  if (net.fully_observed()) {
    Matrix out = (-tau).eval();
    out.rowwise() += tau.colwise().sum();
    return out;
  }
  return net.observed() * tau;
}

/// e_qr, n_qr and n_q of one network. Products are returned so the VE-step can
/// reuse them.
struct StatProducts {
  Matrix a_tau;   // edges * tau
  Matrix o_tau;   // observed * tau
  Matrix at_tau;  // edges^T * tau (directed only)
  Matrix ot_tau;  // observed^T * tau (directed only)
};

inline StatProducts stat_products(const Network& net, const Matrix& tau) {
  StatProducts p;
  p.a_tau = net.observed_edges() * tau;
  p.o_tau = observed_times(net, tau);
  if (net.directed()) {
    p.at_tau = net.observed_edges().transpose() * tau;
    p.ot_tau = net.fully_observed() ? p.o_tau : Matrix(net.observed().transpose() * tau);
  }
  return p;
}

inline NetworkStats network_stats(const Network& net, const Matrix& tau, const StatProducts& p) {
  NetworkStats s;
  s.e = tau.transpose() * p.a_tau;
  s.n = tau.transpose() * p.o_tau;
  if (!net.directed()) {
    s.e *= 0.5;
    s.n *= 0.5;
  }
  s.nq = tau.colwise().sum().transpose();
  return s;
}

inline NetworkStats network_stats(const Network& net, const Matrix& tau) {
  return network_stats(net, tau, stat_products(net, tau));
}

inline SufficientStats sufficient_stats(const NetworkCollection& col, const VariationalState& st) {
  SufficientStats out;
  for (std::size_t m = 0; m < col.size(); ++m)
    out.per_network.push_back(network_stats(col.networks[m], st.tau[m]));
  return out;
}

/// Expected complete-data log-likelihood of network m, without the entropy.
inline double expected_complete_loglik(const Network& net, const NetworkStats& s,
                                       const ColSbmParams& p, std::size_t m,
                                       EmissionKind kind) {
  const auto blocks = p.S.blocks_of(m);
  double ll = 0.0;
  for (auto q : blocks) {
    for (auto r : blocks) {
      const double e = s.e(q, r);
      const double nn = s.n(q, r);
      if (nn == 0.0 && e == 0.0) continue;
      const double rate = clamp_rate(p.rate(m, q, r), kind);
      if (kind == EmissionKind::bernoulli)
        ll += e * std::log(rate) + (nn - e) * std::log1p(-rate);
      else
        ll += e * std::log(rate) - nn * rate;
    }
    const double piq = p.pi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q));
    if (s.nq(q) > 0.0) ll += s.nq(q) * std::log(std::max(piq, std::numeric_limits<double>::min()));
  }
  if (kind == EmissionKind::poisson) ll -= net.log_factorial_sum();
  return ll;
}

inline double network_elbo(const Network& net, const Matrix& tau, const NetworkStats& s,
                           const ColSbmParams& p, std::size_t m, EmissionKind kind) {
  return expected_complete_loglik(net, s, p, m, kind) + entropy(tau);
}

inline void check_dimensions(const NetworkCollection& col, const VariationalState& st,
                             const ColSbmParams& p) {
  const auto M = col.size();
  const auto Q = static_cast<Eigen::Index>(p.Q);
  if (st.tau.size() != M || static_cast<std::size_t>(p.pi.rows()) != M ||
      static_cast<std::size_t>(p.delta.size()) != M || p.S.rows() != M)
    throw InvalidArgument("collection, state and parameters disagree on the number of networks");
  if (p.pi.cols() != Q || p.alpha.rows() != Q || p.alpha.cols() != Q ||
      p.S.cols() != p.Q)
    throw InvalidArgument("parameters disagree on the number of blocks");
  for (std::size_t m = 0; m < M; ++m)
    if (st.tau[m].rows() != col.networks[m].size() || st.tau[m].cols() != Q)
      throw InvalidArgument("tau dimensions do not match network " + std::to_string(m));
}

/// Variational lower bound J(tau, theta).
inline double elbo(const NetworkCollection& col, const VariationalState& st,
                   const ColSbmParams& p) {
  check_dimensions(col, st, p);
  double j = 0.0;
  for (std::size_t m = 0; m < col.size(); ++m) {
    const auto s = network_stats(col.networks[m], st.tau[m]);
    j += network_elbo(col.networks[m], st.tau[m], s, p, m, col.emission);
  }
  return j;
}

inline bool validate_support(const SupportMatrix& S) {
  if (S.rows() == 0 || S.cols() == 0) return false;
  for (std::size_t m = 0; m < S.rows(); ++m)
    if (S.row_count(m) == 0) return false;
  for (std::size_t q = 0; q < S.cols(); ++q)
    if (S.col_count(q) == 0) return false;
  return true;
}

/// Number of connectivity parameters actually used by support S.
inline std::size_t count_alpha(const SupportMatrix& S, bool directed = true) {
  std::size_t c = 0;
  for (std::size_t q = 0; q < S.cols(); ++q)
    for (std::size_t r = directed ? 0 : q; r < S.cols(); ++r) c += S.co_occur(q, r);
  return c;
}

/// Free parameter count of a model. For sep, row m of S gives the blocks of
/// network m's own SBM. Undirected networks have a symmetric alpha.
inline std::size_t count_params(ModelVariant variant, std::size_t Q, const SupportMatrix& S,
                                std::size_t M, bool directed = true) {
  const auto full_alpha = [directed](std::size_t k) {
    return directed ? k * k : k * (k + 1) / 2;
  };
  switch (variant) {
    case ModelVariant::iid: return (Q - 1) + full_alpha(Q);
    case ModelVariant::delta: return (Q - 1) + full_alpha(Q) + (M - 1);
    case ModelVariant::pi:
    case ModelVariant::deltapi: {
      if (!validate_support(S) || S.cols() != Q || S.rows() != M)
        throw InvalidArgument("invalid support matrix");
      std::size_t c = 0;
      for (std::size_t m = 0; m < M; ++m) c += S.row_count(m) - 1;
      c += count_alpha(S, directed);
      if (variant == ModelVariant::deltapi) c += M - 1;
      return c;
    }
    case ModelVariant::sep: {
      if (!validate_support(S) || S.rows() != M) throw InvalidArgument("invalid support matrix");
      std::size_t c = 0;
      for (std::size_t m = 0; m < M; ++m) {
        const auto qm = S.row_count(m);
        c += (qm - 1) + full_alpha(qm);
      }
      return c;
    }
  }
  return 0;
}

/// Throws unless params satisfy the type invariants of its variant.
inline void validate_params(const ColSbmParams& p, EmissionKind kind, double tol = 1e-8) {
  const auto M = p.n_networks();
  if (p.S.rows() != M || p.S.cols() != p.Q) throw InvalidArgument("support has wrong shape");
  if (!validate_support(p.S)) throw InvalidArgument("support has an empty row or column");
  for (std::size_t m = 0; m < M; ++m) {
    const auto mi = static_cast<Eigen::Index>(m);
    double sum = 0.0;
    for (std::size_t q = 0; q < p.Q; ++q) {
      const double v = p.pi(mi, static_cast<Eigen::Index>(q));
      if (v < 0.0) throw InvalidArgument("negative block proportion");
      if (!p.S(m, q) && v != 0.0) throw InvalidArgument("block proportion outside support");
      if (p.S(m, q) && v <= 0.0) throw InvalidArgument("zero block proportion on support");
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) throw InvalidArgument("block proportions must sum to one");
    if ((p.variant == ModelVariant::iid || p.variant == ModelVariant::delta) &&
        (p.pi.row(mi) - p.pi.row(0)).cwiseAbs().maxCoeff() > tol)
      throw InvalidArgument("shared block proportions differ between networks");
  }
  if ((p.variant == ModelVariant::iid || p.variant == ModelVariant::delta) && !p.S.is_all_true())
    throw InvalidArgument("iid and delta variants require an all-true support");
  if (!has_delta(p.variant)) {
    if ((p.delta.array() - 1.0).abs().maxCoeff() > tol)
      throw InvalidArgument("density parameters must equal one for this variant");
  } else if (std::abs(p.delta(0) - 1.0) > tol) {
    throw InvalidArgument("the first density parameter must equal one");
  }
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t q = 0; q < p.Q; ++q)
      for (std::size_t r = 0; r < p.Q; ++r)
        if (p.S(m, q) && p.S(m, r) && !in_emission_domain(p.rate(m, q, r), kind))
          throw DomainError("delta * alpha outside the emission domain");
}

/// log(sum(exp(v))) for a span of values.
inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline constexpr Eigen::Index kOracleMaxNodes = 10;
inline constexpr std::size_t kOracleMaxBlocks = 3;

/// log p(X, Z) for one network and a hard assignment z (block indices).
inline double complete_loglik(const Network& net, const std::vector<std::size_t>& z,
                              const ColSbmParams& p, std::size_t m, EmissionKind kind) {
  const auto n = net.size();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    ll += std::log(p.pi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(z[i])));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = net.directed() ? 0 : i + 1; j < n; ++j) {
      if (i == j || net.observed()(i, j) == 0.0) continue;
      const double rate = clamp_rate(p.rate(m, z[i], z[j]), kind);
      ll += log_emission(net.adjacency()(i, j), rate, kind);
    }
  return ll;
}

/// Exact log-likelihood by enumerating every admissible block assignment.
inline double exact_loglik_oracle(const NetworkCollection& col, const ColSbmParams& p) {
  if (p.Q > kOracleMaxBlocks) throw InvalidArgument("oracle refuses more than 3 blocks");
  double total = 0.0;
  for (std::size_t m = 0; m < col.size(); ++m) {
    const auto& net = col.networks[m];
    const auto n = net.size();
    if (n > kOracleMaxNodes) throw InvalidArgument("oracle refuses networks above 10 nodes");
    const auto blocks = p.S.blocks_of(m);
    const auto k = blocks.size();
    std::vector<std::size_t> digits(static_cast<std::size_t>(n), 0);
    std::vector<std::size_t> z(static_cast<std::size_t>(n));
    std::vector<double> terms;
    while (true) {
      for (std::size_t i = 0; i < digits.size(); ++i) z[i] = blocks[digits[i]];
      terms.push_back(complete_loglik(net, z, p, m, col.emission));
      std::size_t pos = 0;
      while (pos < digits.size() && ++digits[pos] == k) digits[pos++] = 0;
      if (pos == digits.size()) break;
    }
    total += log_sum_exp(terms);
  }
  return total;
}

/// Relabel blocks: new block perm[q] takes the role of old block q.
inline ColSbmParams permute_blocks(const ColSbmParams& p, const std::vector<std::size_t>& perm) {
  ColSbmParams out = p;
  out.S = p.S.permute_columns(perm);
  for (std::size_t q = 0; q < p.Q; ++q) {
    out.pi.col(static_cast<Eigen::Index>(perm[q])) = p.pi.col(static_cast<Eigen::Index>(q));
    for (std::size_t r = 0; r < p.Q; ++r)
      out.alpha(static_cast<Eigen::Index>(perm[q]), static_cast<Eigen::Index>(perm[r])) =
          p.alpha(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r));
  }
  return out;
}

inline Matrix permute_columns(const Matrix& tau, const std::vector<std::size_t>& perm) {
  Matrix out(tau.rows(), tau.cols());
  for (std::size_t q = 0; q < perm.size(); ++q)
    out.col(static_cast<Eigen::Index>(perm[q])) = tau.col(static_cast<Eigen::Index>(q));
  return out;
}

inline VariationalState permute_blocks(const VariationalState& st,
                                       const std::vector<std::size_t>& perm) {
  VariationalState out;
  for (const auto& t : st.tau) out.tau.push_back(permute_columns(t, perm));
  return out;
}

/// Conditions under which the parameters are identifiable up to label
/// switching. Returns a description of each violated condition; empty means
/// all conditions hold.
inline std::vector<std::string> identifiability_violations(const ColSbmParams& p,
                                                           const std::vector<Eigen::Index>& sizes,
                                                           double tol = 1e-12) {
  std::vector<std::string> out;
  const auto M = p.n_networks();
  const auto Q = p.Q;
  const auto distinct = [tol](double a, double b) {
    return std::abs(a - b) > tol * std::max({1.0, std::abs(a), std::abs(b)});
  };
  const auto profile_distinct = [&](std::size_t m) {
    const auto blocks = p.S.blocks_of(m);
    Vector ap = p.alpha * p.pi.row(static_cast<Eigen::Index>(m)).transpose();
    for (std::size_t a = 0; a < blocks.size(); ++a)
      for (std::size_t b = a + 1; b < blocks.size(); ++b)
        if (!distinct(ap(blocks[a]), ap(blocks[b]))) return false;
    return true;
  };
  const auto diag_unique = [&] {
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t r = q + 1; r < Q; ++r)
        if (!distinct(p.alpha(q, q), p.alpha(r, r))) return false;
    return true;
  };

  switch (p.variant) {
    case ModelVariant::iid:
    case ModelVariant::delta: {
      bool big = false;
      for (std::size_t m = 0; m < M; ++m)
        big |= sizes[m] >= static_cast<Eigen::Index>(2 * Q) &&
               (p.variant == ModelVariant::iid || std::abs(p.delta(m) - 1.0) <= 1e-12);
      if (!big) out.emplace_back("no network with at least 2Q nodes (and unit density)");
      if (!profile_distinct(0)) out.emplace_back("alpha * pi has repeated entries");
      break;
    }
    case ModelVariant::pi:
    case ModelVariant::deltapi: {
      for (std::size_t m = 0; m < M; ++m)
        if (sizes[m] < static_cast<Eigen::Index>(2 * p.S.row_count(m)))
          out.push_back("network " + std::to_string(m) + " has fewer than 2 Q_m nodes");
      if (p.variant == ModelVariant::pi || Q >= 2) {
        for (std::size_t m = 0; m < M; ++m)
          if (!profile_distinct(m))
            out.push_back("alpha * pi^" + std::to_string(m) + " has repeated entries");
        if (!diag_unique()) out.emplace_back("diagonal of alpha has repeated entries");
      }
      if (p.variant == ModelVariant::deltapi) {
        if (std::abs(p.delta(0) - 1.0) > 1e-12) out.emplace_back("delta_1 differs from one");
        if (Q >= 2)
          for (std::size_t m = 0; m < M; ++m)
            if (p.S.row_count(m) < 2)
              out.push_back("network " + std::to_string(m) + " populates fewer than 2 blocks");
        if (Q >= 3) {
          const auto ratio_clash = [&] {
            for (std::size_t q = 0; q < Q; ++q)
              for (std::size_t r = 0; r < Q; ++r)
                for (std::size_t s = 0; s < Q; ++s)
                  for (std::size_t t = 0; t < Q; ++t) {
                    if (!((q != s || r != t) && (q != r || s != t))) continue;
                    if (!distinct(p.alpha(q, q) * p.alpha(t, t), p.alpha(s, s) * p.alpha(r, r)))
                      return true;
                  }
            return false;
          };
          if (ratio_clash()) out.emplace_back("ratios of diagonal alpha entries coincide");
          std::vector<bool> seen(Q, false);
          for (auto q : p.S.blocks_of(0)) seen[q] = true;
          for (std::size_t m = 1; m < M; ++m) {
            std::size_t overlap = 0;
            for (auto q : p.S.blocks_of(m)) overlap += seen[q];
            if (overlap < 2)
              out.push_back("network " + std::to_string(m) +
                            " shares fewer than 2 blocks with earlier networks");
            for (auto q : p.S.blocks_of(m)) seen[q] = true;
          }
        }
      }
      break;
    }
    case ModelVariant::sep: break;
  }
  return out;
}

}  // namespace colsbm
