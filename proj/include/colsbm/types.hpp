#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace colsbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when dimensions or values violate a type invariant.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a rate or probability falls outside the emission domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class EmissionKind { bernoulli, poisson };

/// sep means one independent SBM per network; every other variant shares alpha.
enum class ModelVariant { iid, pi, delta, deltapi, sep };

inline constexpr bool has_free_pi(ModelVariant v) {
  return v == ModelVariant::pi || v == ModelVariant::deltapi;
}
inline constexpr bool has_delta(ModelVariant v) {
  return v == ModelVariant::delta || v == ModelVariant::deltapi;
}

inline std::string to_string(EmissionKind k) {
  return k == EmissionKind::bernoulli ? "bernoulli" : "poisson";
}

inline std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::iid: return "iid";
    case ModelVariant::pi: return "pi";
    case ModelVariant::delta: return "delta";
    case ModelVariant::deltapi: return "deltapi";
    case ModelVariant::sep: return "sep";
  }
  return "?";
}

inline EmissionKind parse_emission(std::string_view s) {
  if (s == "bernoulli" || s == "binary") return EmissionKind::bernoulli;
  if (s == "poisson" || s == "count") return EmissionKind::poisson;
  throw InvalidArgument("unknown emission kind: " + std::string(s));
}

inline ModelVariant parse_variant(std::string_view s) {
  if (s == "iid") return ModelVariant::iid;
  if (s == "pi") return ModelVariant::pi;
  if (s == "delta") return ModelVariant::delta;
  if (s == "deltapi") return ModelVariant::deltapi;
  if (s == "sep") return ModelVariant::sep;
  throw InvalidArgument("unknown model variant: " + std::string(s));
}

/// One network: adjacency, missing-dyad mask, direction.
///
/// The diagonal is never used. Unobserved dyads keep whatever value the
/// adjacency holds but are excluded from every dyad sum, so callers can mask
/// entries without destroying the ground truth.
class Network {
 public:
  Network() = default;

  Network(Matrix adjacency, bool directed, std::vector<std::string> labels = {})
      : Network(adjacency, Matrix::Ones(adjacency.rows(), adjacency.cols()), directed,
                std::move(labels)) {}

  Network(Matrix adjacency, Matrix observed, bool directed,
          std::vector<std::string> labels = {})
      : adjacency_(std::move(adjacency)),
        observed_(std::move(observed)),
        directed_(directed),
        labels_(std::move(labels)) {
    const auto n = adjacency_.rows();
    if (adjacency_.cols() != n || observed_.rows() != n || observed_.cols() != n)
      throw InvalidArgument("network matrices must be square and of equal size");
    if (labels_.empty()) {
      labels_.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) labels_.push_back(std::to_string(i));
    }
    if (static_cast<Eigen::Index>(labels_.size()) != n)
      throw InvalidArgument("node label count does not match network size");
    for (Eigen::Index i = 0; i < n; ++i) {
      observed_(i, i) = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double o = observed_(i, j);
        if (o != 0.0 && o != 1.0) throw InvalidArgument("observed mask must be 0/1");
        const double x = adjacency_(i, j);
        if (o == 1.0 && (x < 0.0 || x != std::floor(x) || !std::isfinite(x)))
          throw InvalidArgument("edge values must be nonnegative integers");
      }
    }
    if (!directed_) {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
          if (observed_(i, j) != observed_(j, i))
            throw InvalidArgument("undirected network has an asymmetric mask");
          if (observed_(i, j) == 1.0 && adjacency_(i, j) != adjacency_(j, i))
            throw InvalidArgument("undirected network has an asymmetric adjacency");
        }
    }
    edges_ = adjacency_.cwiseProduct(observed_);
    fully_observed_ = observed_.sum() == static_cast<double>(n) * static_cast<double>(n - 1);
    log_factorial_sum_ = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (edges_(i, j) > 1.0) log_factorial_sum_ += std::lgamma(edges_(i, j) + 1.0);
    if (!directed_) log_factorial_sum_ *= 0.5;
  }

  [[nodiscard]] Eigen::Index size() const { return adjacency_.rows(); }
  [[nodiscard]] const Matrix& adjacency() const { return adjacency_; }
  /// 0/1 mask with a zero diagonal.
  [[nodiscard]] const Matrix& observed() const { return observed_; }
  /// adjacency restricted to observed off-diagonal dyads.
  [[nodiscard]] const Matrix& observed_edges() const { return edges_; }
  [[nodiscard]] bool directed() const { return directed_; }
  [[nodiscard]] bool fully_observed() const { return fully_observed_; }
  [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }
  /// sum of log(x!) over observed dyads (each unordered pair once if undirected).
  [[nodiscard]] double log_factorial_sum() const { return log_factorial_sum_; }

  /// Number of observed dyads (ordered if directed, unordered otherwise).
  [[nodiscard]] double observed_dyads() const {
    const double s = observed_.sum();
    return directed_ ? s : 0.5 * s;
  }

  [[nodiscard]] bool is_binary() const {
    return (edges_.array() <= 1.0).all();
  }

 private:
  Matrix adjacency_;
  Matrix observed_;
  Matrix edges_;
  bool directed_ = true;
  bool fully_observed_ = true;
  double log_factorial_sum_ = 0.0;
  std::vector<std::string> labels_;
};

struct NetworkCollection {
  std::vector<Network> networks;
  EmissionKind emission = EmissionKind::bernoulli;

  NetworkCollection() = default;
  NetworkCollection(std::vector<Network> nets, EmissionKind kind)
      : networks(std::move(nets)), emission(kind) {
    validate();
  }

  void validate() const {
    if (networks.empty()) throw InvalidArgument("a collection needs at least one network");
    const bool d = networks.front().directed();
    for (const auto& net : networks) {
      if (net.directed() != d)
        throw InvalidArgument("all networks of a collection must share directedness");
      if (emission == EmissionKind::bernoulli && !net.is_binary())
        throw InvalidArgument("bernoulli collection contains non-binary edges");
    }
  }

  [[nodiscard]] std::size_t size() const { return networks.size(); }
  [[nodiscard]] bool directed() const { return networks.front().directed(); }

  /// Sub-collection in the given order.
  [[nodiscard]] NetworkCollection subset(const std::vector<std::size_t>& idx) const {
    NetworkCollection out;
    out.emission = emission;
    for (auto i : idx) out.networks.push_back(networks.at(i));
    return out;
  }
};

/// M x Q boolean matrix of blocks represented in each network.
class SupportMatrix {
 public:
  SupportMatrix() = default;
  SupportMatrix(std::size_t m, std::size_t q, bool value = true)
      : rows_(m), cols_(q), cells_(m * q, value ? 1 : 0) {}
  SupportMatrix(std::initializer_list<std::initializer_list<int>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    for (const auto& row : init) {
      if (row.size() != cols_) throw InvalidArgument("ragged support matrix");
      for (int v : row) cells_.push_back(v ? 1 : 0);
    }
  }

  static SupportMatrix all_true(std::size_t m, std::size_t q) { return {m, q, true}; }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] bool operator()(std::size_t m, std::size_t q) const {
    return cells_[m * cols_ + q] != 0;
  }
  void set(std::size_t m, std::size_t q, bool v) { cells_[m * cols_ + q] = v ? 1 : 0; }

  [[nodiscard]] std::size_t row_count(std::size_t m) const {
    std::size_t c = 0;
    for (std::size_t q = 0; q < cols_; ++q) c += (*this)(m, q);
    return c;
  }
  [[nodiscard]] std::size_t col_count(std::size_t q) const {
    std::size_t c = 0;
    for (std::size_t m = 0; m < rows_; ++m) c += (*this)(m, q);
    return c;
  }
  [[nodiscard]] bool is_all_true() const {
    for (auto c : cells_)
      if (!c) return false;
    return true;
  }
  /// Blocks present in network m, in increasing order.
  [[nodiscard]] std::vector<std::size_t> blocks_of(std::size_t m) const {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < cols_; ++q)
      if ((*this)(m, q)) out.push_back(q);
    return out;
  }
  /// (S^T S)_{qr} > 0: blocks q and r co-occur in some network.
  [[nodiscard]] bool co_occur(std::size_t q, std::size_t r) const {
    for (std::size_t m = 0; m < rows_; ++m)
      if ((*this)(m, q) && (*this)(m, r)) return true;
    return false;
  }

  [[nodiscard]] SupportMatrix permute_columns(const std::vector<std::size_t>& perm) const {
    SupportMatrix out(rows_, cols_, false);
    for (std::size_t m = 0; m < rows_; ++m)
      for (std::size_t q = 0; q < cols_; ++q) out.set(m, perm[q], (*this)(m, q));
    return out;
  }

  friend bool operator==(const SupportMatrix&, const SupportMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// theta_S: block proportions per network, shared connectivity, per-network density.
struct ColSbmParams {
  ModelVariant variant = ModelVariant::iid;
  std::size_t Q = 1;
  SupportMatrix S;
  Matrix pi;     // M x Q
  Matrix alpha;  // Q x Q
  Vector delta;  // M

  [[nodiscard]] std::size_t n_networks() const { return static_cast<std::size_t>(pi.rows()); }
  /// Emission rate delta_m * alpha_qr.
  [[nodiscard]] double rate(std::size_t m, std::size_t q, std::size_t r) const {
    return delta(static_cast<Eigen::Index>(m)) *
           alpha(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r));
  }
};

/// Per-network variational block-membership probabilities (n_m x Q each).
struct VariationalState {
  std::vector<Matrix> tau;
};

/// tau-weighted dyad sums of one network. For undirected networks each
/// unordered pair contributes once, split evenly between (q,r) and (r,q).
struct NetworkStats {
  Matrix e;   // Q x Q weighted edge sums
  Matrix n;   // Q x Q weighted observed-dyad counts
  Vector nq;  // expected block sizes
};

struct SufficientStats {
  std::vector<NetworkStats> per_network;
};

}  // namespace colsbm
