#pragma once

// Simulation scenarios: parameter recipes, the fits they call for, and tidy
// result tables with per-grid-value summaries.

#include "colsbm/partition.hpp"
#include "colsbm/predict.hpp"
#include "colsbm/selection.hpp"
#include "colsbm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace colsbm {

enum class Scenario { table_s1, table_s2, partition_fig, finer_blocks, size_study };

inline Scenario parse_scenario(std::string_view s) {
  if (s == "table_s1") return Scenario::table_s1;
  if (s == "table_s2") return Scenario::table_s2;
  if (s == "partition_fig") return Scenario::partition_fig;
  if (s == "finer_blocks") return Scenario::finer_blocks;
  if (s == "size_study") return Scenario::size_study;
  throw InvalidArgument("unknown scenario: " + std::string(s));
}

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::table_s1: return "table_s1";
    case Scenario::table_s2: return "table_s2";
    case Scenario::partition_fig: return "partition_fig";
    case Scenario::finer_blocks: return "finer_blocks";
    case Scenario::size_study: return "size_study";
  }
  return "?";
}

struct ScenarioConfig {
  Scenario scenario = Scenario::table_s1;
  std::vector<double> grid;  // empty: the scenario's default grid
  std::size_t replicates = 30;
  std::uint64_t seed = 0;
  /// Joint variants to fit where the scenario lets the variant vary.
  std::vector<ModelVariant> variants;
  SearchConfig search = [] {
    SearchConfig c;
    c.q_max = 6;
    return c;
  }();
};

/// Numeric table with named columns; NaN marks a value that does not apply.
/// Columns listed in `levels` hold integer codes printed as those names.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::vector<std::string>> levels;

  [[nodiscard]] std::size_t col(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InvalidArgument("no column " + name);
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline void write_csv(const Table& t, std::ostream& os) {
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n' << std::setprecision(10);
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) os << ',';
      const auto lv = t.levels.find(t.columns[c]);
      if (std::isnan(r[c])) os << "NA";
      else if (lv != t.levels.end()) os << lv->second.at(static_cast<std::size_t>(r[c]));
      else os << r[c];
    }
    os << '\n';
  }
}

inline void write_csv(const Table& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  write_csv(t, f);
}

/// Mean and sd of every metric column for each distinct value of the key
/// columns; NaN entries are skipped.
inline Table summarize(const Table& t, const std::vector<std::string>& keys,
                       const std::vector<std::string>& skip = {"replicate"}) {
  std::vector<std::size_t> kc, mc;
  for (const auto& k : keys) kc.push_back(t.col(k));
  Table out;
  out.columns = keys;
  out.columns.push_back("n");
  for (const auto& k : keys)
    if (t.levels.count(k)) out.levels[k] = t.levels.at(k);
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const auto& name = t.columns[c];
    if (std::find(keys.begin(), keys.end(), name) != keys.end() ||
        std::find(skip.begin(), skip.end(), name) != skip.end())
      continue;
    mc.push_back(c);
    out.columns.push_back(name + "_mean");
    out.columns.push_back(name + "_sd");
  }
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  std::vector<std::vector<double>> order;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<double> key;
    for (auto c : kc) key.push_back(t.rows[i][c]);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(i);
  }
  for (const auto& key : order) {
    const auto& idx = groups[key];
    std::vector<double> row = key;
    row.push_back(static_cast<double>(idx.size()));
    for (auto c : mc) {
      double s = 0, s2 = 0, n = 0;
      for (auto i : idx)
        if (const double v = t.rows[i][c]; !std::isnan(v)) s += v, s2 += v * v, n += 1;
      const double mean = n > 0 ? s / n : std::nan("");
      const double var = n > 1 ? (s2 - n * mean * mean) / (n - 1) : std::nan("");
      row.push_back(mean);
      row.push_back(n > 1 ? std::sqrt(std::max(0.0, var)) : std::nan(""));
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

struct ScenarioResult {
  Table tidy;
  Table summary;
};

namespace scenarios {

inline constexpr double kTieTol = 1e-6;

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> s(n);
  std::iota(s.begin(), s.end(), 0);
  std::shuffle(s.begin(), s.end(), rng);
  return s;
}

inline ColSbmParams make_params(ModelVariant v, Matrix alpha, Matrix pi, Vector delta) {
  ColSbmParams p;
  p.variant = v;
  p.Q = static_cast<std::size_t>(alpha.rows());
  p.alpha = std::move(alpha);
  p.pi = std::move(pi);
  p.delta = std::move(delta);
  p.S = SupportMatrix(p.n_networks(), p.Q, false);
  for (std::size_t m = 0; m < p.n_networks(); ++m)
    for (std::size_t q = 0; q < p.Q; ++q) p.S.set(m, q, p.pi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q)) > 0.0);
  return p;
}

/// Two networks of 120 nodes, four blocks, each network missing a different one.
inline ColSbmParams table_s1_params(double eps, Rng& rng) {
  Matrix base(4, 4);
  base << 3, 2, 1, -1, 2, 2, -1, 1, 1, -1, 1, 2, -1, 1, 2, 0;
  std::vector<std::size_t> s1, s2;
  do {
    s1 = random_permutation(4, rng);
    s2 = random_permutation(4, rng);
  } while (s1[3] == s2[0]);
  const double v1[4] = {.2, .4, .4, 0}, v2[4] = {0, 1. / 3, 1. / 3, 1. / 3};
  Matrix pi = Matrix::Zero(2, 4);
  for (std::size_t q = 0; q < 4; ++q) {
    pi(0, static_cast<Eigen::Index>(s1[q])) = v1[q];
    pi(1, static_cast<Eigen::Index>(s2[q])) = v2[q];
  }
  return make_params(ModelVariant::pi, Matrix::Constant(4, 4, .25) + eps * base, pi, Vector::Ones(2));
}

inline ColSbmParams table_s2_params(double eps_pi, Rng& rng) {
  Matrix base(3, 3);
  base << 3, 2, 1, 2, 2, -1, 1, -1, 1;
  const auto s = random_permutation(3, rng);
  const double v[3] = {1. / 3 - eps_pi, 1. / 3, 1. / 3 + eps_pi};
  Matrix pi = Matrix::Constant(2, 3, 1. / 3);
  for (std::size_t q = 0; q < 3; ++q) pi(1, static_cast<Eigen::Index>(s[q])) = v[q];
  return make_params(ModelVariant::pi, Matrix::Constant(3, 3, .25) + 0.16 * base, pi, Vector::Ones(2));
}

/// Assortative, core-periphery and disassortative connectivities.
inline Matrix alpha_as(double e) {
  Matrix a(3, 3);
  a << e, -e / 2, -e / 2, -e / 2, e, -e / 2, -e / 2, -e / 2, e;
  return a.array() + .3;
}
inline Matrix alpha_cp(double e) {
  Matrix a(3, 3);
  a << 1.5 * e, e, e / 2, e, e / 2, 0, e / 2, 0, -e / 2;
  return a.array() + .3;
}
inline Matrix alpha_dis(double e) {
  Matrix a(3, 3);
  a << -e / 2, e, e, e, -e / 2, e, e, e, -e / 2;
  return a.array() + .3;
}

/// Block proportions (.2,.3,.5), permuted per network when the variant frees pi.
inline Matrix structured_pi(std::size_t M, ModelVariant v, Rng& rng) {
  const double base[3] = {.2, .3, .5};
  Matrix pi(static_cast<Eigen::Index>(M), 3);
  for (std::size_t m = 0; m < M; ++m) {
    const auto s = m > 0 && has_free_pi(v) ? random_permutation(3, rng) : std::vector<std::size_t>{0, 1, 2};
    for (std::size_t q = 0; q < 3; ++q) pi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q)) = base[s[q]];
  }
  return pi;
}

/// Collection drawn network by network; each network has its own alpha and
/// proportions (row m of pi, or the m-th entry of pis).
inline Simulated simulate_mixed(const std::vector<Matrix>& alphas, const std::vector<Matrix>& pis,
                                const Vector& delta, const std::vector<Eigen::Index>& sizes, bool directed,
                                std::uint64_t seed) {
  Simulated out;
  out.collection.emission = EmissionKind::bernoulli;
  for (std::size_t m = 0; m < sizes.size(); ++m) {
    const auto p = make_params(ModelVariant::iid, alphas[m], pis[m],
                               Vector::Constant(1, delta(static_cast<Eigen::Index>(m))));
    auto one = simulate(p, {sizes[m]}, EmissionKind::bernoulli, directed, derive_seed(seed, {m}));
    out.collection.networks.push_back(std::move(one.collection.networks.front()));
    out.truth.z.push_back(std::move(one.truth.z.front()));
  }
  return out;
}

inline Simulated simulate_mixed(const std::vector<Matrix>& alphas, const Matrix& pi, const Vector& delta,
                                const std::vector<Eigen::Index>& sizes, bool directed, std::uint64_t seed) {
  std::vector<Matrix> pis;
  for (Eigen::Index m = 0; m < pi.rows(); ++m) pis.emplace_back(pi.row(m));
  return simulate_mixed(alphas, pis, delta, sizes, directed, seed);
}

/// Best fit of a search at exactly Q blocks, if any.
inline const ScoredFit* at_q(const SearchResult& r, std::size_t Q) {
  return Q < r.per_q.size() && !r.per_q[Q].empty() ? &r.per_q[Q].front() : nullptr;
}

inline double nan() { return std::nan(""); }

inline std::vector<std::string> variant_levels() { return {"iid", "pi", "delta", "deltapi", "sep"}; }

inline Table table_s1(const ScenarioConfig& cfg, const std::vector<double>& grid) {
  Table t;
  t.columns = {"eps_alpha", "replicate", "pi_vs_sep", "pi_vs_iid", "q_hat", "q_lt4", "q_eq4", "q_gt4",
               "rec", "rmse", "ari_mean", "ari_joint", "bic_pi", "bic_iid", "bic_sep"};
  t.rows.resize(grid.size() * cfg.replicates);
  parallel_for(t.rows.size(), [&](std::size_t s) {
    const auto gi = s / cfg.replicates, rep = s % cfg.replicates;
    Rng rng(derive_seed(cfg.seed, {101, gi, rep}));
    const auto truth = table_s1_params(grid[gi], rng);
    const auto sim = simulate(truth, {120, 120}, EmissionKind::bernoulli, true, derive_seed(cfg.seed, {102, gi, rep}));
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.seed, {103, gi, rep});
    const auto sep = fit_sep_sbm(sim.collection, sc);
    const auto pi = model_search(sim.collection, ModelVariant::pi, sc, &sep.path);
    const auto iid = model_search(sim.collection, ModelVariant::iid, sc, &sep.path);
    const auto q = pi.best.fit.params.Q;
    double rec = nan(), rmse = nan(), am = nan(), aj = nan();
    if (const auto* f4 = at_q(pi, 4)) {
      rec = rec_support(f4->fit.params.S, truth.S);
      rmse = rmse_alpha(f4->fit.params.alpha, truth.alpha, truth.S);
      const auto z = hard_labels(f4->fit.state);
      am = mean_ari(z, sim.truth.z);
      aj = joint_ari(z, sim.truth.z);
    }
    t.rows[s] = {grid[gi], double(rep), double(pi.best.bic_l > sep.bic_l + kTieTol),
                 double(pi.best.bic_l > iid.best.bic_l + kTieTol), double(q), double(q < 4), double(q == 4),
                 double(q > 4), rec, rmse, am, aj, pi.best.bic_l, iid.best.bic_l, sep.bic_l};
  });
  return t;
}

inline Table table_s2(const ScenarioConfig& cfg, const std::vector<double>& grid) {
  Table t;
  t.columns = {"eps_pi", "replicate", "sel_iid", "sel_pi", "sel_sep", "q_hat", "q_eq3", "rec",
               "bic_pi", "bic_iid", "bic_sep"};
  t.rows.resize(grid.size() * cfg.replicates);
  parallel_for(t.rows.size(), [&](std::size_t s) {
    const auto gi = s / cfg.replicates, rep = s % cfg.replicates;
    Rng rng(derive_seed(cfg.seed, {201, gi, rep}));
    const auto truth = table_s2_params(grid[gi], rng);
    const auto sim = simulate(truth, {90, 90}, EmissionKind::bernoulli, true, derive_seed(cfg.seed, {202, gi, rep}));
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.seed, {203, gi, rep});
    const auto sep = fit_sep_sbm(sim.collection, sc);
    const auto pi = model_search(sim.collection, ModelVariant::pi, sc, &sep.path);
    const auto iid = model_search(sim.collection, ModelVariant::iid, sc, &sep.path);
    // the simpler model wins ties: iid, then pi, then sep
    int sel = 0;
    double best = iid.best.bic_l;
    if (pi.best.bic_l > best + kTieTol) sel = 1, best = pi.best.bic_l;
    if (sep.bic_l > best + kTieTol) sel = 2;
    const auto q = pi.best.fit.params.Q;
    const auto* f3 = at_q(pi, 3);
    const double rec = f3 ? rec_support(f3->fit.params.S, truth.S) : nan();
    t.rows[s] = {grid[gi], double(rep), double(sel == 0), double(sel == 1), double(sel == 2), double(q),
                 double(q == 3), rec, pi.best.bic_l, iid.best.bic_l, sep.bic_l};
  });
  return t;
}

inline Table partition_fig(const ScenarioConfig& cfg, const std::vector<double>& grid) {
  const auto variants = cfg.variants.empty()
                            ? std::vector<ModelVariant>{ModelVariant::iid, ModelVariant::pi, ModelVariant::delta,
                                                        ModelVariant::deltapi}
                            : cfg.variants;
  Table t;
  t.columns = {"eps", "variant", "replicate", "ari_partition", "n_groups", "score"};
  t.levels["variant"] = variant_levels();
  const auto per_grid = variants.size() * cfg.replicates;
  t.rows.resize(grid.size() * per_grid);
  parallel_for(t.rows.size(), [&](std::size_t s) {
    const auto gi = s / per_grid, vi = (s % per_grid) / cfg.replicates, rep = s % cfg.replicates;
    const auto v = variants[vi];
    Rng rng(derive_seed(cfg.seed, {301, gi, vi, rep}));
    const double e = grid[gi];
    std::vector<Matrix> alphas;
    Labels groups;
    for (std::size_t m = 0; m < 9; ++m) {
      alphas.push_back(m < 3 ? alpha_as(e) : m < 6 ? alpha_cp(e) : alpha_dis(e));
      groups.push_back(m / 3);
    }
    Vector delta = Vector::Ones(9);
    if (has_delta(v))
      for (Eigen::Index m = 0; m < 9; ++m) delta(m) = m % 3 == 0 ? 1.0 : m % 3 == 1 ? .75 : .5;
    const auto sim = simulate_mixed(alphas, structured_pi(9, v, rng), delta, std::vector<Eigen::Index>(9, 75), false,
                                    derive_seed(cfg.seed, {302, gi, vi, rep}));
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.seed, {303, gi, vi, rep});
    const auto part = clust2coll(sim.collection, v, sc);
    t.rows[s] = {e, double(static_cast<int>(v)), double(rep), ari(membership(part, 9), groups),
                 double(part.groups.size()), part.score};
  });
  return t;
}

/// Core-periphery collection of sizes (90,90,120,120,60): blocks found in the
/// last, smallest network alone and jointly with 1, 2 or 4 others.
inline Table finer_blocks(const ScenarioConfig& cfg, const std::vector<double>& grid) {
  const auto variants = cfg.variants.empty() ? std::vector<ModelVariant>{ModelVariant::iid, ModelVariant::pi}
                                             : cfg.variants;
  Table t;
  t.columns = {"eps", "variant", "replicate", "q_sep", "q_col_m2", "q_col_m3", "q_col_m5"};
  t.levels["variant"] = variant_levels();
  const auto per_grid = variants.size() * cfg.replicates;
  t.rows.resize(grid.size() * per_grid);
  parallel_for(t.rows.size(), [&](std::size_t s) {
    const auto gi = s / per_grid, vi = (s % per_grid) / cfg.replicates, rep = s % cfg.replicates;
    const auto v = variants[vi];
    Rng rng(derive_seed(cfg.seed, {401, gi, vi, rep}));
    const std::vector<Eigen::Index> sizes{90, 90, 120, 120, 60};
    Vector delta = Vector::Ones(5);
    if (has_delta(v)) delta(4) = .5;
    const auto sim = simulate_mixed(std::vector<Matrix>(5, alpha_cp(grid[gi])), structured_pi(5, v, rng), delta,
                                    sizes, false, derive_seed(cfg.seed, {402, gi, vi, rep}));
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.seed, {403, gi, vi, rep});
    const auto path = sep_paths(sim.collection, sc);
    std::vector<double> row{grid[gi], double(static_cast<int>(v)), double(rep)};
    {
      SepPath single{path[4]};
      row.push_back(double(model_search(sim.collection.subset({4}), ModelVariant::iid, sc, &single)
                               .best.fit.params.Q));
    }
    for (const std::vector<std::size_t>& idx : {std::vector<std::size_t>{0, 4}, {0, 1, 4}, {0, 1, 2, 3, 4}}) {
      SepPath sub;
      for (auto m : idx) sub.push_back(path[m]);
      const auto res = model_search(sim.collection.subset(idx), v, sc, &sub);
      row.push_back(double(res.best.fit.params.S.row_count(idx.size() - 1)));
    }
    t.rows[s] = std::move(row);
  });
  return t;
}

/// An assortative 64-node network next to an Erdos-Renyi one of growing size.
inline Table size_study(const ScenarioConfig& cfg, const std::vector<double>& grid) {
  const auto variants = cfg.variants.empty()
                            ? std::vector<ModelVariant>{ModelVariant::iid, ModelVariant::pi, ModelVariant::delta,
                                                        ModelVariant::deltapi}
                            : cfg.variants;
  Table t;
  t.columns = {"n_er", "replicate", "variant", "ari_as", "ari_er", "delta_bic", "sep_selected"};
  t.levels["variant"] = variant_levels();
  t.rows.resize(grid.size() * cfg.replicates * variants.size());
  parallel_for(grid.size() * cfg.replicates, [&](std::size_t s) {
    const auto gi = s / cfg.replicates, rep = s % cfg.replicates;
    Matrix a(3, 3);
    a << .55, .1, .1, .1, .5, .1, .1, .1, .45;
    Matrix pi_as(1, 3);
    pi_as << .4, .3, .3;
    const std::vector<Matrix> alphas{a, Matrix::Constant(1, 1, .25)};
    const auto sim = simulate_mixed(alphas, std::vector<Matrix>{pi_as, Matrix::Ones(1, 1)}, Vector::Ones(2), {64, static_cast<Eigen::Index>(grid[gi])}, true,
                                    derive_seed(cfg.seed, {501, gi, rep}));
    SearchConfig sc = cfg.search;
    sc.seed = derive_seed(cfg.seed, {502, gi, rep});
    const auto sep = fit_sep_sbm(sim.collection, sc);
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const auto res = model_search(sim.collection, variants[vi], sc, &sep.path);
      const auto z = hard_labels(res.best.fit.state);
      t.rows[s * variants.size() + vi] = {grid[gi],
                                          double(rep),
                                          double(static_cast<int>(variants[vi])),
                                          ari(z[0], sim.truth.z[0]),
                                          ari(z[1], sim.truth.z[1]),
                                          res.best.bic_l - sep.bic_l,
                                          double(sep.bic_l >= res.best.bic_l)};
    }
  });
  return t;
}

}  // namespace scenarios

inline std::vector<double> default_grid(Scenario s) {
  switch (s) {
    case Scenario::table_s1: return {0, .04, .08, .12, .16, .2, .24};
    case Scenario::table_s2: return {0, .04, .08, .12, .16, .2, .24, .28};
    case Scenario::partition_fig: return {.1, .2, .3, .4};
    case Scenario::finer_blocks: return {.4};
    case Scenario::size_study: return {10, 20, 40, 80, 160, 320, 640};
  }
  return {};
}

/// Runs one scenario. Replicate seeds come from (seed, grid index, replicate),
/// so the table does not depend on the worker count.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  const auto grid = cfg.grid.empty() ? default_grid(cfg.scenario) : cfg.grid;
  ScenarioResult r;
  switch (cfg.scenario) {
    case Scenario::table_s1:
      r.tidy = scenarios::table_s1(cfg, grid);
      r.summary = summarize(r.tidy, {"eps_alpha"});
      break;
    case Scenario::table_s2:
      r.tidy = scenarios::table_s2(cfg, grid);
      r.summary = summarize(r.tidy, {"eps_pi"});
      break;
    case Scenario::partition_fig:
      r.tidy = scenarios::partition_fig(cfg, grid);
      r.summary = summarize(r.tidy, {"eps", "variant"});
      break;
    case Scenario::finer_blocks:
      r.tidy = scenarios::finer_blocks(cfg, grid);
      r.summary = summarize(r.tidy, {"eps", "variant"});
      break;
    case Scenario::size_study:
      r.tidy = scenarios::size_study(cfg, grid);
      r.summary = summarize(r.tidy, {"n_er", "variant"});
      break;
  }
  return r;
}

}  // namespace colsbm
