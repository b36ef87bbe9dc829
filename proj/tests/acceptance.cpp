// Acceptance run: one PASS/FAIL line per criterion. Arguments select a subset
// of criteria by number; the default runs all of them.

#include "colsbm/colsbm.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace colsbm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// Mean of a column over the rows whose key column equals key.
double mean_where(const Table& t, const std::string& col, const std::string& key, double value,
                  const std::function<double(double)>& f = [](double x) { return x; }) {
  const auto c = t.col(col), k = t.col(key);
  double s = 0, n = 0;
  for (const auto& r : t.rows)
    if (std::abs(r[k] - value) < 1e-12) s += f(r[c]), n += 1;
  return n > 0 ? s / n : std::nan("");
}

void dump(const ScenarioResult& r, const std::string& name) {
  write_csv(r.tidy, (fs::path(COLSBM_OUT_DIR) / (name + "_tidy.csv")).string());
  write_csv(r.summary, (fs::path(COLSBM_OUT_DIR) / (name + "_summary.csv")).string());
}

Outcome param_counts() {
  const std::size_t a = count_params(ModelVariant::pi, 3, SupportMatrix::all_true(2, 3), 2);
  const std::size_t b = count_params(ModelVariant::pi, 3, SupportMatrix{{1, 1, 1}, {1, 0, 1}}, 2);
  const std::size_t c = count_params(ModelVariant::pi, 3, SupportMatrix{{1, 1, 0}, {1, 0, 1}}, 2);
  return {a == 13 && b == 12 && c == 9,
          std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c)};
}

Outcome oracle() {
  Rng rng(2024);
  double worst = -1e300, worst_q1 = 0;
  int q1 = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto in = testing::random_instance(rng, 2, 8, rep % 2 == 0);
    const auto f = run_vem(in.col, in.p.variant, in.p.Q, in.p.S, in.st, VemConfig{});
    const double gap = f.elbo - exact_loglik_oracle(in.col, f.params);
    worst = std::max(worst, gap);
    if (in.p.Q == 1) worst_q1 = std::max(worst_q1, std::abs(gap)), ++q1;
  }
  return {worst <= 1e-9 && worst_q1 <= 1e-9,
          "max(elbo - loglik) " + sci(worst) + ", max |gap| at Q=1 " + sci(worst_q1) +
              " over " + std::to_string(q1) + " instances"};
}

ScenarioConfig scenario(Scenario s, std::vector<double> grid, std::vector<ModelVariant> variants = {}) {
  ScenarioConfig c;
  c.scenario = s;
  c.grid = std::move(grid);
  c.replicates = 30;
  c.seed = 1;
  if (!variants.empty()) c.variants = std::move(variants);
  return c;
}

Outcome table_s1_check() {
  const auto r = run_scenario(scenario(Scenario::table_s1, {0.0, 0.2, 0.24}));
  dump(r, "table_s1");
  const auto& t = r.tidy;
  const double pi_sep = mean_where(t, "pi_vs_sep", "eps_alpha", 0.0);
  const double iid_pi = mean_where(t, "pi_vs_iid", "eps_alpha", 0.0, [](double x) { return 1 - x; });
  const double q4 = mean_where(t, "q_eq4", "eps_alpha", 0.24);
  const double rec = mean_where(t, "rec", "eps_alpha", 0.24);
  const double rmse = mean_where(t, "rmse", "eps_alpha", 0.24);
  const double ari = mean_where(t, "ari_joint", "eps_alpha", 0.24);
  const bool pass = pi_sep >= 0.9 && iid_pi >= 0.9 && q4 >= 0.9 && rec >= 0.9 && rmse <= 0.05 && ari >= 0.95;
  return {pass, "eps 0: pi>sep " + fmt(pi_sep) + ", iid>=pi " + fmt(iid_pi) + "; eps .24: Q=4 " + fmt(q4) +
                    ", Rec " + fmt(rec) + ", RMSE " + fmt(rmse, 4) + ", ARI " + fmt(ari) + "; eps .20: Q=4 " +
                    fmt(mean_where(t, "q_eq4", "eps_alpha", 0.2)) + ", Rec " +
                    fmt(mean_where(t, "rec", "eps_alpha", 0.2))};
}

Outcome table_s2_check() {
  const auto r = run_scenario(scenario(Scenario::table_s2, {0.0, 0.28}));
  dump(r, "table_s2");
  const auto& t = r.tidy;
  const double iid0 = mean_where(t, "sel_iid", "eps_pi", 0.0);
  const double pi28 = mean_where(t, "sel_pi", "eps_pi", 0.28);
  double q3 = 0, rec = 0;
  for (const auto& row : t.rows) {
    q3 += row[t.col("q_eq3")];
    rec += row[t.col("rec")] == 1.0;
  }
  q3 /= static_cast<double>(t.rows.size());
  rec /= static_cast<double>(t.rows.size());
  return {iid0 >= 0.85 && pi28 >= 0.85 && q3 >= 0.95 && rec >= 0.95,
          "iid at eps 0 " + fmt(iid0) + ", pi at eps .28 " + fmt(pi28) + ", Q=3 " + fmt(q3) + ", Rec " + fmt(rec)};
}

Outcome partition_check() {
  const auto r = run_scenario(scenario(Scenario::partition_fig, {0.4}, {ModelVariant::iid, ModelVariant::pi}));
  dump(r, "partition");
  const auto& t = r.tidy;
  Outcome o;
  for (auto v : {ModelVariant::iid, ModelVariant::pi}) {
    const double ari = mean_where(t, "ari_partition", "variant", static_cast<double>(v));
    o.pass = o.pass && ari >= 0.9;
    o.detail += (o.detail.empty() ? "" : ", ") + to_string(v) + " ARI " + fmt(ari);
  }
  return o;
}

Outcome finer_check() {
  const auto r = run_scenario(scenario(Scenario::finer_blocks, {0.4}, {ModelVariant::iid, ModelVariant::pi}));
  dump(r, "finer_blocks");
  const auto& t = r.tidy;
  Outcome o;
  const auto eq = [](double target) { return [target](double x) { return x == target ? 1.0 : 0.0; }; };
  double sep2 = 0;
  for (auto v : {ModelVariant::iid, ModelVariant::pi}) {
    const double c = mean_where(t, "q_col_m5", "variant", static_cast<double>(v), eq(3));
    sep2 += mean_where(t, "q_sep", "variant", static_cast<double>(v), eq(2)) / 2;
    o.pass = o.pass && c >= 0.9;
    o.detail += to_string(v) + " Q=3 " + fmt(c) + " (M=2 " +
                fmt(mean_where(t, "q_col_m2", "variant", static_cast<double>(v), eq(3))) + ", M=3 " +
                fmt(mean_where(t, "q_col_m3", "variant", static_cast<double>(v), eq(3))) + "), ";
  }
  o.pass = o.pass && sep2 >= 0.6;
  o.detail += "sep Q=2 " + fmt(sep2);
  return o;
}

Outcome prediction_check() {
  ColSbmParams p = scenarios::make_params(ModelVariant::iid, scenarios::alpha_cp(0.4), Matrix(3, 3), Vector::Ones(3));
  for (Eigen::Index m = 0; m < 3; ++m) p.pi.row(m) << 0.2, 0.3, 0.5;
  p.S = SupportMatrix::all_true(3, 3);
  const auto sim = simulate(p, {80, 80, 30}, EmissionKind::bernoulli, true, 77);
  PredictConfig cfg;
  cfg.target = 2;
  cfg.k_grid = {0.4, 0.6, 0.8};
  cfg.replicates = 30;
  cfg.mode = MaskMode::links;
  cfg.models = {ModelVariant::iid, ModelVariant::sep};
  cfg.search.q_max = 5;
  cfg.search.seed = 1;
  const auto rows = prediction_experiment(sim.collection, cfg);
  std::ofstream csv(fs::path(COLSBM_OUT_DIR) / "prediction.csv");
  csv << "replicate,K,mode,model,auc,q_hat\n";
  std::map<std::pair<double, ModelVariant>, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    csv << r.replicate << ',' << r.K << ',' << to_string(r.mode) << ',' << to_string(r.model) << ','
        << r.auc << ',' << r.q_hat << '\n';
    auto& a = acc[{r.K, r.model}];
    a.first += r.auc;
    a.second += 1;
  }
  Outcome o;
  for (double K : cfg.k_grid) {
    const auto& i = acc[{K, ModelVariant::iid}];
    const auto& s = acc[{K, ModelVariant::sep}];
    const double ai = i.first / i.second, as = s.first / s.second;
    o.pass = o.pass && i.second == 30 && s.second == 30 && ai > as;
    o.detail += (o.detail.empty() ? "" : "; ") + ("K " + fmt(K, 1) + ": iid " + fmt(ai) + " vs sep " + fmt(as));
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto dir = fs::path(COLSBM_OUT_DIR) / "determinism";
  fs::create_directories(dir);
  const std::string manifest = (fs::path(COLSBM_SAMPLES_DIR) / "collection" / "manifest.json").string();
  std::vector<std::string> outs;
  for (int threads : {1, 4}) {
    const auto out = (dir / ("fit_t" + std::to_string(threads) + ".json")).string();
    const std::string cmd = std::string("\"") + COLSBM_CLI + "\" fit \"" + manifest +
                            "\" --model pi --seed 11 --emit-tau --threads " + std::to_string(threads) + " -o \"" +
                            out + "\"";
    if (const int rc = std::system(cmd.c_str()); rc != 0) return {false, "fit exited with " + std::to_string(rc)};
    outs.push_back(slurp(out));
  }
  return {!outs[0].empty() && outs[0] == outs[1],
          std::to_string(outs[0].size()) + " bytes, threads 1 vs 4 " + (outs[0] == outs[1] ? "identical" : "differ")};
}

Outcome properties() {
  Rng rng(10);
  int failures = 0, checks = 0;
  const auto check = [&](bool ok) { ++checks, failures += !ok; };
  check(log_prior_support(SupportMatrix::all_true(1, 1), 1) == 0.0);
  check(std::abs(log_prior_support(SupportMatrix::all_true(2, 3), 3) + 2 * std::log(3.0)) < 1e-12);
  check(std::abs(log_prior_support(SupportMatrix{{1, 1, 1}, {1, 0, 1}}, 3) + 3 * std::log(3.0)) < 1e-12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> lab(0, 3);
  for (int rep = 0; rep < 100; ++rep) {
    // dissimilarity under a random fit
    const std::size_t M = 2 + rep % 4, Q = 1 + rep % 3;
    std::vector<Network> nets;
    Fit f;
    f.params = testing::random_params(rng, rep % 2 ? ModelVariant::delta : ModelVariant::iid,
                                      SupportMatrix::all_true(M, Q), EmissionKind::bernoulli, false);
    for (std::size_t m = 0; m < M; ++m) {
      nets.push_back(testing::random_network(rng, 6 + static_cast<Eigen::Index>(m), true, 0.3));
      f.state.tau.push_back(testing::random_tau(rng, nets.back().size(), f.params.S, m));
    }
    const Matrix D = dissimilarity_matrix(f, NetworkCollection(nets, EmissionKind::bernoulli));
    check(D.isApprox(D.transpose(), 0.0) && D.diagonal().norm() == 0.0 && D.minCoeff() >= 0.0);
    // ARI, RMSE and Rec identities
    Labels a(25), b(25);
    for (auto& x : a) x = lab(rng);
    for (auto& x : b) x = lab(rng);
    Labels a2 = a;
    for (auto& x : a2) x = 3 - x;
    check(ari(a, a) == 1.0 && std::abs(ari(a, a2) - 1.0) < 1e-12 && std::abs(ari(a, b) - ari(b, a)) < 1e-12);
    Matrix x(3, 3), y(3, 3), z(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) x.data()[i] = u(rng), y.data()[i] = u(rng), z.data()[i] = u(rng);
    const std::vector<std::size_t> perm{2, 0, 1};
    Matrix xp(3, 3);
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t r = 0; r < 3; ++r) xp(perm[q], perm[r]) = x(q, r);
    check(rmse_alpha(x, x) == 0.0 && rmse_alpha(xp, x) < 1e-12 &&
          std::abs(rmse_alpha(x, y) - rmse_alpha(y, x)) < 1e-12 &&
          rmse_alpha(x, z) <= rmse_alpha(x, y) + rmse_alpha(y, z) + 1e-12);
    SupportMatrix S(M, 3, false);
    do {
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t q = 0; q < 3; ++q) S.set(m, q, u(rng) < 0.6);
    } while (!validate_support(S));
    check(rec_support(S, S) == 1 && rec_support(S.permute_columns(perm), S) == 1);
    // thresholded supports are repaired into valid ones
    ColSbmParams p;
    p.Q = 3;
    p.pi = Matrix(static_cast<Eigen::Index>(M), 3);
    for (Eigen::Index m = 0; m < p.pi.rows(); ++m) {
      for (Eigen::Index q = 0; q < 3; ++q) p.pi(m, q) = u(rng) < 0.3 ? 0.0 : u(rng);
      if (p.pi.row(m).sum() == 0.0) p.pi(m, 0) = 1.0;
      p.pi.row(m) /= p.pi.row(m).sum();
    }
    for (const auto& c : support_candidates(p, {0.0, 0.01, 0.1, 0.3, 0.6, 0.99})) check(validate_support(c));
  }
  return {failures == 0, std::to_string(checks) + " checks, " + std::to_string(failures) + " failures"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::create_directories(COLSBM_OUT_DIR);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const auto run = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria{
      {1, {"parameter counts", param_counts}},
      {2, {"oracle equivalence", oracle}},
      {4, {"missing-block scenario", table_s1_check}},
      {5, {"mixture scenario", table_s2_check}},
      {6, {"partition recovery", partition_check}},
      {7, {"finer blocks", finer_check}},
      {8, {"prediction ordering", prediction_check}},
      {9, {"determinism across threads", determinism}},
      {10, {"property suites", properties}},
  };
  std::map<int, std::string> lines;
  bool all = true;
  const auto report = [&](int id, const std::string& name, const Outcome& o, double secs) {
    all = all && o.pass;
    std::ostringstream s;
    s << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << "  [" << fmt(secs, 1)
      << " s]";
    lines[id] = s.str();
    std::cout << s.str() << std::endl;
  };
  for (const auto& [id, c] : criteria) {
    if (!run(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report(id, c.first, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  if (run(3)) {
    const double drop = max_elbo_drop().load();
    report(3, "ELBO monotonicity",
           {drop <= 1e-8, "largest drop " + sci(drop) + " over " +
                              std::to_string(vem_iteration_count().load()) + " VEM iterations"},
           0.0);
  }
  std::cout << "\nsummary\n";
  for (const auto& [id, l] : lines) std::cout << l << "\n";
  return all ? 0 : 1;
}
