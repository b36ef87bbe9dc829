// colsbm: fit, compare and cluster network collections, run masking
// experiments and simulation scenarios.

#include "colsbm/colsbm.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace colsbm;

namespace {

struct Common {
  std::string manifest;
  std::string emission;  // empty: as in the manifest
  std::size_t q_min = 1;
  std::size_t q_max = 8;
  std::size_t best_k = 3;
  std::vector<double> thresholds{0.0, 1e-3, 1e-2, 5e-2, 1e-1};
  std::size_t n_perm = 25;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
};

void add_search_options(CLI::App* app, Common& c) {
  app->add_option("--qmin", c.q_min, "smallest number of blocks")->capture_default_str();
  app->add_option("--qmax", c.q_max, "largest number of blocks")->capture_default_str();
  app->add_option("--best-k", c.best_k, "fits kept per number of blocks")->capture_default_str();
  app->add_option("--thresholds", c.thresholds, "support thresholds for the pi variants")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--n-perm", c.n_perm, "block alignments tried per start")->capture_default_str();
}

void add_common(CLI::App* app, Common& c, bool search = true) {
  app->add_option("--seed", c.seed, "random seed (COLSBM_SEED overrides)")->capture_default_str();
  app->add_option("--threads", c.threads, "worker threads, 0 for all cores")->capture_default_str();
  if (search) add_search_options(app, c);
}

std::uint64_t effective_seed(std::uint64_t seed) {
  if (const char* env = std::getenv("COLSBM_SEED"); env && *env) return std::stoull(env);
  return seed;
}

SearchConfig search_config(const Common& c) {
  SearchConfig s;
  s.q_min = c.q_min;
  s.q_max = c.q_max;
  s.best_k = c.best_k;
  s.thresholds = c.thresholds;
  s.n_perm = c.n_perm;
  s.seed = c.seed;
  return s;
}

/// Threads are left out: they never change a result.
json config_json(const std::string& command, const Common& c, const SearchConfig& s) {
  json j;
  j["command"] = command;
  j["manifest"] = c.manifest;
  j["seed"] = c.seed;
  j["q_min"] = s.q_min;
  j["q_max"] = s.q_max;
  j["best_k"] = s.best_k;
  j["thresholds"] = s.thresholds;
  j["n_perm"] = s.n_perm;
  j["n_random_sep"] = s.n_random_sep;
  j["screen_iter"] = s.screen_iter;
  j["max_passes"] = s.max_passes;
  j["pass_tol"] = s.pass_tol;
  j["vem"] = {{"tol", s.vem.tol},
              {"max_iter", s.vem.max_iter},
              {"fixed_point_tol", s.vem.fixed_point_tol},
              {"fixed_point_max_iter", s.vem.fixed_point_max_iter},
              {"strict_bernoulli_delta", s.vem.strict_bernoulli_delta}};
  return j;
}

LoadedCollection load(const Common& c) {
  std::optional<EmissionKind> kind;
  if (!c.emission.empty()) kind = parse_emission(c.emission);
  return load_collection(c.manifest, kind);
}

void ensure_parent(const std::string& path) {
  const auto p = fs::path(path).parent_path();
  if (!p.empty()) fs::create_directories(p);
}

std::vector<std::string> subset_names(const std::vector<std::string>& names, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(names.at(i));
  return out;
}

json trace_json(const PartitionNode& n, const std::vector<std::string>& names) {
  json j;
  j["members"] = subset_names(names, n.members);
  j["score"] = n.score;
  j["q_hat"] = n.q_hat;
  if (!n.children.empty()) {
    j["split_score"] = n.split_score;
    j["score_delta"] = n.split_score - n.score;
    j["accepted"] = n.accepted;
    j["children"] = json::array();
    for (const auto& c : n.children) j["children"].push_back(trace_json(c, names));
  }
  return j;
}

int cmd_fit(Common& c, const std::string& model, bool emit_tau) {
  const auto lc = load(c);
  const auto& col = lc.collection;
  const auto sc = search_config(c);
  auto cfg = config_json("fit", c, sc);
  cfg["model"] = model;
  cfg["emission"] = to_string(col.emission);
  cfg["emit_tau"] = emit_tau;
  const auto variant = parse_variant(model);
  ensure_parent(c.out);
  if (variant == ModelVariant::sep) {
    const auto res = fit_sep_sbm(col, sc);
    json j;
    j["config"] = cfg;
    j["bic_l"] = res.bic_l;
    j["variant"] = "sep";
    j["per_network"] = json::array();
    bool converged = true;
    for (std::size_t m = 0; m < col.size(); ++m) {
      const auto one = col.subset({m});
      j["per_network"].push_back(
          to_json(make_artifact(res.per_network[m], one, {lc.names[m]}, json::object(), c.seed, emit_tau)));
      converged = converged && res.per_network[m].fit.converged;
    }
    j["converged"] = converged;
    j["version"] = kVersion;
    write_json(j, c.out);
    return converged ? 0 : 2;
  }
  const auto res = model_search(col, variant, sc);
  cfg["reached_q_max"] = res.reached_q_max;
  cfg["passes"] = res.passes;
  const auto art = make_artifact(res.best, col, lc.names, cfg, c.seed, emit_tau);
  write_fit(art, c.out);
  return res.best.fit.converged ? 0 : 2;
}

int cmd_compare(Common& c) {
  const auto lc = load(c);
  const auto sc = search_config(c);
  const auto rep = compare_variants(lc.collection, sc);
  json j;
  j["config"] = config_json("compare", c, sc);
  j["config"]["emission"] = to_string(lc.collection.emission);
  j["winner"] = to_string(rep.winner);
  j["common_structure"] = rep.common_structure;
  bool converged = true;
  for (const auto& [v, r] : rep.joint) {
    j["models"][to_string(v)] = {{"bic_l", r.best.bic_l},
                                 {"Q", r.best.fit.params.Q},
                                 {"reached_q_max", r.reached_q_max},
                                 {"fit", to_json(make_artifact(r.best, lc.collection, lc.names, json::object(),
                                                               c.seed, false))}};
    converged = converged && r.best.fit.converged;
  }
  json sep = {{"bic_l", rep.sep.bic_l}, {"Q", json::array()}};
  for (const auto& f : rep.sep.per_network) {
    sep["Q"].push_back(f.fit.params.Q);
    converged = converged && f.fit.converged;
  }
  j["models"]["sep"] = sep;
  j["converged"] = converged;
  j["version"] = kVersion;
  ensure_parent(c.out);
  write_json(j, c.out);
  return converged ? 0 : 2;
}

int cmd_cluster(Common& c, const std::string& model) {
  const auto lc = load(c);
  const auto sc = search_config(c);
  const auto part = clust2coll(lc.collection, parse_variant(model), sc);
  json j;
  j["config"] = config_json("cluster", c, sc);
  j["config"]["model"] = model;
  j["config"]["emission"] = to_string(lc.collection.emission);
  j["score"] = part.score;
  j["groups"] = json::array();
  bool converged = true;
  for (std::size_t g = 0; g < part.groups.size(); ++g) {
    const auto names = subset_names(lc.names, part.groups[g]);
    const auto sub = lc.collection.subset(part.groups[g]);
    j["groups"].push_back({{"networks", names},
                           {"bic_l", part.group_fits[g].bic_l},
                           {"fit", to_json(make_artifact(part.group_fits[g], sub, names, json::object(), c.seed,
                                                         false))}});
    converged = converged && part.group_fits[g].fit.converged;
  }
  j["dendrogram"] = trace_json(part.trace, lc.names);
  j["converged"] = converged;
  j["version"] = kVersion;
  ensure_parent(c.out);
  write_json(j, c.out);
  return converged ? 0 : 2;
}

int cmd_predict(Common& c, const std::string& mode, const std::vector<double>& k_grid, std::size_t replicates,
                std::size_t target, const std::vector<std::string>& models, const std::string& fit_path) {
  const auto lc = load(c);
  ensure_parent(c.out);
  std::ofstream os(c.out);
  if (!os) throw IoError("cannot write " + c.out);
  if (!fit_path.empty()) {
    // probabilities from an existing fit
    const auto art = read_fit(fit_path);
    const auto fit = fit_from_artifact(art);
    const auto p = link_probabilities(fit, target, lc.collection.emission);
    const auto& labels = lc.collection.networks.at(target).labels();
    os << "src,dst," << (lc.collection.emission == EmissionKind::poisson ? "expected_count" : "probability")
       << "\n";
    os.precision(17);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j)
        if (i != j) os << labels[i] << ',' << labels[j] << ',' << p(i, j) << '\n';
    return 0;
  }
  PredictConfig pc;
  pc.target = target;
  pc.k_grid = k_grid;
  pc.replicates = replicates;
  pc.mode = parse_mask_mode(mode);
  pc.models.clear();
  for (const auto& m : models) pc.models.push_back(parse_variant(m));
  pc.search = search_config(c);
  const auto rows = prediction_experiment(lc.collection, pc);
  os << "replicate,K,mode,model,auc,q_hat\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.replicate << ',' << r.K << ',' << to_string(r.mode) << ',' << to_string(r.model) << ',' << r.auc << ','
       << r.q_hat << '\n';
  auto cfg = config_json("predict", c, pc.search);
  cfg["mask_mode"] = mode;
  cfg["k_grid"] = k_grid;
  cfg["replicates"] = replicates;
  cfg["target"] = target;
  cfg["models"] = models;
  write_json(cfg, c.out + ".config.json");
  return 0;
}

/// params file: {variant, emission, directed, sizes, pi, alpha, delta}.
int cmd_simulate(Common& c, const std::string& params_path, const std::string& out_dir) {
  std::ifstream f(params_path);
  if (!f) throw IoError("cannot open " + params_path);
  const auto j = json::parse(f);
  ColSbmParams p;
  p.variant = parse_variant(j.value("variant", std::string("iid")));
  const auto kind = parse_emission(j.value("emission", std::string("bernoulli")));
  const bool directed = j.value("directed", true);
  const auto sizes = j.at("sizes").get<std::vector<Eigen::Index>>();
  const auto pi = j.at("pi").get<std::vector<std::vector<double>>>();
  const auto alpha = j.at("alpha").get<std::vector<std::vector<double>>>();
  const auto M = sizes.size();
  p.Q = alpha.size();
  p.alpha = Matrix(static_cast<Eigen::Index>(p.Q), static_cast<Eigen::Index>(p.Q));
  for (std::size_t q = 0; q < p.Q; ++q)
    for (std::size_t r = 0; r < p.Q; ++r) p.alpha(q, r) = alpha.at(q).at(r);
  p.pi = Matrix(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(p.Q));
  p.S = SupportMatrix(M, p.Q, false);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t q = 0; q < p.Q; ++q) {
      const double v = (pi.size() == 1 ? pi[0] : pi.at(m)).at(q);
      p.pi(m, q) = v;
      p.S.set(m, q, v > 0);
    }
  p.delta = Vector::Ones(static_cast<Eigen::Index>(M));
  if (j.contains("delta"))
    for (std::size_t m = 0; m < M; ++m) p.delta(m) = j["delta"].at(m).get<double>();
  const auto sim = simulate(p, sizes, kind, directed, c.seed);
  fs::create_directories(out_dir);
  json manifest = {{"emission", to_string(kind)}, {"directed", directed}, {"networks", json::array()}};
  json truth = {{"memberships", json::array()}, {"seed", c.seed}, {"params", j}};
  for (std::size_t m = 0; m < M; ++m) {
    const std::string file = "network_" + std::to_string(m + 1) + ".csv";
    std::ofstream os(fs::path(out_dir) / file);
    const auto& a = sim.collection.networks[m].adjacency();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index k = 0; k < a.cols(); ++k) os << (k ? "," : "") << a(i, k);
      os << '\n';
    }
    manifest["networks"].push_back({{"name", "network_" + std::to_string(m + 1)}, {"path", file}, {"format", "dense"}});
    truth["memberships"].push_back(sim.truth.z[m]);
  }
  write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
  write_json(truth, (fs::path(out_dir) / "truth.json").string());
  return 0;
}

int cmd_benchmark(Common& c, const std::string& scenario, bool fast, std::size_t replicates,
                  const std::vector<double>& grid, const std::vector<std::string>& variants,
                  const std::string& out_dir) {
  ScenarioConfig sc;
  sc.scenario = parse_scenario(scenario);
  sc.replicates = fast ? 10 : replicates;
  sc.grid = grid;
  sc.seed = c.seed;
  for (const auto& v : variants) sc.variants.push_back(parse_variant(v));
  sc.search.q_max = c.q_max;
  sc.search.best_k = c.best_k;
  sc.search.n_perm = c.n_perm;
  sc.search.thresholds = c.thresholds;
  const auto r = run_scenario(sc);
  fs::create_directories(out_dir);
  write_csv(r.tidy, (fs::path(out_dir) / (scenario + "_tidy.csv")).string());
  write_csv(r.summary, (fs::path(out_dir) / (scenario + "_summary.csv")).string());
  auto cfg = config_json("benchmark", c, sc.search);
  cfg["scenario"] = scenario;
  cfg["replicates"] = sc.replicates;
  cfg["grid"] = grid.empty() ? default_grid(sc.scenario) : grid;
  cfg["variants"] = variants;
  write_json(cfg, (fs::path(out_dir) / (scenario + "_config.json")).string());
  write_csv(r.summary, std::cout);
  return 0;
}

/// Block-sorted adjacency matrices, memberships and alpha in long format.
int cmd_plot_data(Common& c, const std::string& fit_path, const std::string& out_dir) {
  const auto lc = load(c);
  const auto art = read_fit(fit_path);
  if (art.memberships.size() != lc.collection.size()) throw InvalidArgument("fit and collection differ in size");
  fs::create_directories(out_dir);
  std::ofstream memb(fs::path(out_dir) / "memberships.csv");
  memb << "network,node,block\n";
  for (std::size_t m = 0; m < lc.collection.size(); ++m) {
    const auto& net = lc.collection.networks[m];
    const auto& z = art.memberships[m];
    if (z.size() != static_cast<std::size_t>(net.size())) throw InvalidArgument("membership length mismatch");
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
    std::ofstream os(fs::path(out_dir) / ("sorted_" + lc.names[m] + ".csv"));
    os << "row,col,row_block,col_block,value\n";
    for (std::size_t a = 0; a < order.size(); ++a) {
      memb << lc.names[m] << ',' << net.labels()[order[a]] << ',' << z[order[a]] + 1 << '\n';
      for (std::size_t b = 0; b < order.size(); ++b) {
        const auto i = static_cast<Eigen::Index>(order[a]), k = static_cast<Eigen::Index>(order[b]);
        if (i == k) continue;
        os << a + 1 << ',' << b + 1 << ',' << z[order[a]] + 1 << ',' << z[order[b]] + 1 << ',';
        if (net.observed()(i, k) == 0.0) os << "NA\n";
        else os << net.adjacency()(i, k) << '\n';
      }
    }
  }
  std::ofstream al(fs::path(out_dir) / "alpha.csv");
  al << "q,r,alpha\n";
  al.precision(17);
  for (std::size_t q = 0; q < art.Q; ++q)
    for (std::size_t r = 0; r < art.Q; ++r) al << q + 1 << ',' << r + 1 << ',' << art.alpha[q][r] << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint stochastic block models for collections of networks"};
  app.require_subcommand(1);
  // one option set per subcommand, so defaults stay independent
  Common cf, cc, ccl, cp, cs, cb, cpl;

  auto* fit = app.add_subcommand("fit", "select and fit one model");
  std::string model = "pi";
  bool emit_tau = false;
  fit->add_option("manifest", cf.manifest, "collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  fit->add_option("--model", model, "iid, pi, delta, deltapi or sep")->capture_default_str();
  fit->add_option("--emission", cf.emission, "bernoulli or poisson (default: the manifest's)");
  fit->add_flag("--emit-tau", emit_tau, "store the membership probabilities");
  fit->add_option("-o,--out", cf.out, "artifact path")->default_val("fit.json");
  add_common(fit, cf);

  auto* compare = app.add_subcommand("compare", "fit all variants and the independent baseline");
  compare->add_option("manifest", cc.manifest, "collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  compare->add_option("--emission", cc.emission, "bernoulli or poisson");
  compare->add_option("-o,--out", cc.out, "report path")->default_val("compare.json");
  add_common(compare, cc);

  auto* cluster = app.add_subcommand("cluster", "partition the collection into sub-collections");
  std::string cluster_model = "pi";
  cluster->add_option("manifest", ccl.manifest, "collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  cluster->add_option("--model", cluster_model, "joint variant used for every group")->capture_default_str();
  cluster->add_option("--emission", ccl.emission, "bernoulli or poisson");
  cluster->add_option("-o,--out", ccl.out, "partition and dendrogram path")->default_val("partition.json");
  add_common(cluster, ccl);

  auto* predict = app.add_subcommand("predict", "masking experiments, or link probabilities of a fit");
  std::string mask_mode = "links", from_fit;
  std::vector<double> k_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::size_t replicates = 30, target = 0;
  std::vector<std::string> models{"iid", "pi", "sep"};
  predict->add_option("manifest", cp.manifest, "collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  predict->add_option("--mask-mode", mask_mode, "links or dyads")->capture_default_str();
  predict->add_option("--k-grid", k_grid, "fractions to mask")->delimiter(',')->capture_default_str();
  predict->add_option("--replicates", replicates, "masks per fraction")->capture_default_str();
  predict->add_option("--target", target, "index of the masked network (from 0)")->capture_default_str();
  predict->add_option("--models", models, "models to compare")->delimiter(',')->capture_default_str();
  predict->add_option("--fit", from_fit, "write probabilities from this artifact instead")->check(CLI::ExistingFile);
  predict->add_option("--emission", cp.emission, "bernoulli or poisson");
  predict->add_option("-o,--out", cp.out, "CSV path")->default_val("predict.csv");
  add_common(predict, cp);

  auto* simulate_cmd = app.add_subcommand("simulate", "draw a collection from given parameters");
  std::string params_path, out_dir = "simulated";
  simulate_cmd->add_option("params", params_path, "parameter file (JSON)")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("-o,--out-dir", out_dir, "output directory")->capture_default_str();
  add_common(simulate_cmd, cs, false);

  auto* bench = app.add_subcommand("benchmark", "run a simulation scenario");
  std::string scenario = "table_s1", bench_dir = "bench";
  bool fast = false;
  std::size_t bench_reps = 30;
  std::vector<double> grid;
  std::vector<std::string> variants;
  bench->add_option("--scenario", scenario, "table_s1, table_s2, partition_fig, finer_blocks or size_study")
      ->capture_default_str();
  bench->add_flag("--fast", fast, "10 replicates");
  bench->add_option("--replicates", bench_reps, "replicates per grid value")->capture_default_str();
  bench->add_option("--grid", grid, "grid values (default: the scenario's)")->delimiter(',');
  bench->add_option("--variants", variants, "joint variants, where the scenario allows")->delimiter(',');
  bench->add_option("-o,--out-dir", bench_dir, "output directory")->capture_default_str();
  cb.q_max = 6;
  add_common(bench, cb);
  cb.q_max = 6;
  bench->get_option("--qmax")->default_val(6);

  auto* plot = app.add_subcommand("plot-data", "block-sorted matrices and alpha as CSV");
  std::string plot_fit, plot_dir = "plot";
  plot->add_option("manifest", cpl.manifest, "collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  plot->add_option("--fit", plot_fit, "fit artifact")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--out-dir", plot_dir, "output directory")->capture_default_str();
  plot->add_option("--emission", cpl.emission, "bernoulli or poisson");

  CLI11_PARSE(app, argc, argv);
  const auto prepare = [](Common& c) -> Common& {
    c.seed = effective_seed(c.seed);
    set_threads(c.threads);
    return c;
  };
  try {
    if (fit->parsed()) return cmd_fit(prepare(cf), model, emit_tau);
    if (compare->parsed()) return cmd_compare(prepare(cc));
    if (cluster->parsed()) return cmd_cluster(prepare(ccl), cluster_model);
    if (predict->parsed()) return cmd_predict(prepare(cp), mask_mode, k_grid, replicates, target, models, from_fit);
    if (simulate_cmd->parsed()) return cmd_simulate(prepare(cs), params_path, out_dir);
    if (bench->parsed()) return cmd_benchmark(prepare(cb), scenario, fast, bench_reps, grid, variants, bench_dir);
    if (plot->parsed()) return cmd_plot_data(prepare(cpl), plot_fit, plot_dir);
  } catch (const std::exception& e) {
    std::cerr << "colsbm: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
