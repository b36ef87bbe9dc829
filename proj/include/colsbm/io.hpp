#pragma once

// Collection manifests, edge-list and dense readers, and fit artifacts as
// canonical JSON.

#include "colsbm/selection.hpp"
#include "colsbm/sim.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace colsbm {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline double check_weight(double w, EmissionKind kind, const std::string& where) {
  if (!std::isfinite(w) || w < 0) throw IoError(where + ": weights must be finite and nonnegative");
  if (kind == EmissionKind::poisson && w != std::floor(w))
    throw IoError(where + ": count networks need integer weights");
  if (kind == EmissionKind::bernoulli && w != 0.0 && w != 1.0)
    throw IoError(where + ": binary networks need 0/1 weights");
  return w;
}

}  // namespace detail

/// Tab-separated `src dst [weight]` records; unlisted dyads are 0 and the
/// weight NA marks a missing dyad. Nodes are numbered by first appearance.
inline Network read_edgelist(std::istream& is, EmissionKind kind, bool directed, const std::string& name = "edgelist") {
  std::map<std::string, Eigen::Index> index;
  std::vector<std::string> labels;
  struct Rec {
    Eigen::Index i, j;
    std::optional<double> w;
    std::size_t line;
  };
  std::vector<Rec> recs;
  const auto node = [&](const std::string& l) {
    const auto [it, fresh] = index.emplace(l, static_cast<Eigen::Index>(labels.size()));
    if (fresh) labels.push_back(l);
    return it->second;
  };
  std::string line;
  for (std::size_t ln = 1; std::getline(is, line); ++ln) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split(line, '\t');
    const std::string where = name + ":" + std::to_string(ln);
    if (f.size() < 2 || f.size() > 3) throw IoError(where + ": expected src<TAB>dst[<TAB>weight]");
    Rec r{node(f[0]), node(f[1]), 1.0, ln};
    if (f.size() == 3) {
      if (f[2] == "NA") {
        r.w.reset();
      } else {
        const auto v = detail::parse_number(f[2]);
        if (!v) throw IoError(where + ": unreadable weight '" + f[2] + "'");
        r.w = detail::check_weight(*v, kind, where);
      }
    }
    recs.push_back(r);
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix adj = Matrix::Zero(n, n), obs = Matrix::Ones(n, n);
  std::map<std::pair<Eigen::Index, Eigen::Index>, std::size_t> seen;
  for (const auto& r : recs) {
    if (r.i == r.j) continue;  // the diagonal is never modelled
    const std::string where = name + ":" + std::to_string(r.line);
    if (!seen.emplace(std::pair{r.i, r.j}, r.line).second) throw IoError(where + ": duplicate edge record");
    const double w = r.w.value_or(0.0);
    if (!directed) {
      if (const auto it = seen.find({r.j, r.i}); it != seen.end()) {
        const bool other_na = obs(r.j, r.i) == 0.0;
        if (other_na != !r.w.has_value() || adj(r.j, r.i) != w)
          throw IoError(where + ": asymmetric records in an undirected file");
      }
      adj(r.j, r.i) = w;
      obs(r.j, r.i) = r.w ? 1.0 : 0.0;
    }
    adj(r.i, r.j) = w;
    obs(r.i, r.j) = r.w ? 1.0 : 0.0;
  }
  return Network(std::move(adj), std::move(obs), directed, std::move(labels));
}

/// Comma-separated square matrix with an optional header row of labels (and
/// then optionally a first column of row labels); NA marks a missing dyad.
inline Network read_dense(std::istream& is, EmissionKind kind, bool directed, const std::string& name = "dense") {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    for (auto& c : f) c = detail::trim(c);
    rows.push_back(std::move(f));
  }
  if (rows.empty()) throw IoError(name + ": empty matrix");
  std::vector<std::string> labels;
  bool header = false;
  for (const auto& c : rows.front())
    if (c != "NA" && !detail::parse_number(c)) header = true;
  if (header) {
    labels = rows.front();
    rows.erase(rows.begin());
  }
  const auto n = rows.size();
  bool row_names = false;
  if (header && !labels.empty() && labels.front().empty() && labels.size() == n + 1) {
    labels.erase(labels.begin());
    row_names = true;
  }
  if (header && labels.size() != n) throw IoError(name + ": header does not match the number of rows");
  Matrix adj = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Matrix obs = Matrix::Ones(adj.rows(), adj.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    const std::size_t off = row_names ? 1 : 0;
    const std::string where = name + ": row " + std::to_string(i + 1);
    if (r.size() != n + off) throw IoError(where + " has the wrong number of fields");
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c = r[j + off];
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (c == "NA") {
        obs(ii, jj) = 0.0;
        continue;
      }
      const auto v = detail::parse_number(c);
      if (!v) throw IoError(where + ": unreadable value '" + c + "'");
      adj(ii, jj) = i == j ? 0.0 : detail::check_weight(*v, kind, where);
    }
  }
  if (!directed)
    for (Eigen::Index i = 0; i < adj.rows(); ++i)
      for (Eigen::Index j = i + 1; j < adj.cols(); ++j)
        if (obs(i, j) != obs(j, i) || adj(i, j) != adj(j, i))
          throw IoError(name + ": undirected matrix is not symmetric at (" + std::to_string(i + 1) + "," +
                        std::to_string(j + 1) + ")");
  return Network(std::move(adj), std::move(obs), directed, std::move(labels));
}

struct ManifestEntry {
  std::string name;
  std::string path;
  std::string format;
};

struct CollectionManifest {
  EmissionKind emission = EmissionKind::bernoulli;
  bool directed = true;
  std::vector<ManifestEntry> networks;
};

inline CollectionManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  CollectionManifest m;
  try {
    m.emission = parse_emission(j.value("emission", std::string("bernoulli")));
    m.directed = j.value("directed", true);
    const auto base = std::filesystem::path(path).parent_path();
    for (const auto& e : j.at("networks")) {
      ManifestEntry me;
      me.path = e.at("path").get<std::string>();
      me.name = e.value("name", std::filesystem::path(me.path).stem().string());
      me.format = e.value("format", std::string("edgelist"));
      if (me.format != "edgelist" && me.format != "dense") throw IoError(path + ": unknown format " + me.format);
      if (std::filesystem::path(me.path).is_relative()) me.path = (base / me.path).string();
      m.networks.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (m.networks.empty()) throw IoError(path + ": no networks listed");
  return m;
}

struct LoadedCollection {
  NetworkCollection collection;
  std::vector<std::string> names;
};

/// Reads every network of a manifest; `emission` overrides the manifest's.
inline LoadedCollection load_collection(const std::string& manifest_path,
                                        std::optional<EmissionKind> emission = std::nullopt) {
  auto m = read_manifest(manifest_path);
  if (emission) m.emission = *emission;
  LoadedCollection out;
  out.collection.emission = m.emission;
  for (const auto& e : m.networks) {
    std::ifstream f(e.path);
    if (!f) throw IoError("cannot open " + e.path);
    out.collection.networks.push_back(e.format == "dense" ? read_dense(f, m.emission, m.directed, e.path)
                                                          : read_edgelist(f, m.emission, m.directed, e.path));
    out.names.push_back(e.name);
  }
  out.collection.validate();
  return out;
}

// ---- fit artifacts ----

struct FitArtifact {
  std::string variant;
  std::string emission;
  bool directed = true;
  std::size_t Q = 0;
  std::vector<std::string> networks;
  std::vector<std::vector<int>> S;
  std::vector<std::vector<double>> pi;
  std::vector<std::vector<double>> alpha;
  std::vector<double> delta;
  std::vector<std::vector<std::size_t>> memberships;
  std::optional<std::vector<std::vector<std::vector<double>>>> tau;
  double elbo = 0.0;
  double bic_l = 0.0;
  bool converged = false;
  int n_iterations = 0;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string version = kVersion;

  friend bool operator==(const FitArtifact&, const FitArtifact&) = default;
};

namespace detail {

inline std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

}  // namespace detail

inline FitArtifact make_artifact(const ScoredFit& sf, const NetworkCollection& col,
                                 const std::vector<std::string>& names, const json& config, std::uint64_t seed,
                                 bool emit_tau) {
  const auto& p = sf.fit.params;
  FitArtifact a;
  a.variant = to_string(p.variant);
  a.emission = to_string(col.emission);
  a.directed = col.directed();
  a.Q = p.Q;
  a.networks = names;
  for (std::size_t m = 0; m < p.S.rows(); ++m) {
    a.S.emplace_back();
    for (std::size_t q = 0; q < p.S.cols(); ++q) a.S.back().push_back(p.S(m, q) ? 1 : 0);
  }
  a.pi = detail::rows_of(p.pi);
  a.alpha = detail::rows_of(p.alpha);
  a.delta.assign(p.delta.data(), p.delta.data() + p.delta.size());
  for (const auto& z : hard_labels(sf.fit.state)) a.memberships.push_back(z);
  if (emit_tau) {
    a.tau.emplace();
    for (const auto& t : sf.fit.state.tau) a.tau->push_back(detail::rows_of(t));
  }
  a.elbo = sf.fit.elbo;
  a.bic_l = sf.bic_l;
  a.converged = sf.fit.converged;
  a.n_iterations = sf.fit.n_iterations;
  a.config = config;
  a.seed = seed;
  return a;
}

inline json to_json(const FitArtifact& a) {
  json j;
  j["variant"] = a.variant;
  j["emission"] = a.emission;
  j["directed"] = a.directed;
  j["Q"] = a.Q;
  j["networks"] = a.networks;
  j["S"] = a.S;
  j["pi"] = a.pi;
  j["alpha"] = a.alpha;
  j["delta"] = a.delta;
  j["memberships"] = a.memberships;
  if (a.tau) j["tau"] = *a.tau;
  j["elbo"] = a.elbo;
  j["bic_l"] = a.bic_l;
  j["converged"] = a.converged;
  j["n_iterations"] = a.n_iterations;
  j["config"] = a.config;
  j["seed"] = a.seed;
  j["version"] = a.version;
  return j;
}

inline FitArtifact from_json(const json& j) {
  FitArtifact a;
  a.variant = j.at("variant").get<std::string>();
  a.emission = j.at("emission").get<std::string>();
  a.directed = j.at("directed").get<bool>();
  a.Q = j.at("Q").get<std::size_t>();
  a.networks = j.at("networks").get<std::vector<std::string>>();
  a.S = j.at("S").get<std::vector<std::vector<int>>>();
  a.pi = j.at("pi").get<std::vector<std::vector<double>>>();
  a.alpha = j.at("alpha").get<std::vector<std::vector<double>>>();
  a.delta = j.at("delta").get<std::vector<double>>();
  a.memberships = j.at("memberships").get<std::vector<std::vector<std::size_t>>>();
  if (j.contains("tau")) a.tau = j.at("tau").get<std::vector<std::vector<std::vector<double>>>>();
  a.elbo = j.at("elbo").get<double>();
  a.bic_l = j.at("bic_l").get<double>();
  a.converged = j.at("converged").get<bool>();
  a.n_iterations = j.at("n_iterations").get<int>();
  a.config = j.at("config");
  a.seed = j.at("seed").get<std::uint64_t>();
  a.version = j.at("version").get<std::string>();
  return a;
}

/// Sorted keys, no whitespace, floats at 17 significant digits and NaN or
/// infinities as null, so equal values always give equal bytes.
inline void canonical_dump(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(k).dump();
        out += ':';
        canonical_dump(v, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        canonical_dump(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        break;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

inline std::string canonical_dump(const json& j) {
  std::string s;
  canonical_dump(j, s);
  return s;
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << canonical_dump(j) << '\n';
  if (!f) throw IoError("failed writing " + path);
}

inline void write_fit(const FitArtifact& a, const std::string& path) { write_json(to_json(a), path); }

inline FitArtifact read_fit(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  try {
    return from_json(json::parse(f));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

/// Parameters and memberships of an artifact, with tau rebuilt from hard
/// labels when the artifact does not carry it.
inline Fit fit_from_artifact(const FitArtifact& a) {
  Fit f;
  auto& p = f.params;
  p.variant = parse_variant(a.variant);
  p.Q = a.Q;
  const auto M = a.S.size();
  p.S = SupportMatrix(M, a.Q, false);
  p.pi = Matrix(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(a.Q));
  p.alpha = Matrix(static_cast<Eigen::Index>(a.Q), static_cast<Eigen::Index>(a.Q));
  p.delta = Vector(static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    p.delta(static_cast<Eigen::Index>(m)) = a.delta.at(m);
    for (std::size_t q = 0; q < a.Q; ++q) {
      p.S.set(m, q, a.S[m].at(q) != 0);
      p.pi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(q)) = a.pi.at(m).at(q);
    }
  }
  for (std::size_t q = 0; q < a.Q; ++q)
    for (std::size_t r = 0; r < a.Q; ++r)
      p.alpha(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(r)) = a.alpha.at(q).at(r);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& z = a.memberships.at(m);
    Matrix t = Matrix::Zero(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(a.Q));
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (a.tau) {
        for (std::size_t q = 0; q < a.Q; ++q)
          t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = (*a.tau)[m].at(i).at(q);
      } else {
        t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z[i])) = 1.0;
      }
    }
    f.state.tau.push_back(std::move(t));
  }
  f.elbo = a.elbo;
  f.converged = a.converged;
  f.n_iterations = a.n_iterations;
  return f;
}

}  // namespace colsbm
