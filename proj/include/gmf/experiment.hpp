#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gmf/bp.hpp"
#include "gmf/exact.hpp"
#include "gmf/gmf.hpp"
#include "gmf/io.hpp"
#include "gmf/models.hpp"
#include "gmf/partition.hpp"

namespace gmf {

/// Mean absolute marginal error: sum of |p - q| over every variable and
/// state, divided by the total state count.  Each variable's distributions
/// differ by at most 2, so the metric tops out at 2/cardinality (1.0 when
/// everything is binary).
inline double l1_error(const std::map<VarId, std::vector<double>>& p,
                       const std::map<VarId, std::vector<double>>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("marginal maps cover different variables");
  double total = 0.0;
  std::size_t states = 0;
  auto itq = q.begin();
  for (const auto& [v, pv] : p) {
    if (itq->first != v)
      throw std::invalid_argument("marginal maps cover different variables");
    const std::vector<double>& qv = itq->second;
    if (pv.size() != qv.size())
      throw std::invalid_argument("cardinality mismatch for variable " +
                                  std::to_string(v));
    for (std::size_t k = 0; k < pv.size(); ++k)
      total += std::fabs(pv[k] - qv[k]);
    states += pv.size();
    ++itq;
  }
  if (states == 0) throw std::invalid_argument("no marginals to compare");
  return total / static_cast<double>(states);
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct AlgorithmSpec {
  std::string label;
  std::string method;     // "gmf", "mf", "bp", or "exact"
  std::string partition;  // gmf only: scheme string or file path
  double damping = 0.0;   // bp only
  std::string init;       // bp only: "uniform" (default) or "random"
};

struct ModelSetting {
  std::string label;
  ModelMeta model;
};

struct ExperimentConfig {
  std::string name;
  int trials = 1;
  std::uint64_t base_seed = 0;
  double tolerance = 1e-6;
  int max_sweeps = 1000;
  int restarts = 1;
  std::size_t cap = default_cap;
  std::vector<ModelSetting> settings;
  std::vector<AlgorithmSpec> algorithms;
};

inline ExperimentConfig load_experiment_config(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig cfg;
  if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
  if (j.contains("trials")) cfg.trials = j.at("trials").get<int>();
  if (j.contains("base_seed"))
    cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("tolerance")) cfg.tolerance = j.at("tolerance").get<double>();
  if (j.contains("max_sweeps")) cfg.max_sweeps = j.at("max_sweeps").get<int>();
  if (j.contains("restarts")) cfg.restarts = j.at("restarts").get<int>();
  if (j.contains("cap")) cfg.cap = j.at("cap").get<std::size_t>();
  for (const auto& js : j.at("settings")) {
    ModelSetting s;
    if (js.contains("label")) s.label = js.at("label").get<std::string>();
    s.model = meta_from_json(js.at("model"));
    cfg.settings.push_back(std::move(s));
  }
  for (const auto& ja : j.at("algorithms")) {
    AlgorithmSpec a;
    a.label = ja.at("label").get<std::string>();
    a.method = ja.at("method").get<std::string>();
    if (ja.contains("partition"))
      a.partition = ja.at("partition").get<std::string>();
    if (ja.contains("damping")) a.damping = ja.at("damping").get<double>();
    if (ja.contains("init")) a.init = ja.at("init").get<std::string>();
    cfg.algorithms.push_back(std::move(a));
  }
  if (cfg.trials < 1) throw std::invalid_argument("trials must be positive");
  if (cfg.settings.empty() || cfg.algorithms.empty())
    throw std::invalid_argument("config needs settings and algorithms");
  return cfg;
}

// ---------------------------------------------------------------------------
// Model building and partition schemes

/// Observation and evidence sampling gets a stream decorrelated from the
/// parameter draws by flipping the seed with a fixed constant.
inline std::uint64_t observation_seed_for(std::uint64_t model_seed) {
  return model_seed ^ 0x6A09E667F3BCC909ull;
}

/// One trial's materialized model.  For fHMMs the generating process is
/// kept so baselines can rebuild the equivalent compound-variable chain.
struct BuiltModel {
  FactorGraph graph;
  bool is_fhmm = false;
  FhmmSpec fhmm;
  std::vector<std::vector<double>> observations;
};

inline BuiltModel build_model(const ModelMeta& meta, std::uint64_t seed,
                              std::size_t cap = default_cap) {
  BuiltModel out;
  if (meta.family == "ising") {
    IsingSpec spec;
    spec.height = meta.height;
    spec.width = meta.width;
    spec.bias_range = meta.bias_range;
    spec.coupling_range = meta.coupling_range;
    spec.seed = seed;
    out.graph = make_ising(spec);
  } else if (meta.family == "sigmoid") {
    SigmoidNetSpec spec;
    spec.layer_sizes = meta.layer_sizes;
    spec.observed_layer_size = meta.observed_layer_size;
    spec.weight_range = meta.weight_range;
    spec.seed = seed;
    const DirectedModel net = make_sigmoid_net(spec);
    out.graph = net.moralize();
    if (meta.observed_layer_size > 0) {
      const std::vector<int> x =
          ancestral_sample(net, observation_seed_for(seed));
      const int n = out.graph.num_vars();
      for (int v = n - meta.observed_layer_size; v < n; ++v)
        out.graph.evidence[v] = x[v];
    }
  } else if (meta.family == "fhmm") {
    out.is_fhmm = true;
    out.fhmm = random_fhmm(meta.chains, meta.steps, meta.states,
                           meta.output_dim, seed);
    out.observations =
        sample_fhmm(out.fhmm, observation_seed_for(seed)).observations;
    out.graph = make_fhmm(out.fhmm, out.observations, cap);
  } else {
    throw std::invalid_argument("unknown model family: " + meta.family);
  }
  return out;
}

namespace detail {

inline bool parse_two_ints(const std::string& s, char sep, int& a, int& b) {
  const std::size_t pos = s.find(sep);
  if (pos == std::string::npos) return false;
  try {
    a = std::stoi(s.substr(0, pos));
    b = std::stoi(s.substr(pos + 1));
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace detail

/// Turns a scheme string into a partition of the model's variables:
///   singletons           one cluster per variable
///   single               everything in one cluster
///   blocks:AxB           grids: A-row by B-column blocks
///   blocks:K             layered models: K vertical slabs through the layers
///   rows                 layered models: one cluster per layer
///   chains:C             chain models: C whole chains per cluster
///   mincut:k=K:seed=S    K balanced clusters cutting weak couplings
///   maxcut:k=K:seed=S    K balanced clusters cutting strong couplings
/// Anything else is read as a path to a partition JSON file.
inline Partition resolve_partition(const std::string& scheme,
                                   const ModelMeta& meta,
                                   const FactorGraph& graph) {
  const int n = graph.num_vars();
  if (scheme == "singletons") return singletons(n);
  if (scheme == "single") return one_cluster(n);
  if (scheme.rfind("blocks:", 0) == 0) {
    const std::string arg = scheme.substr(7);
    int a = 0, b = 0;
    if (detail::parse_two_ints(arg, 'x', a, b)) {
      if (meta.family != "ising")
        throw std::invalid_argument("blocks:AxB needs a grid model");
      return grid_blocks(meta.height, meta.width, a, b);
    }
    if (meta.family != "sigmoid")
      throw std::invalid_argument("blocks:K needs a layered model");
    std::vector<int> layers = meta.layer_sizes;
    if (meta.observed_layer_size > 0)
      layers.push_back(meta.observed_layer_size);
    return layer_blocks(layers, std::stoi(arg));
  }
  if (scheme == "rows") {
    if (meta.family != "sigmoid")
      throw std::invalid_argument("rows needs a layered model");
    std::vector<int> layers = meta.layer_sizes;
    if (meta.observed_layer_size > 0)
      layers.push_back(meta.observed_layer_size);
    return layer_rows(layers);
  }
  if (scheme.rfind("chains:", 0) == 0) {
    if (meta.family != "fhmm")
      throw std::invalid_argument("chains:C needs a chain model");
    return chain_groups(meta.chains, std::stoi(scheme.substr(7)),
                        meta.steps);
  }
  const bool mincut = scheme.rfind("mincut:", 0) == 0;
  const bool maxcut = scheme.rfind("maxcut:", 0) == 0;
  if (mincut || maxcut) {
    int k = 0;
    std::uint64_t seed = 0;
    bool have_k = false;
    std::string rest = scheme.substr(7);
    while (!rest.empty()) {
      const std::size_t pos = rest.find(':');
      const std::string part = rest.substr(0, pos);
      if (part.rfind("k=", 0) == 0) {
        k = std::stoi(part.substr(2));
        have_k = true;
      } else if (part.rfind("seed=", 0) == 0) {
        seed = std::stoull(part.substr(5));
      } else {
        throw std::invalid_argument("bad cut option: " + part);
      }
      if (pos == std::string::npos) break;
      rest = rest.substr(pos + 1);
    }
    if (!have_k) throw std::invalid_argument("cut scheme needs k=");
    return greedy_edge_cut(
        graph, k, mincut ? CutObjective::minimize : CutObjective::maximize,
        seed);
  }
  return load_partition(read_file(scheme), graph);
}

// ---------------------------------------------------------------------------
// The runner

struct TrialRecord {
  std::string algorithm;
  int trial = 0;
  std::uint64_t seed = 0;
  double l1 = 0.0;
  bool converged = false;
  double time_ms = 0.0;
  bool has_elbo = false;
  double elbo = 0.0;
};

struct SummaryStats {
  int trials = 0;
  double mean = 0.0;
  double std_dev = 0.0;  // population
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  double mean_time_ms = 0.0;
};

struct AlgorithmSummary {
  std::string id;
  SummaryStats stats;
};

struct ExperimentResult {
  std::vector<TrialRecord> records;
  std::vector<AlgorithmSummary> summaries;
  int infeasible_trials = 0;
  std::vector<std::string> notes;
};

namespace detail {

inline SummaryStats summarize(const std::vector<TrialRecord>& rs) {
  SummaryStats s;
  s.trials = static_cast<int>(rs.size());
  if (rs.empty()) return s;
  std::vector<double> l1;
  for (const TrialRecord& r : rs) {
    l1.push_back(r.l1);
    s.mean_time_ms += r.time_ms;
  }
  s.mean_time_ms /= l1.size();
  for (double x : l1) s.mean += x;
  s.mean /= l1.size();
  for (double x : l1) s.std_dev += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(s.std_dev / l1.size());
  std::sort(l1.begin(), l1.end());
  s.min = l1.front();
  s.max = l1.back();
  const std::size_t h = l1.size() / 2;
  s.median = (l1.size() % 2) ? l1[h] : 0.5 * (l1[h - 1] + l1[h]);
  return s;
}

}  // namespace detail

/// Runs every (setting, algorithm) pair over the configured trials.  Trial
/// t of a setting draws its model with seed base_seed + t, samples any
/// observations with a derived seed, computes oracle marginals, and scores
/// each algorithm's marginals by l1_error.  Trials whose oracle exceeds the
/// capacity cap are skipped and counted.  Reported times cover only the
/// inference calls, so everything except that column is deterministic.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::ostream* warn = nullptr) {
  ExperimentResult out;
  const std::size_t na = cfg.algorithms.size();
  std::vector<std::vector<TrialRecord>> per_algo(cfg.settings.size() * na);

  for (std::size_t si = 0; si < cfg.settings.size(); ++si) {
    const ModelSetting& setting = cfg.settings[si];
    for (int trial = 0; trial < cfg.trials; ++trial) {
      const std::uint64_t seed = cfg.base_seed + trial;
      const BuiltModel built = build_model(setting.model, seed, cfg.cap);

      ExactResult oracle;
      double oracle_ms = 0.0;
      try {
        const auto t0 = std::chrono::steady_clock::now();
        oracle = all_node_marginals(built.graph, cfg.cap);
        oracle_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      } catch (const capacity_error&) {
        ++out.infeasible_trials;
        if (warn)
          *warn << "warning: oracle infeasible for trial " << trial
                << " of setting '" << setting.label << "'; skipped\n";
        continue;
      }

      for (std::size_t ai = 0; ai < na; ++ai) {
        const AlgorithmSpec& algo = cfg.algorithms[ai];
        TrialRecord rec;
        rec.algorithm = setting.label.empty()
                            ? algo.label
                            : setting.label + ":" + algo.label;
        rec.trial = trial;
        rec.seed = seed;

        if (algo.method == "gmf" || algo.method == "mf") {
          GmfConfig gc;
          gc.tolerance = cfg.tolerance;
          gc.max_sweeps = cfg.max_sweeps;
          gc.restarts = cfg.restarts;
          gc.cap = cfg.cap;
          gc.seed = seed;
          const Partition part =
              (algo.method == "mf")
                  ? singletons(built.graph.num_vars())
                  : resolve_partition(algo.partition, setting.model,
                                      built.graph);
          const GmfResult res = run_gmf(built.graph, part, gc);
          rec.l1 = l1_error(oracle.marginals, res.marginals);
          rec.converged = res.converged;
          rec.time_ms = res.wall_time_ms;
          rec.has_elbo = true;
          rec.elbo = res.elbo;
        } else if (algo.method == "bp") {
          BpConfig bc;
          bc.tolerance = cfg.tolerance;
          bc.max_iters = cfg.max_sweeps;
          bc.damping = algo.damping;
          bc.cap = cfg.cap;
          if (algo.init == "random") {
            bc.init = BpConfig::Init::random;
            bc.seed = seed;
          } else if (!algo.init.empty() && algo.init != "uniform") {
            throw std::invalid_argument("unknown bp init: " + algo.init);
          }
          if (built.is_fhmm) {
            const CompoundChain cc =
                compound_chain(built.fhmm, built.observations, cfg.cap);
            const BpResult res = run_bp(cc.graph, bc);
            rec.l1 = l1_error(oracle.marginals,
                              split_compound_marginals(cc, res.marginals));
            rec.converged = res.converged;
            rec.time_ms = res.wall_time_ms;
          } else {
            const BpResult res = run_bp(built.graph, bc);
            rec.l1 = l1_error(oracle.marginals, res.marginals);
            rec.converged = res.converged;
            rec.time_ms = res.wall_time_ms;
          }
        } else if (algo.method == "exact") {
          rec.l1 = l1_error(oracle.marginals, oracle.marginals);
          rec.converged = true;
          rec.time_ms = oracle_ms;
        } else {
          throw std::invalid_argument("unknown method: " + algo.method);
        }
        per_algo[si * na + ai].push_back(std::move(rec));
      }
    }
  }

  for (std::size_t i = 0; i < per_algo.size(); ++i) {
    AlgorithmSummary s;
    s.id = per_algo[i].empty()
               ? (cfg.settings[i / na].label.empty()
                      ? cfg.algorithms[i % na].label
                      : cfg.settings[i / na].label + ":" +
                            cfg.algorithms[i % na].label)
               : per_algo[i].front().algorithm;
    s.stats = detail::summarize(per_algo[i]);
    out.summaries.push_back(std::move(s));
    for (TrialRecord& r : per_algo[i]) out.records.push_back(std::move(r));
  }

  for (const ModelSetting& s : cfg.settings)
    if (s.model.family == "sigmoid") {
      out.notes.push_back(
          "sigmoid-net biases are drawn from the same interval as the "
          "weights");
      break;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Report formatting

namespace detail {

inline std::string real_string(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string format_csv(const ExperimentResult& result) {
  std::string out = "algorithm,trial,seed,l1,converged,time_ms,elbo\n";
  char buf[40];
  for (const TrialRecord& r : result.records) {
    out += r.algorithm;
    out += ',' + std::to_string(r.trial) + ',' + std::to_string(r.seed) + ',';
    out += detail::real_string(r.l1);
    out += r.converged ? ",true," : ",false,";
    std::snprintf(buf, sizeof(buf), "%.3f", r.time_ms);
    out += buf;
    out += ',';
    if (r.has_elbo) out += detail::real_string(r.elbo);
    out += '\n';
  }
  return out;
}

inline std::string format_summary(const ExperimentResult& result) {
  std::string out = "{\"algorithms\":{";
  for (std::size_t i = 0; i < result.summaries.size(); ++i) {
    const AlgorithmSummary& s = result.summaries[i];
    if (i) out += ',';
    detail::append_string(out, s.id);
    out += ":{\"trials\":" + std::to_string(s.stats.trials);
    const auto field = [&](const char* key, double v) {
      out += ",\"";
      out += key;
      out += "\":";
      detail::append_real(out, v);
    };
    field("l1_mean", s.stats.mean);
    field("l1_std", s.stats.std_dev);
    field("l1_median", s.stats.median);
    field("l1_min", s.stats.min);
    field("l1_max", s.stats.max);
    field("mean_time_ms", s.stats.mean_time_ms);
    out += '}';
  }
  out += "},\"infeasible_trials\":" + std::to_string(result.infeasible_trials);
  out += ",\"notes\":[";
  for (std::size_t i = 0; i < result.notes.size(); ++i) {
    if (i) out += ',';
    detail::append_string(out, result.notes[i]);
  }
  out += "]}";
  return out;
}

}  // namespace gmf
