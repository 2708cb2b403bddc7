#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmf/factor_graph.hpp"
#include "gmf/partition.hpp"

namespace gmf {

// ---------------------------------------------------------------------------
// Canonical writers.  Every file this library emits is produced by these
// helpers: fixed key order, no whitespace, reals at 17 significant digits,
// -inf as null.  Loading a canonical file and saving it again reproduces the
// bytes exactly.

namespace detail {

inline void append_real(std::string& out, double v) {
  if (v == neg_inf) {
    out += "null";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

inline void append_string(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

template <typename T>
void append_int_array(std::string& out, const std::vector<T>& xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  out += ']';
}

inline void append_real_array(std::string& out, const std::vector<double>& xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    append_real(out, xs[i]);
  }
  out += ']';
}

inline double real_from_json(const nlohmann::json& j) {
  if (j.is_null()) return neg_inf;
  if (!j.is_number()) throw std::invalid_argument("expected a number or null");
  return j.get<double>();
}

}  // namespace detail

inline std::string save_model(const FactorGraph& g) {
  std::string out = "{\"variables\":[";
  for (std::size_t i = 0; i < g.variables.size(); ++i) {
    const Variable& v = g.variables[i];
    if (i) out += ',';
    out += "{\"id\":" + std::to_string(v.id) +
           ",\"cardinality\":" + std::to_string(v.cardinality);
    if (!v.name.empty()) {
      out += ",\"name\":";
      detail::append_string(out, v.name);
    }
    out += '}';
  }
  out += "],\"factors\":[";
  for (std::size_t i = 0; i < g.factors.size(); ++i) {
    if (i) out += ',';
    out += "{\"scope\":";
    detail::append_int_array(out, g.factors[i].scope);
    out += ",\"log_table\":";
    detail::append_real_array(out, g.factors[i].values);
    out += '}';
  }
  out += "],\"evidence\":{";
  bool first = true;
  for (const auto& [v, s] : g.evidence) {
    if (!first) out += ',';
    first = false;
    out += '"' + std::to_string(v) + "\":" + std::to_string(s);
  }
  out += "}}";
  return out;
}

inline FactorGraph load_model(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  FactorGraph g;
  if (!j.contains("variables") || !j.contains("factors"))
    throw std::invalid_argument("model file needs variables and factors");
  for (const auto& jv : j.at("variables")) {
    Variable v;
    v.id = jv.at("id").get<int>();
    v.cardinality = jv.at("cardinality").get<int>();
    if (jv.contains("name")) v.name = jv.at("name").get<std::string>();
    g.variables.push_back(std::move(v));
  }
  for (const auto& jf : j.at("factors")) {
    std::vector<VarId> scope = jf.at("scope").get<std::vector<VarId>>();
    std::vector<int> shape;
    for (VarId v : scope) {
      if (v < 0 || v >= g.num_vars())
        throw std::invalid_argument("factor scope references unknown variable");
      shape.push_back(g.cardinality(v));
    }
    std::vector<double> values;
    for (const auto& cell : jf.at("log_table"))
      values.push_back(detail::real_from_json(cell));
    g.factors.push_back(
        Factor(std::move(scope), std::move(shape), std::move(values)));
  }
  if (j.contains("evidence")) {
    for (const auto& [key, val] : j.at("evidence").items())
      g.evidence[std::stoi(key)] = val.get<int>();
  }
  g.check();
  return g;
}

inline std::string save_partition(const Partition& p) {
  std::string out = "{\"clusters\":[";
  for (std::size_t i = 0; i < p.clusters.size(); ++i) {
    if (i) out += ',';
    detail::append_int_array(out, p.clusters[i]);
  }
  out += "]}";
  return out;
}

inline Partition load_partition(const std::string& text,
                                const FactorGraph& model) {
  const nlohmann::json j = nlohmann::json::parse(text);
  std::vector<std::vector<VarId>> clusters;
  for (const auto& jc : j.at("clusters"))
    clusters.push_back(jc.get<std::vector<VarId>>());
  return Partition::build(std::move(clusters), model.num_vars());
}

// ---------------------------------------------------------------------------
// Generator sidecars.  `gen` writes one next to each model so downstream
// commands can resolve structure-aware partition schemes (grid blocks,
// layer rows, chain groups) and rebuild sampling distributions.

struct ModelMeta {
  std::string family;  // "ising", "sigmoid", or "fhmm"
  std::uint64_t seed = 0;
  bool has_observation_seed = false;
  std::uint64_t observation_seed = 0;
  // ising
  int height = 0;
  int width = 0;
  std::pair<double, double> bias_range{0.0, 0.0};
  std::pair<double, double> coupling_range{0.0, 0.0};
  // sigmoid
  std::vector<int> layer_sizes;
  int observed_layer_size = 0;
  std::pair<double, double> weight_range{0.0, 0.0};
  // fhmm
  int chains = 0;
  int steps = 0;
  int states = 0;
  int output_dim = 0;
};

inline std::string save_meta(const ModelMeta& m) {
  const auto range = [](std::pair<double, double> r) {
    std::string s = "[";
    detail::append_real(s, r.first);
    s += ',';
    detail::append_real(s, r.second);
    s += ']';
    return s;
  };
  std::string out = "{\"family\":\"" + m.family + "\"";
  if (m.family == "ising") {
    out += ",\"height\":" + std::to_string(m.height) +
           ",\"width\":" + std::to_string(m.width) +
           ",\"bias_range\":" + range(m.bias_range) +
           ",\"coupling_range\":" + range(m.coupling_range);
  } else if (m.family == "sigmoid") {
    out += ",\"layer_sizes\":";
    detail::append_int_array(out, m.layer_sizes);
    out += ",\"observed_layer_size\":" + std::to_string(m.observed_layer_size) +
           ",\"weight_range\":" + range(m.weight_range);
  } else if (m.family == "fhmm") {
    out += ",\"chains\":" + std::to_string(m.chains) +
           ",\"steps\":" + std::to_string(m.steps) +
           ",\"states\":" + std::to_string(m.states) +
           ",\"output_dim\":" + std::to_string(m.output_dim);
  } else {
    throw std::invalid_argument("unknown model family: " + m.family);
  }
  out += ",\"seed\":" + std::to_string(m.seed);
  if (m.has_observation_seed)
    out += ",\"observation_seed\":" + std::to_string(m.observation_seed);
  out += '}';
  return out;
}

/// Parses the family-specific fields; seed fields are read when present so
/// the same shape serves sidecars (seeded) and experiment configs (per-trial
/// seeds come from elsewhere).
inline ModelMeta meta_from_json(const nlohmann::json& j) {
  ModelMeta m;
  m.family = j.at("family").get<std::string>();
  if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("observation_seed")) {
    m.has_observation_seed = true;
    m.observation_seed = j.at("observation_seed").get<std::uint64_t>();
  }
  const auto range = [&](const char* key) {
    const auto& r = j.at(key);
    return std::pair<double, double>{r.at(0).get<double>(),
                                     r.at(1).get<double>()};
  };
  if (m.family == "ising") {
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.bias_range = range("bias_range");
    m.coupling_range = range("coupling_range");
  } else if (m.family == "sigmoid") {
    m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.observed_layer_size = j.at("observed_layer_size").get<int>();
    m.weight_range = range("weight_range");
  } else if (m.family == "fhmm") {
    m.chains = j.at("chains").get<int>();
    m.steps = j.at("steps").get<int>();
    m.states = j.at("states").get<int>();
    m.output_dim = j.at("output_dim").get<int>();
  } else {
    throw std::invalid_argument("unknown model family: " + m.family);
  }
  return m;
}

inline ModelMeta load_meta(const std::string& text) {
  return meta_from_json(nlohmann::json::parse(text));
}

inline std::string save_observations(
    const std::vector<std::vector<double>>& obs) {
  std::string out = "{\"observations\":[";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (i) out += ',';
    detail::append_real_array(out, obs[i]);
  }
  out += "]}";
  return out;
}

inline std::vector<std::vector<double>> load_observations(
    const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  std::vector<std::vector<double>> obs;
  for (const auto& row : j.at("observations"))
    obs.push_back(row.get<std::vector<double>>());
  return obs;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Sidecar path convention: model.json -> model.meta.json.
inline std::string meta_path_for(const std::string& model_path) {
  const std::string suffix = ".json";
  if (model_path.size() > suffix.size() &&
      model_path.compare(model_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
    return model_path.substr(0, model_path.size() - suffix.size()) +
           ".meta.json";
  return model_path + ".meta.json";
}

inline std::string obs_path_for(const std::string& model_path) {
  const std::string suffix = ".json";
  if (model_path.size() > suffix.size() &&
      model_path.compare(model_path.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
    return model_path.substr(0, model_path.size() - suffix.size()) +
           ".obs.json";
  return model_path + ".obs.json";
}

}  // namespace gmf
