#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gmf/factor.hpp"

namespace gmf {

/// Discrete factor graph in log space.  Variable ids are dense 0..N-1.
///
/// `evidence` maps observed variables to their states.  A freshly built
/// graph may carry evidence whose factors still mention the observed
/// variables; `condition()` folds the evidence into the tables.  Factors
/// whose scope becomes empty under conditioning collapse into `log_offset`,
/// so unnormalized masses of the full and the conditioned graph satisfy
/// log p~_cond(h) = log p~(h, e), with the offset included in energy().
struct FactorGraph {
  std::vector<Variable> variables;
  std::vector<Factor> factors;
  std::map<VarId, int> evidence;
  double log_offset = 0.0;

  int num_vars() const { return static_cast<int>(variables.size()); }

  int cardinality(VarId v) const {
    if (v < 0 || v >= num_vars())
      throw std::domain_error("unknown variable " + std::to_string(v));
    return variables[v].cardinality;
  }

  bool is_hidden(VarId v) const { return evidence.find(v) == evidence.end(); }

  /// Unobserved variable ids, ascending.
  std::vector<VarId> hidden_vars() const {
    std::vector<VarId> out;
    for (const Variable& v : variables)
      if (is_hidden(v.id)) out.push_back(v.id);
    return out;
  }

  /// Product of hidden cardinalities, as a capacity check.
  std::size_t hidden_state_count() const {
    std::size_t n = 1;
    for (const Variable& v : variables) {
      if (!is_hidden(v.id)) continue;
      if (__builtin_mul_overflow(n, static_cast<std::size_t>(v.cardinality), &n))
        throw capacity_error("hidden state space overflows size_t");
    }
    return n;
  }

  /// Structural validation; throws std::invalid_argument / numeric_error.
  void check() const {
    for (int i = 0; i < num_vars(); ++i) {
      if (variables[i].id != i)
        throw std::invalid_argument("variable ids must be dense 0..N-1");
      if (variables[i].cardinality < 1)
        throw std::invalid_argument("variable " + std::to_string(i) +
                                    " has cardinality < 1");
    }
    for (std::size_t a = 0; a < factors.size(); ++a) {
      const Factor& f = factors[a];
      f.check("factor " + std::to_string(a));
      for (std::size_t p = 0; p < f.scope.size(); ++p) {
        const VarId v = f.scope[p];
        if (v < 0 || v >= num_vars())
          throw std::invalid_argument("factor " + std::to_string(a) +
                                      " scopes unknown variable " +
                                      std::to_string(v));
        if (f.shape[p] != variables[v].cardinality)
          throw std::invalid_argument("factor " + std::to_string(a) +
                                      " shape disagrees with variable " +
                                      std::to_string(v));
      }
    }
    for (const auto& [v, s] : evidence) {
      if (v < 0 || v >= num_vars())
        throw std::invalid_argument("evidence on unknown variable " +
                                    std::to_string(v));
      if (s < 0 || s >= variables[v].cardinality)
        throw std::domain_error("evidence state out of range for variable " +
                                std::to_string(v));
    }
    if (std::isnan(log_offset)) throw numeric_error("NaN log offset");
  }
};

/// Energy of a full assignment (one state per variable, indexed by id):
/// the *negative* sum of factor log-table entries, so low energy means high
/// probability.  The graph's log_offset is not part of the sum; for a
/// conditioned graph, energy(cond, a) = energy(full, a) + offset whenever a
/// agrees with the evidence.
inline double energy(const FactorGraph& g, std::span<const int> assignment) {
  if (assignment.size() != static_cast<std::size_t>(g.num_vars()))
    throw std::invalid_argument("assignment length must equal variable count");
  for (int v = 0; v < g.num_vars(); ++v)
    if (assignment[v] < 0 || assignment[v] >= g.variables[v].cardinality)
      throw std::domain_error("assignment state out of range for variable " +
                              std::to_string(v));
  double e = 0.0;
  for (const Factor& f : g.factors) {
    const auto strides = table_strides(f.shape);
    std::size_t off = 0;
    for (std::size_t p = 0; p < f.scope.size(); ++p)
      off += strides[p] * static_cast<std::size_t>(assignment[f.scope[p]]);
    e += f.values[off];
  }
  return -e;
}

/// Fold evidence into the graph: new observations are merged with any the
/// graph already carries (a conflicting re-observation is an error), every
/// factor touching an observed variable is sliced at the observed state,
/// and factors left with empty scope are absorbed into log_offset.  All
/// variables keep their ids.
inline FactorGraph condition(const FactorGraph& g,
                             const std::map<VarId, int>& observations) {
  FactorGraph out;
  out.variables = g.variables;
  out.evidence = g.evidence;
  out.log_offset = g.log_offset;
  for (const auto& [v, s] : observations) {
    if (v < 0 || v >= g.num_vars())
      throw std::invalid_argument("observation on unknown variable " +
                                  std::to_string(v));
    if (s < 0 || s >= g.variables[v].cardinality)
      throw std::domain_error("observed state out of range for variable " +
                              std::to_string(v));
    const auto it = out.evidence.find(v);
    if (it != out.evidence.end() && it->second != s)
      throw std::invalid_argument("conflicting evidence for variable " +
                                  std::to_string(v));
    out.evidence[v] = s;
  }
  out.factors.reserve(g.factors.size());
  for (const Factor& f : g.factors) {
    Factor sliced = observe(f, out.evidence);
    if (sliced.scalar())
      out.log_offset += sliced.values[0];
    else
      out.factors.push_back(std::move(sliced));
  }
  return out;
}

/// Adjacency lists of the interaction graph: u ~ v iff some factor scopes
/// both.  Lists are ascending and exclude self-loops.
inline std::vector<std::vector<VarId>> interaction_graph(const FactorGraph& g) {
  std::vector<std::set<VarId>> adj(g.num_vars());
  for (const Factor& f : g.factors)
    for (std::size_t i = 0; i < f.scope.size(); ++i)
      for (std::size_t j = i + 1; j < f.scope.size(); ++j) {
        adj[f.scope[i]].insert(f.scope[j]);
        adj[f.scope[j]].insert(f.scope[i]);
      }
  std::vector<std::vector<VarId>> out(g.num_vars());
  for (int v = 0; v < g.num_vars(); ++v)
    out[v].assign(adj[v].begin(), adj[v].end());
  return out;
}

/// Directed model: one tabular CPD per variable.  CPD tables are log
/// conditional probabilities with scope (parents..., child), child fastest.
struct DirectedModel {
  struct Cpd {
    VarId child = 0;
    std::vector<VarId> parents;
    std::vector<double> log_table;
  };

  std::vector<Variable> variables;
  std::vector<Cpd> cpds;  // one per variable, in child-id order

  int num_vars() const { return static_cast<int>(variables.size()); }

  /// Checks: dense ids, one CPD per variable in id order, acyclic under a
  /// topological numbering (parents precede children), rows normalized.
  void check() const {
    for (int i = 0; i < num_vars(); ++i)
      if (variables[i].id != i)
        throw std::invalid_argument("variable ids must be dense 0..N-1");
    if (cpds.size() != variables.size())
      throw std::invalid_argument("need exactly one CPD per variable");
    for (int i = 0; i < num_vars(); ++i) {
      const Cpd& c = cpds[i];
      if (c.child != i)
        throw std::invalid_argument("CPDs must be listed in child-id order");
      std::size_t rows = 1;
      for (VarId p : c.parents) {
        if (p < 0 || p >= num_vars())
          throw std::invalid_argument("CPD parent out of range");
        if (p >= c.child)
          throw std::invalid_argument(
              "parents must precede children in id order");
        rows *= static_cast<std::size_t>(variables[p].cardinality);
      }
      const std::size_t card = variables[i].cardinality;
      if (c.log_table.size() != rows * card)
        throw std::invalid_argument("CPD table size mismatch for variable " +
                                    std::to_string(i));
      for (std::size_t r = 0; r < rows; ++r) {
        const std::span<const double> row(c.log_table.data() + r * card, card);
        const double z = log_sum_exp(row);
        if (std::isnan(z) || std::fabs(z) > 1e-12)
          throw std::invalid_argument("CPD row " + std::to_string(r) +
                                      " for variable " + std::to_string(i) +
                                      " is not normalized");
      }
    }
  }

  /// Conversion to an undirected graph: one factor per family, scope
  /// (parents..., child).  Since the tables are already moral-clique
  /// potentials, the product of factors equals the joint and the partition
  /// function is exactly one.
  FactorGraph moralize() const {
    check();
    FactorGraph g;
    g.variables = variables;
    g.factors.reserve(cpds.size());
    for (const Cpd& c : cpds) {
      std::vector<VarId> scope = c.parents;
      scope.push_back(c.child);
      std::vector<int> shape;
      shape.reserve(scope.size());
      for (VarId v : scope) shape.push_back(variables[v].cardinality);
      g.factors.emplace_back(std::move(scope), std::move(shape), c.log_table);
    }
    g.check();
    return g;
  }
};

}  // namespace gmf
