#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gmf/factor_graph.hpp"

namespace gmf {

struct ExactResult {
  double log_partition = neg_inf;
  /// Posterior marginal per hidden variable, linear probabilities.
  std::map<VarId, std::vector<double>> marginals;
};

namespace detail {

class BitSet {
 public:
  explicit BitSet(int n = 0) : n_(n), w_((n + 63) / 64, 0) {}
  void set(int i) { w_[i >> 6] |= (std::uint64_t{1} << (i & 63)); }
  void reset(int i) { w_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  bool test(int i) const { return (w_[i >> 6] >> (i & 63)) & 1; }
  int count() const {
    int c = 0;
    for (std::uint64_t x : w_) c += std::popcount(x);
    return c;
  }
  BitSet& operator&=(const BitSet& o) {
    for (std::size_t i = 0; i < w_.size(); ++i) w_[i] &= o.w_[i];
    return *this;
  }
  BitSet& operator|=(const BitSet& o) {
    for (std::size_t i = 0; i < w_.size(); ++i) w_[i] |= o.w_[i];
    return *this;
  }
  /// Number of set bits of *this not present in o.
  int count_andnot(const BitSet& o) const {
    int c = 0;
    for (std::size_t i = 0; i < w_.size(); ++i)
      c += std::popcount(w_[i] & ~o.w_[i]);
    return c;
  }
  template <typename Fn>
  void for_each(Fn fn) const {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      std::uint64_t x = w_[i];
      while (x) {
        const int b = std::countr_zero(x);
        fn(static_cast<int>(i * 64 + b));
        x &= x - 1;
      }
    }
  }

 private:
  int n_;
  std::vector<std::uint64_t> w_;
};

}  // namespace detail

/// Greedy minimum-fill elimination order over the hidden variables of a
/// graph, excluding `keep` (query variables stay uneliminated but still
/// participate in fill edges).  Ties break toward the lowest id, so the
/// order is deterministic.
inline std::vector<VarId> min_fill_order(const FactorGraph& g,
                                         const std::set<VarId>& keep = {}) {
  const int n = g.num_vars();
  std::vector<detail::BitSet> adj(n, detail::BitSet(n));
  for (const Factor& f : g.factors)
    for (std::size_t i = 0; i < f.scope.size(); ++i)
      for (std::size_t j = i + 1; j < f.scope.size(); ++j) {
        adj[f.scope[i]].set(f.scope[j]);
        adj[f.scope[j]].set(f.scope[i]);
      }
  detail::BitSet remaining(n);
  std::vector<VarId> candidates;
  for (VarId v : g.hidden_vars()) {
    remaining.set(v);
    if (keep.find(v) == keep.end()) candidates.push_back(v);
  }
  std::vector<VarId> order;
  order.reserve(candidates.size());
  std::vector<char> done(n, 0);
  for (std::size_t round = 0; round < candidates.size(); ++round) {
    VarId best = -1;
    long best_fill = -1;
    for (VarId v : candidates) {
      if (done[v]) continue;
      detail::BitSet nb = adj[v];
      nb &= remaining;
      nb.reset(v);
      long missing = 0;
      nb.for_each([&](int u) {
        detail::BitSet other = nb;
        other.reset(u);
        missing += other.count_andnot(adj[u]);
      });
      const long fill = missing / 2;
      if (best < 0 || fill < best_fill) {
        best = v;
        best_fill = fill;
      }
    }
    order.push_back(best);
    done[best] = 1;
    remaining.reset(best);
    detail::BitSet nb = adj[best];
    nb &= remaining;
    nb.for_each([&](int u) {
      adj[u] |= nb;
      adj[u].reset(u);
    });
  }
  return order;
}

struct VeOptions {
  std::size_t cap = default_cap;
  /// Optional elimination order; must be a permutation of the hidden
  /// non-query variables.  Empty means greedy min-fill.
  std::vector<VarId> order;
};

struct VeResult {
  double log_partition = neg_inf;
  /// Normalized linear posterior over the query variables, scope ascending.
  /// Scalar factor (value 1) for an empty query.
  Factor marginal;
};

/// Variable elimination.  Conditions the graph on its own evidence, sums
/// out all hidden variables outside `query`, and returns the log partition
/// function together with the normalized joint posterior of the query set.
inline VeResult variable_elimination(const FactorGraph& g,
                                     std::vector<VarId> query,
                                     const VeOptions& opts = {}) {
  const FactorGraph cond = condition(g, {});
  if (cond.hidden_vars().empty())
    throw std::invalid_argument("variable elimination needs a hidden variable");
  std::sort(query.begin(), query.end());
  if (std::adjacent_find(query.begin(), query.end()) != query.end())
    throw std::invalid_argument("repeated query variable");
  std::set<VarId> qset(query.begin(), query.end());
  for (VarId v : query)
    if (v < 0 || v >= cond.num_vars() || !cond.is_hidden(v))
      throw std::invalid_argument("query variable " + std::to_string(v) +
                                  " is not a hidden variable");

  std::vector<VarId> order;
  if (!opts.order.empty()) {
    order = opts.order;
    std::set<VarId> expect;
    for (VarId v : cond.hidden_vars())
      if (!qset.count(v)) expect.insert(v);
    std::set<VarId> got(order.begin(), order.end());
    if (got != expect || got.size() != order.size())
      throw std::invalid_argument(
          "elimination order must cover each hidden non-query variable once");
  } else {
    order = min_fill_order(cond, qset);
  }

  std::vector<Factor> active = cond.factors;
  for (VarId v : order) {
    std::vector<Factor> bucket;
    std::vector<Factor> rest;
    std::set<VarId> union_scope;
    for (Factor& f : active) {
      if (f.position_of(v) >= 0) {
        for (VarId u : f.scope) union_scope.insert(u);
        bucket.push_back(std::move(f));
      } else {
        rest.push_back(std::move(f));
      }
    }
    active = std::move(rest);
    if (bucket.empty()) {
      // A variable no factor mentions is uniform; it contributes its state
      // count to the partition function.
      active.emplace_back(std::vector<VarId>{}, std::vector<int>{},
                          std::vector<double>{std::log(
                              static_cast<double>(cond.cardinality(v)))});
      continue;
    }
    std::size_t cells = 1;
    for (VarId u : union_scope) {
      if (__builtin_mul_overflow(
              cells, static_cast<std::size_t>(cond.cardinality(u)), &cells))
        throw capacity_error("elimination table overflows size_t");
    }
    if (cells > opts.cap)
      throw capacity_error("eliminating variable " + std::to_string(v) +
                           " needs a table of " + std::to_string(cells) +
                           " cells (cap " + std::to_string(opts.cap) + ")");
    Factor prod = std::move(bucket[0]);
    for (std::size_t i = 1; i < bucket.size(); ++i)
      prod = multiply(prod, bucket[i]);
    std::vector<VarId> keep;
    for (VarId u : prod.scope)
      if (u != v) keep.push_back(u);
    active.push_back(marginalize(prod, keep));
  }

  // Multiply what is left into a joint over (a subset of) the query set.
  std::set<VarId> remaining_scope;
  for (const Factor& f : active)
    for (VarId u : f.scope) remaining_scope.insert(u);
  std::size_t cells = 1;
  for (VarId u : remaining_scope)
    cells *= static_cast<std::size_t>(cond.cardinality(u));
  if (cells > opts.cap)
    throw capacity_error("query joint needs " + std::to_string(cells) +
                         " cells (cap " + std::to_string(opts.cap) + ")");
  Factor joint(std::vector<VarId>{}, std::vector<int>{},
               std::vector<double>{0.0});
  for (const Factor& f : active) joint = multiply(joint, f);
  for (VarId v : query)
    if (joint.position_of(v) < 0)
      joint = multiply(
          joint, Factor({v}, {cond.cardinality(v)}, 0.0));

  VeResult res;
  res.log_partition = cond.log_offset + log_sum_exp(joint.values);
  if (std::isnan(res.log_partition))
    throw numeric_error("NaN log partition in variable elimination");
  if (query.empty()) {
    res.marginal = Factor({}, {}, std::vector<double>{1.0});
  } else {
    res.marginal = to_linear(reorder(joint, query));
  }
  return res;
}

/// Exact log partition function via variable elimination.
inline double log_partition(const FactorGraph& g, std::size_t cap = default_cap) {
  VeOptions opts;
  opts.cap = cap;
  return variable_elimination(g, {}, opts).log_partition;
}

/// Exhaustive enumeration of the hidden state space.  Linear accumulation
/// under a shifted exponential keeps the sums stable; the shift needs one
/// extra pass to find the maximum energy.
inline ExactResult brute_force(const FactorGraph& g,
                               std::size_t cap = default_cap) {
  const FactorGraph cond = condition(g, {});
  const std::vector<VarId> hidden = cond.hidden_vars();
  if (hidden.empty())
    throw std::invalid_argument("brute force needs a hidden variable");
  const std::size_t states = cond.hidden_state_count();
  if (states > cap)
    throw capacity_error("state space of " + std::to_string(states) +
                         " exceeds cap " + std::to_string(cap));
  std::vector<int> shape;
  shape.reserve(hidden.size());
  for (VarId v : hidden) shape.push_back(cond.cardinality(v));

  const auto make_walker = [&](std::vector<int>& views) {
    Walker w(shape);
    views.clear();
    for (const Factor& f : cond.factors)
      views.push_back(w.add_view(stride_map(hidden, shape, f)));
    return w;
  };

  std::vector<int> views;
  double max_e = neg_inf;
  {
    Walker w = make_walker(views);
    do {
      double e = 0.0;
      for (std::size_t a = 0; a < cond.factors.size(); ++a)
        e += cond.factors[a].values[w.offset(views[a])];
      max_e = std::max(max_e, e);
    } while (w.advance());
  }
  ExactResult res;
  if (max_e == neg_inf)
    throw numeric_error("every assignment has zero probability");

  std::vector<std::vector<double>> acc(hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i)
    acc[i].assign(shape[i], 0.0);
  double total = 0.0;
  {
    Walker w = make_walker(views);
    do {
      double e = 0.0;
      for (std::size_t a = 0; a < cond.factors.size(); ++a)
        e += cond.factors[a].values[w.offset(views[a])];
      if (e != neg_inf) {
        const double p = std::exp(e - max_e);
        total += p;
        const std::vector<int>& d = w.digits();
        for (std::size_t i = 0; i < hidden.size(); ++i) acc[i][d[i]] += p;
      }
    } while (w.advance());
  }
  res.log_partition = cond.log_offset + max_e + std::log(total);
  if (std::isnan(res.log_partition))
    throw numeric_error("NaN log partition in brute force");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    std::vector<double>& m = acc[i];
    for (double& x : m) x /= total;
    res.marginals[hidden[i]] = std::move(m);
  }
  return res;
}

/// Exact posterior marginal of every hidden variable via one variable
/// elimination run per query.  The elimination order is recomputed per
/// query; heuristic orders are cheap next to the eliminations themselves.
inline ExactResult all_node_marginals(const FactorGraph& g,
                                      std::size_t cap = default_cap) {
  const FactorGraph cond = condition(g, {});
  VeOptions opts;
  opts.cap = cap;
  ExactResult res;
  bool first = true;
  double drift = 0.0;
  for (VarId v : cond.hidden_vars()) {
    VeResult r = variable_elimination(cond, {v}, opts);
    if (first) {
      res.log_partition = r.log_partition;
      first = false;
    } else {
      drift = std::max(drift, std::fabs(r.log_partition - res.log_partition));
    }
    res.marginals[v] = std::move(r.marginal.values);
  }
  if (first) throw std::invalid_argument("no hidden variables to query");
  if (drift > 1e-9)
    std::clog << "note: per-query log-partition drift " << drift << "\n";
  return res;
}

}  // namespace gmf
