#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gmf/exact.hpp"
#include "gmf/partition.hpp"
#include "gmf/rng.hpp"

namespace gmf {

struct GmfConfig {
  enum class Init { random, uniform };
  double tolerance = 1e-6;
  int max_sweeps = 1000;
  Init init = Init::random;
  std::uint64_t seed = 0;
  int restarts = 1;
  std::size_t cap = default_cap;
  /// Test hook: update clusters in this order instead of ascending index.
  /// Must be a permutation of the active clusters.
  std::vector<int> update_order;
};

/// One cluster's variational factor q_i, represented by the local graph the
/// engine optimizes it against.  Local variable k is global id members[k].
struct ClusterState {
  int cluster = -1;
  std::vector<VarId> members;  // hidden members, global ids, ascending
  FactorGraph local;
  double local_log_partition = 0.0;
  /// Border factor index -> boundary marginal (linear, global ascending scope).
  std::map<int, Factor> boundary;
};

struct GmfResult {
  std::map<VarId, std::vector<double>> marginals;
  double elbo = neg_inf;
  /// One entry after the first full sweep, then one per cluster update.
  std::vector<double> elbo_trace;
  int sweeps = 0;
  bool converged = false;
  int restart_index = 0;
  double wall_time_ms = 0.0;
};

/// Coordinate ascent on the evidence lower bound over a disjoint clustering.
///
/// Each update replaces one cluster's factor by the exact conditional of the
/// cluster given its current expected boundary, which maximizes the bound in
/// that coordinate; the bound therefore never decreases between updates.
/// Messages are the boundary marginals other clusters need, so convergence
/// is measured on them.
class GmfEngine {
 public:
  GmfEngine(const FactorGraph& model, Partition partition, GmfConfig cfg = {})
      : part_(std::move(partition)), cfg_(cfg) {
    model.check();
    cond_ = condition(model, {});
    topo_ = derive_topology(cond_, part_);
    const int nc = part_.size();
    members_.resize(nc);
    local_of_.assign(cond_.num_vars(), -1);
    for (int c = 0; c < nc; ++c) {
      for (VarId v : part_.clusters[c])
        if (cond_.is_hidden(v)) {
          local_of_[v] = static_cast<int>(members_[c].size());
          members_[c].push_back(v);
        }
      if (!members_[c].empty()) active_.push_back(c);
    }
    if (active_.empty())
      throw std::invalid_argument("every variable is observed");

    local_base_.resize(nc);
    base_order_.resize(nc);
    for (int c : active_) {
      FactorGraph& lg = local_base_[c];
      for (std::size_t k = 0; k < members_[c].size(); ++k)
        lg.variables.push_back(
            {static_cast<VarId>(k), cond_.cardinality(members_[c][k]), ""});
      for (int a : topo_.interior_factors[c])
        lg.factors.push_back(to_local(c, cond_.factors[a]));
      // The elimination heuristic runs once per cluster on the cluster's
      // full local structure (border factors included with blank tables);
      // per-query orders are filtered from it.
      FactorGraph scratch = lg;
      for (int a : topo_.border_factors[c])
        scratch.factors.push_back(
            to_local(c, Factor(overlap_of(a, c),
                               shape_of(overlap_of(a, c)), 0.0)));
      base_order_[c] = min_fill_order(scratch);
    }
    factor_term_.assign(cond_.factors.size(), 0.0);
    entropy_.assign(nc, 0.0);
    states_.resize(nc);
  }

  const FactorGraph& conditioned() const { return cond_; }
  const ClusterTopology& topology() const { return topo_; }
  const Partition& partition() const { return part_; }
  const std::vector<int>& active_clusters() const { return active_; }
  const ClusterState& state(int c) const { return states_.at(c); }

  const Factor& message(int factor, int cluster) const {
    return messages_.at({factor, cluster});
  }

  /// Test hook: overwrite one boundary marginal (linear, must match the
  /// stored scope and sum to one up to rounding).
  void set_message(int factor, int cluster, Factor linear) {
    Factor& slot = messages_.at({factor, cluster});
    if (linear.scope != slot.scope || linear.shape != slot.shape)
      throw std::invalid_argument("replacement message scope mismatch");
    slot = std::move(linear);
  }

  /// Fresh boundary marginals for every (border factor, participant) pair.
  /// Draw order is fixed: factors ascending, participants ascending, table
  /// entries row-major, so a seed fully determines the start point.
  void init_messages(std::uint64_t seed) {
    messages_.clear();
    SplitMix64 rng(seed);
    for (std::size_t a = 0; a < cond_.factors.size(); ++a) {
      if (!topo_.is_border(static_cast<int>(a))) continue;
      for (const auto& part : topo_.factor_participants[a]) {
        Factor m(part.overlap, shape_of(part.overlap));
        if (cfg_.init == GmfConfig::Init::random) {
          double sum = 0.0;
          do {
            sum = 0.0;
            for (double& v : m.values) sum += (v = rng.uniform());
          } while (sum == 0.0);
          for (double& v : m.values) v /= sum;
        } else {
          const double u = 1.0 / static_cast<double>(m.size());
          for (double& v : m.values) v = u;
        }
        messages_[{static_cast<int>(a), part.cluster}] = std::move(m);
      }
    }
  }

  /// Expectation of a border factor's log table over every participant's
  /// current boundary marginal except cluster c's own.  The result scopes
  /// exactly c's share of the factor (global ids).
  Factor expected_border_factor(int c, int factor) const {
    Factor acc = cond_.factors[factor];
    for (const auto& part : topo_.factor_participants[factor])
      if (part.cluster != c)
        acc = expect_over(acc, messages_.at({factor, part.cluster}));
    return acc;
  }

  /// Recompute cluster c's factor as the exact conditional given the
  /// current boundary, refresh its outgoing marginals and the cached bound
  /// terms, and return the largest message entry change.
  double update_cluster(int c) {
    if (members_.at(c).empty())
      throw std::invalid_argument("cluster " + std::to_string(c) +
                                  " has no hidden variables");
    FactorGraph lg = local_base_[c];
    // Cond-factor index per local factor, for the cached bound terms.
    std::vector<int> origin = topo_.interior_factors[c];
    for (int a : topo_.border_factors[c]) {
      lg.factors.push_back(to_local(c, expected_border_factor(c, a)));
      origin.push_back(a);
    }

    VeOptions opts;
    opts.cap = cfg_.cap;
    double logz = 0.0;
    bool have_logz = false;
    double delta = 0.0;
    std::map<int, Factor> boundary;
    for (int a : topo_.border_factors[c]) {
      const std::vector<VarId> overlap = overlap_of(a, c);
      std::vector<VarId> q(overlap.size());
      for (std::size_t i = 0; i < overlap.size(); ++i)
        q[i] = local_of_[overlap[i]];
      opts.order = filtered_order(c, q);
      VeResult r = variable_elimination(lg, q, opts);
      if (!have_logz) {
        logz = r.log_partition;
        have_logz = true;
      }
      Factor msg = std::move(r.marginal);
      msg.scope = overlap;  // local ids are ascending in global order
      const Factor& old = messages_.at({a, c});
      for (std::size_t k = 0; k < msg.values.size(); ++k)
        delta = std::max(delta, std::fabs(msg.values[k] - old.values[k]));
      boundary[a] = std::move(msg);
    }
    if (!have_logz) {
      opts.order = filtered_order(c, {});
      logz = variable_elimination(lg, {}, opts).log_partition;
    }

    double ent = logz;
    for (std::size_t gi = 0; gi < lg.factors.size(); ++gi) {
      const Factor& fac = lg.factors[gi];
      opts.order = filtered_order(c, fac.scope);
      VeResult mr = variable_elimination(lg, fac.scope, opts);
      const double e = expected_value(fac, mr.marginal);
      ent -= e;
      factor_term_[origin[gi]] = e;
    }
    if (std::isnan(ent)) throw numeric_error("NaN cluster entropy");
    entropy_[c] = ent;

    for (auto& [a, msg] : boundary) messages_[{a, c}] = msg;
    ClusterState& st = states_[c];
    st.cluster = c;
    st.members = members_[c];
    st.local = std::move(lg);
    st.local_log_partition = logz;
    st.boundary = std::move(boundary);
    return delta;
  }

  /// Cached bound: evidence offset plus expected log factors plus cluster
  /// entropies.  Valid once every active cluster has been updated.
  double elbo() const {
    double e = cond_.log_offset;
    for (double t : factor_term_) e += t;
    for (int c : active_) e += entropy_[c];
    return e;
  }

  /// One full optimization from a fresh initialization.
  GmfResult run(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::fill(factor_term_.begin(), factor_term_.end(), 0.0);
    std::fill(entropy_.begin(), entropy_.end(), 0.0);
    states_.assign(states_.size(), ClusterState{});
    init_messages(seed);

    std::vector<int> order = cfg_.update_order.empty() ? active_
                                                       : cfg_.update_order;
    {
      std::vector<int> a = order, b = active_;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b)
        throw std::invalid_argument(
            "update order must permute the active clusters");
    }

    GmfResult res;
    for (int sweep = 1; sweep <= cfg_.max_sweeps; ++sweep) {
      double delta = 0.0;
      for (int c : order) {
        delta = std::max(delta, update_cluster(c));
        if (sweep > 1) res.elbo_trace.push_back(elbo());
      }
      if (sweep == 1) res.elbo_trace.push_back(elbo());
      res.sweeps = sweep;
      if (delta < cfg_.tolerance) {
        res.converged = true;
        break;
      }
    }
    res.elbo = elbo();

    VeOptions opts;
    opts.cap = cfg_.cap;
    for (int c : active_) {
      for (VarId v : members_[c]) {
        const std::vector<VarId> q{local_of_[v]};
        opts.order = filtered_order(c, q);
        VeResult r = variable_elimination(states_[c].local, q, opts);
        res.marginals[v] = std::move(r.marginal.values);
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    res.wall_time_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    return res;
  }

 private:
  std::vector<int> shape_of(const std::vector<VarId>& vars) const {
    std::vector<int> s;
    s.reserve(vars.size());
    for (VarId v : vars) s.push_back(cond_.cardinality(v));
    return s;
  }

  const std::vector<VarId>& overlap_of(int factor, int c) const {
    for (const auto& part : topo_.factor_participants[factor])
      if (part.cluster == c) return part.overlap;
    throw std::invalid_argument("cluster does not participate in factor");
  }

  Factor to_local(int c, const Factor& f) const {
    Factor out = f;
    for (VarId& v : out.scope) {
      if (v < 0 || local_of_[v] < 0 || part_.cluster_of[v] != c)
        throw std::invalid_argument("factor variable outside cluster");
      v = local_of_[v];
    }
    return out;
  }

  /// Base elimination order minus the query variables (local ids).
  std::vector<VarId> filtered_order(int c,
                                    const std::vector<VarId>& query) const {
    std::vector<VarId> order;
    order.reserve(base_order_[c].size());
    for (VarId v : base_order_[c])
      if (std::find(query.begin(), query.end(), v) == query.end())
        order.push_back(v);
    return order;
  }

  FactorGraph cond_;
  Partition part_;
  GmfConfig cfg_;
  ClusterTopology topo_;
  std::vector<int> active_;
  std::vector<std::vector<VarId>> members_;
  std::vector<VarId> local_of_;  // global id -> local id within its cluster
  std::vector<FactorGraph> local_base_;
  std::vector<std::vector<VarId>> base_order_;  // local ids
  std::map<std::pair<int, int>, Factor> messages_;
  std::vector<double> factor_term_;
  std::vector<double> entropy_;
  std::vector<ClusterState> states_;
};

/// Multi-restart driver; restart r runs from seed cfg.seed + r and the
/// result with the best bound wins.  Wall time covers all restarts.
inline GmfResult run_gmf(const FactorGraph& model, const Partition& partition,
                         const GmfConfig& cfg = {}) {
  if (cfg.restarts < 1) throw std::invalid_argument("need at least 1 restart");
  GmfEngine engine(model, partition, cfg);
  GmfResult best;
  double total_ms = 0.0;
  for (int r = 0; r < cfg.restarts; ++r) {
    GmfResult res = engine.run(cfg.seed + static_cast<std::uint64_t>(r));
    res.restart_index = r;
    total_ms += res.wall_time_ms;
    if (r == 0 || res.elbo > best.elbo) best = std::move(res);
  }
  best.wall_time_ms = total_ms;
  return best;
}

/// Fully factorized special case: every variable its own cluster.
inline GmfResult naive_mean_field(const FactorGraph& model,
                                  const GmfConfig& cfg = {}) {
  return run_gmf(model, singletons(model.num_vars()), cfg);
}

/// Bound recomputed from scratch for a given set of cluster factors, with
/// no reliance on engine caches.  States must cover every cluster that has
/// hidden variables.
inline double evidence_lower_bound(const FactorGraph& model,
                                   const Partition& partition,
                                   const std::vector<ClusterState>& states,
                                   std::size_t cap = default_cap) {
  const FactorGraph cond = condition(model, {});
  const ClusterTopology topo = derive_topology(cond, partition);
  std::map<int, const ClusterState*> by_cluster;
  for (const ClusterState& st : states) by_cluster[st.cluster] = &st;

  VeOptions opts;
  opts.cap = cap;
  const auto cluster_marginal = [&](int c,
                                    const std::vector<VarId>& vars) -> Factor {
    const ClusterState& st = *by_cluster.at(c);
    std::vector<VarId> q;
    for (VarId v : vars) {
      const auto it =
          std::find(st.members.begin(), st.members.end(), v);
      if (it == st.members.end())
        throw std::invalid_argument("variable missing from cluster state");
      q.push_back(static_cast<VarId>(it - st.members.begin()));
    }
    Factor m = variable_elimination(st.local, q, opts).marginal;
    std::sort(q.begin(), q.end());
    for (VarId& v : m.scope) v = st.members[v];
    return m;
  };

  double bound = cond.log_offset;
  for (std::size_t a = 0; a < cond.factors.size(); ++a) {
    Factor acc = cond.factors[a];
    for (const auto& part : topo.factor_participants[a])
      acc = expect_over(acc, cluster_marginal(part.cluster, part.overlap));
    if (!acc.scalar())
      throw std::invalid_argument("factor scope not covered by the partition");
    bound += acc.values[0];
  }
  for (int c = 0; c < partition.size(); ++c) {
    const auto it = by_cluster.find(c);
    if (it == by_cluster.end()) continue;
    const ClusterState& st = *it->second;
    if (st.members.empty()) continue;
    double ent = variable_elimination(st.local, {}, opts).log_partition;
    for (const Factor& fac : st.local.factors) {
      VeResult mr = variable_elimination(st.local, fac.scope, opts);
      ent -= expected_value(fac, mr.marginal);
    }
    bound += ent;
  }
  if (std::isnan(bound)) throw numeric_error("NaN evidence lower bound");
  return bound;
}

/// Same bound once more, this time by exhaustive enumeration: the expected
/// log unnormalized probability under the product of cluster factors plus
/// the cluster entropies.  Purely a cross-check for tests.
inline double enumerated_elbo(const FactorGraph& model,
                              const Partition& partition,
                              const std::vector<ClusterState>& states,
                              std::size_t cap = default_cap) {
  const FactorGraph cond = condition(model, {});
  const std::vector<VarId> hidden = cond.hidden_vars();
  if (cond.hidden_state_count() > cap)
    throw capacity_error("state space exceeds cap");
  std::map<int, const ClusterState*> by_cluster;
  for (const ClusterState& st : states)
    if (!st.members.empty()) by_cluster[st.cluster] = &st;

  // Dense per-cluster distributions, indexed by local flat state.
  std::map<int, std::vector<double>> dist;
  double entropy_sum = 0.0;
  for (const auto& [c, st] : by_cluster) {
    std::vector<int> shape;
    for (VarId v : st->members) shape.push_back(cond.cardinality(v));
    std::vector<VarId> lids(st->members.size());
    for (std::size_t i = 0; i < lids.size(); ++i) lids[i] = static_cast<VarId>(i);
    Factor joint(lids, shape, 0.0);
    Walker w(joint.shape);
    std::vector<int> views;
    for (const Factor& f : st->local.factors)
      views.push_back(w.add_view(stride_map(lids, joint.shape, f)));
    std::size_t k = 0;
    do {
      double e = 0.0;
      for (std::size_t a = 0; a < st->local.factors.size(); ++a)
        e += st->local.factors[a].values[w.offset(views[a])];
      joint.values[k++] = e;
    } while (w.advance());
    Factor lin = to_linear(joint);
    for (double p : lin.values)
      if (p > 0.0) entropy_sum -= p * std::log(p);
    dist[c] = std::move(lin.values);
  }

  std::vector<int> shape;
  for (VarId v : hidden) shape.push_back(cond.cardinality(v));
  // Per cluster, the local flat stride of each hidden position.
  std::map<int, std::vector<std::size_t>> cluster_stride;
  for (const auto& [c, st] : by_cluster) {
    std::vector<int> lshape;
    for (VarId v : st->members) lshape.push_back(cond.cardinality(v));
    const auto ls = table_strides(lshape);
    std::vector<std::size_t> per_hidden(hidden.size(), 0);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      const auto it =
          std::find(st->members.begin(), st->members.end(), hidden[i]);
      if (it != st->members.end())
        per_hidden[i] = ls[it - st->members.begin()];
    }
    cluster_stride[c] = std::move(per_hidden);
  }

  double expected_energy = 0.0;
  bool energy_inf = false;
  Walker w(shape);
  std::vector<int> views;
  for (const Factor& f : cond.factors)
    views.push_back(w.add_view(stride_map(hidden, shape, f)));
  do {
    double weight = 1.0;
    for (const auto& [c, strides] : cluster_stride) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < hidden.size(); ++i)
        idx += strides[i] * static_cast<std::size_t>(w.digits()[i]);
      weight *= dist[c][idx];
      if (weight == 0.0) break;
    }
    if (weight == 0.0) continue;
    double e = 0.0;
    for (std::size_t a = 0; a < cond.factors.size(); ++a)
      e += cond.factors[a].values[w.offset(views[a])];
    if (e == neg_inf)
      energy_inf = true;
    else
      expected_energy += weight * e;
  } while (w.advance());
  if (energy_inf) return neg_inf;
  return cond.log_offset + expected_energy + entropy_sum;
}

}  // namespace gmf
