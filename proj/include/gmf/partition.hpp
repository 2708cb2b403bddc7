#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gmf/factor_graph.hpp"
#include "gmf/rng.hpp"

namespace gmf {

/// Disjoint, exhaustive grouping of all variable ids 0..N-1.  Clusters are
/// kept sorted; empty clusters are rejected.
struct Partition {
  std::vector<std::vector<VarId>> clusters;
  std::vector<int> cluster_of;  // indexed by variable id

  int size() const { return static_cast<int>(clusters.size()); }
  int num_vars() const { return static_cast<int>(cluster_of.size()); }

  static Partition build(std::vector<std::vector<VarId>> clusters,
                         int num_vars) {
    Partition p;
    p.clusters = std::move(clusters);
    p.cluster_of.assign(num_vars, -1);
    for (std::size_t c = 0; c < p.clusters.size(); ++c) {
      if (p.clusters[c].empty())
        throw std::invalid_argument("empty cluster " + std::to_string(c));
      std::sort(p.clusters[c].begin(), p.clusters[c].end());
      for (VarId v : p.clusters[c]) {
        if (v < 0 || v >= num_vars)
          throw std::invalid_argument("cluster member " + std::to_string(v) +
                                      " out of range");
        if (p.cluster_of[v] != -1)
          throw std::invalid_argument("variable " + std::to_string(v) +
                                      " appears in two clusters");
        p.cluster_of[v] = static_cast<int>(c);
      }
    }
    for (int v = 0; v < num_vars; ++v)
      if (p.cluster_of[v] == -1)
        throw std::invalid_argument("variable " + std::to_string(v) +
                                    " missing from the partition");
    return p;
  }
};

inline Partition singletons(int num_vars) {
  std::vector<std::vector<VarId>> cs(num_vars);
  for (int v = 0; v < num_vars; ++v) cs[v] = {v};
  return Partition::build(std::move(cs), num_vars);
}

inline Partition one_cluster(int num_vars) {
  std::vector<VarId> all(num_vars);
  for (int v = 0; v < num_vars; ++v) all[v] = v;
  return Partition::build({all}, num_vars);
}

/// Cluster structure of a factor graph under a partition, computed on the
/// hidden variables: which factors are interior to a cluster, which cross
/// cluster borders, who participates in each border factor, and each
/// cluster's Markov blanket.
struct ClusterTopology {
  struct Participant {
    int cluster = -1;
    std::vector<VarId> overlap;  // hidden scope inside the cluster, ascending
  };

  /// Per factor: participants ascending by cluster index.  A factor whose
  /// hidden scope is empty has none.
  std::vector<std::vector<Participant>> factor_participants;
  std::vector<std::vector<int>> interior_factors;  // per cluster
  std::vector<std::vector<int>> border_factors;    // per cluster
  std::vector<std::vector<VarId>> markov_blanket;  // per cluster, ascending
  std::vector<std::vector<int>> neighbors;         // per cluster, ascending
  std::vector<std::vector<VarId>> border_nodes;    // cluster vars on a border
  std::vector<std::vector<VarId>> interior_nodes;  // the rest

  bool is_border(int factor) const {
    return factor_participants[factor].size() >= 2;
  }
};

/// Evidence variables are ignored: factors should already be conditioned
/// before the topology matters, and a cluster of observed variables simply
/// ends up with no factors.
inline ClusterTopology derive_topology(const FactorGraph& g,
                                       const Partition& p) {
  if (p.num_vars() != g.num_vars())
    throw std::invalid_argument("partition covers " +
                                std::to_string(p.num_vars()) +
                                " variables, graph has " +
                                std::to_string(g.num_vars()));
  ClusterTopology t;
  const int nc = p.size();
  t.factor_participants.resize(g.factors.size());
  t.interior_factors.resize(nc);
  t.border_factors.resize(nc);
  t.markov_blanket.resize(nc);
  t.neighbors.resize(nc);
  t.border_nodes.resize(nc);
  t.interior_nodes.resize(nc);

  std::vector<std::set<VarId>> blanket(nc);
  std::vector<std::set<int>> nbr(nc);
  std::vector<std::set<VarId>> on_border(nc);

  for (std::size_t a = 0; a < g.factors.size(); ++a) {
    std::map<int, std::vector<VarId>> by_cluster;
    for (VarId v : g.factors[a].scope)
      if (g.is_hidden(v)) by_cluster[p.cluster_of[v]].push_back(v);
    auto& parts = t.factor_participants[a];
    for (auto& [c, vars] : by_cluster) {
      std::sort(vars.begin(), vars.end());
      parts.push_back({c, std::move(vars)});
    }
    if (parts.size() == 1) {
      t.interior_factors[parts[0].cluster].push_back(static_cast<int>(a));
    } else if (parts.size() >= 2) {
      for (const auto& pi : parts) {
        t.border_factors[pi.cluster].push_back(static_cast<int>(a));
        for (VarId v : pi.overlap) on_border[pi.cluster].insert(v);
        for (const auto& pj : parts) {
          if (pj.cluster == pi.cluster) continue;
          nbr[pi.cluster].insert(pj.cluster);
          for (VarId v : pj.overlap) blanket[pi.cluster].insert(v);
        }
      }
    }
  }
  for (int c = 0; c < nc; ++c) {
    t.markov_blanket[c].assign(blanket[c].begin(), blanket[c].end());
    t.neighbors[c].assign(nbr[c].begin(), nbr[c].end());
    t.border_nodes[c].assign(on_border[c].begin(), on_border[c].end());
    for (VarId v : p.clusters[c])
      if (g.is_hidden(v) && !on_border[c].count(v))
        t.interior_nodes[c].push_back(v);
  }
  return t;
}

/// Rectangular blocks on a height x width grid with row-major node ids.
/// Ragged edge blocks are allowed; blocks are listed row-major.
inline Partition grid_blocks(int height, int width, int block_h, int block_w) {
  if (height < 1 || width < 1 || block_h < 1 || block_w < 1)
    throw std::invalid_argument("grid and block dimensions must be positive");
  const int brows = (height + block_h - 1) / block_h;
  const int bcols = (width + block_w - 1) / block_w;
  std::vector<std::vector<VarId>> cs(brows * bcols);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      cs[(r / block_h) * bcols + (c / block_w)].push_back(r * width + c);
  return Partition::build(std::move(cs), height * width);
}

/// One cluster per layer of a layered model whose ids number the layers
/// consecutively (layer 0 first).
inline Partition layer_rows(const std::vector<int>& layer_sizes) {
  std::vector<std::vector<VarId>> cs;
  VarId next = 0;
  for (int sz : layer_sizes) {
    if (sz < 1) throw std::invalid_argument("empty layer");
    std::vector<VarId> layer(sz);
    for (int i = 0; i < sz; ++i) layer[i] = next++;
    cs.push_back(std::move(layer));
  }
  return Partition::build(std::move(cs), next);
}

/// Vertical slabs through a layered model: each layer is cut into
/// num_blocks contiguous chunks and chunk j of every layer joins cluster j.
inline Partition layer_blocks(const std::vector<int>& layer_sizes,
                              int num_blocks) {
  if (num_blocks < 1) throw std::invalid_argument("need at least one block");
  std::vector<std::vector<VarId>> cs(num_blocks);
  VarId next = 0;
  for (int sz : layer_sizes) {
    if (sz < 1) throw std::invalid_argument("empty layer");
    for (int b = 0; b < num_blocks; ++b) {
      const int lo = static_cast<int>(static_cast<long>(sz) * b / num_blocks);
      const int hi =
          static_cast<int>(static_cast<long>(sz) * (b + 1) / num_blocks);
      for (int i = lo; i < hi; ++i) cs[b].push_back(next + i);
    }
    next += sz;
  }
  return Partition::build(std::move(cs), next);
}

/// Groups of whole chains for models whose ids are chain-major:
/// id(chain m, step t) = m * steps + t.
inline Partition chain_groups(int num_chains, int chains_per_cluster,
                              int steps) {
  if (num_chains < 1 || chains_per_cluster < 1 || steps < 1)
    throw std::invalid_argument("chain grouping needs positive sizes");
  std::vector<std::vector<VarId>> cs;
  for (int m0 = 0; m0 < num_chains; m0 += chains_per_cluster) {
    std::vector<VarId> cluster;
    for (int m = m0; m < std::min(num_chains, m0 + chains_per_cluster); ++m)
      for (int t = 0; t < steps; ++t) cluster.push_back(m * steps + t);
    cs.push_back(std::move(cluster));
  }
  return Partition::build(std::move(cs), num_chains * steps);
}

enum class CutObjective { minimize, maximize };

/// Pairwise interaction weights: for every factor, every pair of scoped
/// variables accumulates the spread (max minus min over finite entries) of
/// the factor's log table.  For a two-state pairwise coupling [0,0,0,w]
/// this is |w|.
inline std::map<std::pair<VarId, VarId>, double> interaction_weights(
    const FactorGraph& g) {
  std::map<std::pair<VarId, VarId>, double> w;
  for (const Factor& f : g.factors) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = neg_inf;
    for (double v : f.values) {
      if (v == neg_inf) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double spread = (hi > lo) ? hi - lo : 0.0;
    if (spread == 0.0) continue;
    for (std::size_t i = 0; i < f.scope.size(); ++i)
      for (std::size_t j = i + 1; j < f.scope.size(); ++j) {
        VarId a = f.scope[i], b = f.scope[j];
        if (a > b) std::swap(a, b);
        w[{a, b}] += spread;
      }
  }
  return w;
}

/// Balanced k-way cut by pairwise swaps: deal the (seeded) shuffled ids
/// round-robin into k clusters, then keep applying the best improving swap
/// of two variables from different clusters until none improves the cut
/// weight.  Cluster sizes never change, so balance (within one) is kept.
/// maximize flips the objective, favoring cuts through heavy couplings.
inline Partition greedy_edge_cut(const FactorGraph& g, int k,
                                 CutObjective objective, std::uint64_t seed) {
  const int n = g.num_vars();
  if (k < 1 || k > n)
    throw std::invalid_argument("cluster count out of range");
  const auto weights = interaction_weights(g);
  const double sign = (objective == CutObjective::maximize) ? -1.0 : 1.0;
  std::vector<std::vector<std::pair<VarId, double>>> adj(n);
  for (const auto& [e, w] : weights) {
    adj[e.first].push_back({e.second, sign * w});
    adj[e.second].push_back({e.first, sign * w});
  }
  std::vector<VarId> ids(n);
  for (int v = 0; v < n; ++v) ids[v] = v;
  SplitMix64 rng(seed);
  rng.shuffle(ids);
  std::vector<int> assign(n);
  for (int i = 0; i < n; ++i) assign[ids[i]] = i % k;

  // Cost of u's incident edges that cross into other clusters, if u were in
  // cluster c.
  const auto cross = [&](VarId u, int c, VarId ignore) {
    double s = 0.0;
    for (const auto& [v, w] : adj[u])
      if (v != ignore && assign[v] != c) s += w;
    return s;
  };

  bool improved = true;
  while (improved) {
    improved = false;
    VarId bu = -1, bv = -1;
    double best = -1e-12;  // strict improvement only
    for (VarId u = 0; u < n; ++u) {
      for (VarId v = u + 1; v < n; ++v) {
        if (assign[u] == assign[v]) continue;
        const double before = cross(u, assign[u], v) + cross(v, assign[v], u);
        const double after = cross(u, assign[v], v) + cross(v, assign[u], u);
        const double gain = before - after;
        if (gain > best + 1e-12) {
          best = gain;
          bu = u;
          bv = v;
        }
      }
    }
    if (bu >= 0 && best > 1e-12) {
      std::swap(assign[bu], assign[bv]);
      improved = true;
    }
  }
  std::vector<std::vector<VarId>> cs(k);
  for (int v = 0; v < n; ++v) cs[assign[v]].push_back(v);
  return Partition::build(std::move(cs), n);
}

}  // namespace gmf
