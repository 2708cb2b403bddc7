#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <utility>
#include <vector>

#include "gmf/partition.hpp"

using namespace gmf;

namespace {

using Clusters = std::vector<std::vector<VarId>>;

FactorGraph cycle4() {
  FactorGraph g;
  for (int v = 0; v < 4; ++v) g.variables.push_back({v, 2, ""});
  for (int v = 0; v < 4; ++v)
    g.factors.push_back(Factor({v, (v + 1) % 4}, {2, 2}, 0.0));
  return g;
}

FactorGraph weighted_pair_graph(
    const std::vector<std::tuple<VarId, VarId, double>>& edges, int n) {
  FactorGraph g;
  for (int v = 0; v < n; ++v) g.variables.push_back({v, 2, ""});
  for (const auto& [u, v, w] : edges)
    g.factors.push_back(Factor({u, v}, {2, 2}, {0.0, 0.0, 0.0, w}));
  return g;
}

double cut_weight(const FactorGraph& g, const Partition& p) {
  double total = 0.0;
  for (const auto& [e, w] : interaction_weights(g))
    if (p.cluster_of[e.first] != p.cluster_of[e.second]) total += w;
  return total;
}

}  // namespace

TEST_CASE("partition builder sorts and validates", "[partition]") {
  const Partition p = Partition::build({{2, 0}, {1}}, 3);
  REQUIRE(p.clusters == Clusters{{0, 2}, {1}});
  REQUIRE(p.cluster_of == std::vector<int>{0, 1, 0});

  REQUIRE_THROWS_AS(Partition::build({{0}, {}}, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(Partition::build({{0, 3}}, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(Partition::build({{0, 1}, {1}}, 2),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(Partition::build({{0}}, 2), std::invalid_argument);
}

TEST_CASE("trivial partitions", "[partition]") {
  REQUIRE(singletons(3).clusters == Clusters{{0}, {1}, {2}});
  REQUIRE(one_cluster(3).clusters == Clusters{{0, 1, 2}});
}

TEST_CASE("grid blocks", "[partition]") {
  REQUIRE(grid_blocks(4, 4, 2, 2).clusters ==
          Clusters{{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13},
                   {10, 11, 14, 15}});
  // Ragged edges fall into smaller blocks.
  REQUIRE(grid_blocks(3, 3, 2, 2).clusters ==
          Clusters{{0, 1, 3, 4}, {2, 5}, {6, 7}, {8}});
  REQUIRE(grid_blocks(2, 3, 1, 3).clusters == Clusters{{0, 1, 2}, {3, 4, 5}});
  REQUIRE_THROWS_AS(grid_blocks(0, 3, 1, 1), std::invalid_argument);
}

TEST_CASE("layer groupings", "[partition]") {
  REQUIRE(layer_rows({2, 3}).clusters == Clusters{{0, 1}, {2, 3, 4}});
  REQUIRE(layer_blocks({6, 6, 6}, 2).clusters ==
          Clusters{{0, 1, 2, 6, 7, 8, 12, 13, 14},
                   {3, 4, 5, 9, 10, 11, 15, 16, 17}});
  // Uneven layers split as evenly as the arithmetic allows.
  REQUIRE(layer_blocks({3, 2}, 2).clusters == Clusters{{0, 3}, {1, 2, 4}});
  REQUIRE_THROWS_AS(layer_rows({2, 0}), std::invalid_argument);
  REQUIRE_THROWS_AS(layer_blocks({2}, 0), std::invalid_argument);
}

TEST_CASE("chain groups", "[partition]") {
  REQUIRE(chain_groups(3, 2, 4).clusters ==
          Clusters{{0, 1, 2, 3, 4, 5, 6, 7}, {8, 9, 10, 11}});
  REQUIRE(chain_groups(2, 1, 2).clusters == Clusters{{0, 1}, {2, 3}});
  REQUIRE_THROWS_AS(chain_groups(0, 1, 2), std::invalid_argument);
}

TEST_CASE("cluster topology of a cycle", "[partition]") {
  const FactorGraph g = cycle4();
  const Partition p = Partition::build({{0, 1}, {2, 3}}, 4);
  const ClusterTopology t = derive_topology(g, p);

  REQUIRE(t.interior_factors[0] == std::vector<int>{0});
  REQUIRE(t.interior_factors[1] == std::vector<int>{2});
  REQUIRE(t.border_factors[0] == std::vector<int>{1, 3});
  REQUIRE(t.border_factors[1] == std::vector<int>{1, 3});
  REQUIRE(t.is_border(1));
  REQUIRE_FALSE(t.is_border(0));

  REQUIRE(t.factor_participants[1].size() == 2);
  REQUIRE(t.factor_participants[1][0].cluster == 0);
  REQUIRE(t.factor_participants[1][0].overlap == std::vector<VarId>{1});
  REQUIRE(t.factor_participants[1][1].cluster == 1);
  REQUIRE(t.factor_participants[1][1].overlap == std::vector<VarId>{2});

  REQUIRE(t.markov_blanket[0] == std::vector<VarId>{2, 3});
  REQUIRE(t.markov_blanket[1] == std::vector<VarId>{0, 1});
  REQUIRE(t.neighbors[0] == std::vector<int>{1});
  REQUIRE(t.border_nodes[0] == std::vector<VarId>{0, 1});
  REQUIRE(t.interior_nodes[0].empty());
}

TEST_CASE("topology separates border and interior nodes", "[partition]") {
  FactorGraph g;
  for (int v = 0; v < 3; ++v) g.variables.push_back({v, 2, ""});
  g.factors.push_back(Factor({0, 1}, {2, 2}, 0.0));
  g.factors.push_back(Factor({1, 2}, {2, 2}, 0.0));
  const ClusterTopology t =
      derive_topology(g, Partition::build({{0, 1}, {2}}, 3));
  REQUIRE(t.border_nodes[0] == std::vector<VarId>{1});
  REQUIRE(t.interior_nodes[0] == std::vector<VarId>{0});
  REQUIRE(t.markov_blanket[0] == std::vector<VarId>{2});
}

TEST_CASE("topology ignores observed variables", "[partition]") {
  FactorGraph g = cycle4();
  g.evidence[1] = 0;
  const Partition p = Partition::build({{0, 1}, {2, 3}}, 4);
  const ClusterTopology t = derive_topology(g, p);
  // With variable 1 observed, the factors it touched stop crossing.
  REQUIRE(t.factor_participants[0].size() == 1);
  REQUIRE(t.factor_participants[1].size() == 1);
  REQUIRE(t.border_factors[0] == std::vector<int>{3});
  REQUIRE(t.markov_blanket[0] == std::vector<VarId>{3});
  REQUIRE(t.neighbors[0] == std::vector<int>{1});

  const Partition mismatched = Partition::build({{0}}, 1);
  REQUIRE_THROWS_AS(derive_topology(g, mismatched), std::invalid_argument);
}

TEST_CASE("interaction weights accumulate table spreads", "[partition]") {
  FactorGraph g = weighted_pair_graph({{0, 1, 2.0}, {0, 1, -3.0}}, 3);
  g.factors.push_back(Factor({1, 2}, {2, 2}, {neg_inf, 0.0, 0.0, 1.5}));
  g.factors.push_back(Factor({2}, {2}, 0.0));  // constant, no spread
  const auto w = interaction_weights(g);
  REQUIRE(w.size() == 2);
  REQUIRE(w.at({0, 1}) == Catch::Approx(5.0));
  REQUIRE(w.at({1, 2}) == Catch::Approx(1.5));
}

TEST_CASE("edge cuts respect the objective", "[partition]") {
  // Two tight triangles joined by one weak coupling.
  const FactorGraph g = weighted_pair_graph(
      {{0, 1, 3.0}, {0, 2, 3.0}, {1, 2, 3.0},
       {3, 4, 3.0}, {3, 5, 3.0}, {4, 5, 3.0},
       {2, 3, 0.1}},
      6);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Partition lo = greedy_edge_cut(g, 2, CutObjective::minimize, seed);
    REQUIRE(cut_weight(g, lo) == Catch::Approx(0.1).margin(1e-12));
    const Partition hi = greedy_edge_cut(g, 2, CutObjective::maximize, seed);
    REQUIRE(cut_weight(g, hi) >= 12.0);
  }
}

TEST_CASE("edge cut bookkeeping", "[partition]") {
  const FactorGraph g = weighted_pair_graph({{0, 1, 1.0}, {1, 2, 1.0}}, 7);
  const Partition p = greedy_edge_cut(g, 3, CutObjective::minimize, 11);
  std::vector<std::size_t> sizes;
  for (const auto& c : p.clusters) sizes.push_back(c.size());
  std::sort(sizes.begin(), sizes.end());
  REQUIRE(sizes == std::vector<std::size_t>{2, 2, 3});

  const Partition again = greedy_edge_cut(g, 3, CutObjective::minimize, 11);
  REQUIRE(again.clusters == p.clusters);

  REQUIRE(greedy_edge_cut(g, 1, CutObjective::minimize, 5).size() == 1);
  REQUIRE(greedy_edge_cut(g, 7, CutObjective::minimize, 5).size() == 7);
  REQUIRE_THROWS_AS(greedy_edge_cut(g, 0, CutObjective::minimize, 5),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(greedy_edge_cut(g, 8, CutObjective::minimize, 5),
                    std::invalid_argument);
}
