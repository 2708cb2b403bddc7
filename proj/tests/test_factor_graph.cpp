#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "gmf/exact.hpp"
#include "gmf/factor_graph.hpp"
#include "gmf/rng.hpp"

using namespace gmf;

namespace {

FactorGraph two_node_coupling(double theta) {
  FactorGraph g;
  g.variables = {{0, 2, ""}, {1, 2, ""}};
  g.factors.push_back(Factor({0, 1}, {2, 2}, {0.0, 0.0, 0.0, theta}));
  return g;
}

FactorGraph random_graph(SplitMix64& rng, int n, double inf_prob = 0.0) {
  FactorGraph g;
  for (int v = 0; v < n; ++v)
    g.variables.push_back({v, 2 + static_cast<int>(rng.uniform_int(2)), ""});
  const int nf = 2 + static_cast<int>(rng.uniform_int(4));
  for (int a = 0; a < nf; ++a) {
    VarId u = static_cast<VarId>(rng.uniform_int(n));
    VarId v = static_cast<VarId>(rng.uniform_int(n));
    std::vector<VarId> scope{u};
    std::vector<int> shape{g.variables[u].cardinality};
    if (v != u) {
      scope.push_back(v);
      shape.push_back(g.variables[v].cardinality);
    }
    Factor f(scope, shape);
    for (double& x : f.values)
      x = (rng.uniform() < inf_prob) ? neg_inf : rng.uniform(-1.5, 1.5);
    g.factors.push_back(std::move(f));
  }
  return g;
}

}  // namespace

TEST_CASE("graph validation catches structural faults", "[graph]") {
  FactorGraph g = two_node_coupling(1.0);
  REQUIRE_NOTHROW(g.check());

  FactorGraph bad_ids = g;
  bad_ids.variables[1].id = 5;
  REQUIRE_THROWS_AS(bad_ids.check(), std::invalid_argument);

  FactorGraph bad_scope = g;
  bad_scope.factors.push_back(Factor({7}, {2}, 0.0));
  REQUIRE_THROWS_AS(bad_scope.check(), std::invalid_argument);

  FactorGraph bad_shape = g;
  bad_shape.factors.push_back(Factor({0}, {3}, 0.0));
  REQUIRE_THROWS_AS(bad_shape.check(), std::invalid_argument);

  FactorGraph bad_evidence = g;
  bad_evidence.evidence[1] = 2;
  REQUIRE_THROWS_AS(bad_evidence.check(), std::domain_error);
}

TEST_CASE("hidden bookkeeping", "[graph]") {
  FactorGraph g = two_node_coupling(1.0);
  g.variables.push_back({2, 3, ""});
  g.evidence[0] = 1;
  REQUIRE(g.hidden_vars() == std::vector<VarId>{1, 2});
  REQUIRE(g.hidden_state_count() == 6);
  REQUIRE(g.is_hidden(1));
  REQUIRE_FALSE(g.is_hidden(0));
}

TEST_CASE("energy of an all-zero table is zero", "[graph]") {
  FactorGraph g;
  g.variables = {{0, 2, ""}};
  g.factors.push_back(Factor({0}, {2}, {0.0, 0.0}));
  REQUIRE(energy(g, std::vector<int>{0}) == 0.0);
  REQUIRE(energy(g, std::vector<int>{1}) == 0.0);
}

TEST_CASE("energy is the negative sum of log potentials", "[graph]") {
  const FactorGraph g = two_node_coupling(1.0);
  REQUIRE(energy(g, std::vector<int>{1, 1}) == -1.0);
  REQUIRE(energy(g, std::vector<int>{0, 1}) == 0.0);
  REQUIRE_THROWS_AS(energy(g, std::vector<int>{1}), std::invalid_argument);
  REQUIRE_THROWS_AS(energy(g, std::vector<int>{1, 2}), std::domain_error);
}

TEST_CASE("conditioning slices factors and accumulates the offset",
          "[graph]") {
  const FactorGraph g = two_node_coupling(1.0);
  const FactorGraph c = condition(g, {{1, 1}});
  REQUIRE(c.num_vars() == 2);
  REQUIRE(c.evidence.at(1) == 1);
  REQUIRE(c.factors.size() == 1);
  REQUIRE(c.factors[0].scope == std::vector<VarId>{0});
  REQUIRE(c.factors[0].values == std::vector<double>{0.0, 1.0});
  REQUIRE(c.log_offset == 0.0);

  // Observing both variables leaves only scalars, which move to the offset.
  const FactorGraph c2 = condition(g, {{0, 1}, {1, 1}});
  REQUIRE(c2.factors.empty());
  REQUIRE(c2.log_offset == 1.0);
}

TEST_CASE("conditioned energy differs from the full energy by the offset",
          "[graph]") {
  SplitMix64 rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const FactorGraph g = random_graph(rng, 4);
    std::map<VarId, int> obs;
    std::vector<int> assignment(4);
    for (int v = 0; v < 4; ++v)
      assignment[v] =
          static_cast<int>(rng.uniform_int(g.variables[v].cardinality));
    for (int v = 0; v < 4; ++v)
      if (rng.uniform() < 0.5) obs[v] = assignment[v];
    const FactorGraph c = condition(g, obs);
    REQUIRE(energy(c, assignment) ==
            Catch::Approx(energy(g, assignment) + c.log_offset)
                .margin(1e-12));
  }
}

TEST_CASE("re-observation must agree", "[graph]") {
  FactorGraph g = two_node_coupling(1.0);
  g.evidence[0] = 1;
  REQUIRE_NOTHROW(condition(g, {{0, 1}}));
  REQUIRE_THROWS_AS(condition(g, {{0, 0}}), std::invalid_argument);
  REQUIRE_THROWS_AS(condition(g, {{5, 0}}), std::invalid_argument);
  REQUIRE_THROWS_AS(condition(g, {{1, 9}}), std::domain_error);
}

TEST_CASE("conditioning composes with prior evidence", "[graph]") {
  FactorGraph g = two_node_coupling(2.0);
  g.evidence[0] = 1;
  const FactorGraph c = condition(g, {{1, 1}});
  REQUIRE(c.factors.empty());
  REQUIRE(c.log_offset == 2.0);
  REQUIRE(c.evidence.size() == 2);
}

TEST_CASE("interaction graph adjacency", "[graph]") {
  FactorGraph g;
  for (int v = 0; v < 4; ++v) g.variables.push_back({v, 2, ""});
  for (int v = 0; v < 4; ++v)
    g.factors.push_back(
        Factor({v, (v + 1) % 4}, {2, 2}, 0.0));
  const auto adj = interaction_graph(g);
  REQUIRE(adj[0] == std::vector<VarId>{1, 3});
  REQUIRE(adj[1] == std::vector<VarId>{0, 2});
  REQUIRE(adj[2] == std::vector<VarId>{1, 3});
  REQUIRE(adj[3] == std::vector<VarId>{0, 2});
}

TEST_CASE("directed model validation", "[graph]") {
  DirectedModel m;
  m.variables = {{0, 2, ""}, {1, 2, ""}};
  const double lh = std::log(0.5);
  m.cpds.push_back({0, {}, {lh, lh}});
  m.cpds.push_back({1, {0}, {lh, lh, lh, lh}});
  REQUIRE_NOTHROW(m.check());

  DirectedModel cyclic = m;
  cyclic.cpds[0].parents = {1};
  cyclic.cpds[0].log_table = {lh, lh, lh, lh};
  REQUIRE_THROWS_AS(cyclic.check(), std::invalid_argument);

  DirectedModel unnorm = m;
  unnorm.cpds[0].log_table = {0.0, 0.0};
  REQUIRE_THROWS_AS(unnorm.check(), std::invalid_argument);
}

TEST_CASE("moralizing a directed model preserves the joint", "[graph]") {
  SplitMix64 rng(47);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_int(7));
    DirectedModel m;
    for (int v = 0; v < n; ++v) m.variables.push_back({v, 2, ""});
    for (int v = 0; v < n; ++v) {
      DirectedModel::Cpd c;
      c.child = v;
      for (int p = 0; p < v; ++p)
        if (rng.uniform() < 0.4) c.parents.push_back(p);
      const std::size_t rows = std::size_t{1} << c.parents.size();
      for (std::size_t r = 0; r < rows; ++r) {
        const double p1 = rng.uniform(0.05, 0.95);
        c.log_table.push_back(std::log(1.0 - p1));
        c.log_table.push_back(std::log(p1));
      }
      m.cpds.push_back(std::move(c));
    }
    const FactorGraph g = m.moralize();
    REQUIRE(g.factors.size() == static_cast<std::size_t>(n));
    const ExactResult exact = brute_force(g);
    REQUIRE(exact.log_partition == Catch::Approx(0.0).margin(1e-10));
  }
}
