#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gmf/factor_graph.hpp"
#include "gmf/rng.hpp"

namespace gmf {

struct BpConfig {
  enum class Init { uniform, random };
  double tolerance = 1e-6;
  int max_iters = 1000;
  double damping = 0.0;  // in [0,1): new = (1-d)*computed + d*old
  /// Starting messages.  Uniform is the deterministic default; random draws
  /// one belief per variable from SplitMix64(seed) and starts every message
  /// incident to the variable there, which breaks the symmetry of multimodal
  /// models the way a random restart does for the variational methods.  On a
  /// tree both reach the same fixed point.
  Init init = Init::uniform;
  std::uint64_t seed = 0;
  std::size_t cap = default_cap;
};

/// Messages of one iteration, linear and normalized, indexed by factor and
/// scope position.  Only materialized for observers.
struct BpState {
  int iteration = 0;
  double residual = 0.0;
  std::vector<std::vector<std::vector<double>>> factor_to_var;
  std::vector<std::vector<std::vector<double>>> var_to_factor;
};

struct BpResult {
  std::map<VarId, std::vector<double>> marginals;
  int iterations = 0;
  bool converged = false;
  double max_residual = 0.0;
  double wall_time_ms = 0.0;
  /// Final messages (same layout as BpState), for fixed-point comparisons.
  std::vector<std::vector<std::vector<double>>> factor_to_var;
  std::vector<std::vector<std::vector<double>>> var_to_factor;
};

/// Loopy sum-product on the factor graph, synchronous flooding: every
/// message of iteration k is computed from iteration k-1's messages.  On
/// loopy graphs convergence is not guaranteed; a run that hits max_iters
/// reports converged = false rather than failing.
inline BpResult run_bp(const FactorGraph& g, const BpConfig& cfg = {},
                       const std::function<void(const BpState&)>& observer = {}) {
  if (cfg.damping < 0.0 || cfg.damping >= 1.0)
    throw std::invalid_argument("damping must lie in [0, 1)");
  const auto t0 = std::chrono::steady_clock::now();
  const FactorGraph cond = condition(g, {});
  if (cond.hidden_vars().empty())
    throw std::invalid_argument("belief propagation needs a hidden variable");
  const std::size_t nf = cond.factors.size();
  for (const Factor& f : cond.factors)
    if (f.size() > cfg.cap)
      throw capacity_error("factor table of " + std::to_string(f.size()) +
                           " cells exceeds cap");

  // Linear tables, shifted per factor so the largest entry is one; the
  // shift cancels when messages are normalized.
  std::vector<std::vector<double>> lin(nf);
  for (std::size_t a = 0; a < nf; ++a) {
    double m = neg_inf;
    for (double v : cond.factors[a].values) m = std::max(m, v);
    if (m == neg_inf) throw numeric_error("factor with zero mass everywhere");
    lin[a].resize(cond.factors[a].size());
    for (std::size_t k = 0; k < lin[a].size(); ++k)
      lin[a][k] = std::exp(cond.factors[a].values[k] - m);
  }

  using Msg = std::vector<double>;
  using MsgTable = std::vector<std::vector<Msg>>;
  const auto uniform_messages = [&]() {
    MsgTable t(nf);
    for (std::size_t a = 0; a < nf; ++a) {
      const Factor& f = cond.factors[a];
      t[a].resize(f.scope.size());
      for (std::size_t p = 0; p < f.scope.size(); ++p)
        t[a][p].assign(f.shape[p], 1.0 / f.shape[p]);
    }
    return t;
  };
  MsgTable f2v = uniform_messages();
  MsgTable v2f = uniform_messages();
  if (cfg.init == BpConfig::Init::random) {
    SplitMix64 rng(cfg.seed);
    std::vector<Msg> belief(cond.num_vars());
    for (VarId v = 0; v < cond.num_vars(); ++v) {
      Msg& b = belief[v];
      b.resize(cond.cardinality(v));
      double s = 0.0;
      for (double& x : b) s += (x = rng.uniform());
      for (double& x : b) x /= s;
    }
    const auto seed_messages = [&](MsgTable& t) {
      for (std::size_t a = 0; a < nf; ++a)
        for (std::size_t p = 0; p < cond.factors[a].scope.size(); ++p)
          t[a][p] = belief[cond.factors[a].scope[p]];
    };
    seed_messages(f2v);
    seed_messages(v2f);
  }

  // Incident (factor, position) edges per variable.
  std::vector<std::vector<std::pair<int, int>>> edges(cond.num_vars());
  for (std::size_t a = 0; a < nf; ++a)
    for (std::size_t p = 0; p < cond.factors[a].scope.size(); ++p)
      edges[cond.factors[a].scope[p]].push_back(
          {static_cast<int>(a), static_cast<int>(p)});

  const auto normalize = [](Msg& m) {
    double s = 0.0;
    for (double v : m) s += v;
    if (!(s > 0.0)) throw numeric_error("message with zero mass");
    for (double& v : m) v /= s;
  };

  BpResult res;
  MsgTable nf2v = f2v, nv2f = v2f;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    // Factor to variable.
    for (std::size_t a = 0; a < nf; ++a) {
      const Factor& f = cond.factors[a];
      const std::size_t deg = f.scope.size();
      auto& out = nf2v[a];
      for (std::size_t p = 0; p < deg; ++p)
        std::fill(out[p].begin(), out[p].end(), 0.0);
      if (deg == 1) {
        for (int s = 0; s < f.shape[0]; ++s) out[0][s] = lin[a][s];
      } else if (deg == 2) {
        const Msg& in0 = v2f[a][0];
        const Msg& in1 = v2f[a][1];
        const int n0 = f.shape[0], n1 = f.shape[1];
        const double* t = lin[a].data();
        for (int s0 = 0; s0 < n0; ++s0) {
          const double* row = t + static_cast<std::size_t>(s0) * n1;
          double acc0 = 0.0;
          const double w0 = in0[s0];
          for (int s1 = 0; s1 < n1; ++s1) {
            acc0 += row[s1] * in1[s1];
            out[1][s1] += row[s1] * w0;
          }
          out[0][s0] = acc0;
        }
      } else {
        Walker w(f.shape);
        std::vector<double> prefix(deg + 1), suffix(deg + 1);
        std::size_t k = 0;
        do {
          const std::vector<int>& d = w.digits();
          prefix[0] = 1.0;
          for (std::size_t q = 0; q < deg; ++q)
            prefix[q + 1] = prefix[q] * v2f[a][q][d[q]];
          suffix[deg] = 1.0;
          for (std::size_t q = deg; q-- > 0;)
            suffix[q] = suffix[q + 1] * v2f[a][q][d[q]];
          const double tv = lin[a][k++];
          if (tv != 0.0)
            for (std::size_t p = 0; p < deg; ++p)
              out[p][d[p]] += tv * prefix[p] * suffix[p + 1];
        } while (w.advance());
      }
      for (std::size_t p = 0; p < deg; ++p) normalize(out[p]);
    }
    // Variable to factor.
    for (VarId v = 0; v < cond.num_vars(); ++v) {
      const auto& inc = edges[v];
      for (std::size_t i = 0; i < inc.size(); ++i) {
        const auto [a, p] = inc[i];
        Msg& m = nv2f[a][p];
        std::fill(m.begin(), m.end(), 1.0);
        for (std::size_t j = 0; j < inc.size(); ++j) {
          if (j == i) continue;
          const auto [b, q] = inc[j];
          const Msg& in = f2v[b][q];
          for (std::size_t s = 0; s < m.size(); ++s) m[s] *= in[s];
        }
        normalize(m);
      }
    }

    double residual = 0.0;
    const auto blend = [&](MsgTable& oldt, MsgTable& newt) {
      for (std::size_t a = 0; a < nf; ++a)
        for (std::size_t p = 0; p < oldt[a].size(); ++p)
          for (std::size_t s = 0; s < oldt[a][p].size(); ++s) {
            double nv = newt[a][p][s];
            if (cfg.damping > 0.0)
              nv = (1.0 - cfg.damping) * nv + cfg.damping * oldt[a][p][s];
            residual = std::max(residual, std::fabs(nv - oldt[a][p][s]));
            if (std::isnan(nv)) throw numeric_error("NaN message entry");
            oldt[a][p][s] = nv;
          }
    };
    blend(f2v, nf2v);
    blend(v2f, nv2f);

    res.iterations = iter;
    res.max_residual = residual;
    if (observer) {
      BpState st;
      st.iteration = iter;
      st.residual = residual;
      st.factor_to_var = f2v;
      st.var_to_factor = v2f;
      observer(st);
    }
    if (residual < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }

  for (VarId v : cond.hidden_vars()) {
    Msg belief(cond.cardinality(v), 1.0);
    for (const auto& [a, p] : edges[v])
      for (std::size_t s = 0; s < belief.size(); ++s)
        belief[s] *= f2v[a][p][s];
    normalize(belief);
    res.marginals[v] = std::move(belief);
  }
  res.factor_to_var = std::move(f2v);
  res.var_to_factor = std::move(v2f);
  const auto t1 = std::chrono::steady_clock::now();
  res.wall_time_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  return res;
}

}  // namespace gmf
