#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmf/exact.hpp"
#include "gmf/factor_graph.hpp"
#include "gmf/rng.hpp"

namespace gmf {

namespace detail {

inline double log_sigmoid(double z) {
  // log(1/(1+e^-z)) without overflow on either tail.
  return z < 0.0 ? z - std::log1p(std::exp(z)) : -std::log1p(std::exp(-z));
}

/// Lower-triangular Cholesky factor of a dense SPD matrix.
inline std::vector<double> cholesky(const std::vector<double>& a, int n) {
  std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<std::size_t>(i) * n + k] *
             l[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (s <= 0.0)
          throw std::invalid_argument(
              "covariance matrix is not positive definite");
        l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        l[static_cast<std::size_t>(i) * n + j] =
            s / l[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  return l;
}

/// One categorical draw from a linear probability row via a single uniform.
inline int draw_categorical(SplitMix64& rng, std::span<const double> probs) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ising grids

struct IsingSpec {
  int height = 4;
  int width = 4;
  std::pair<double, double> bias_range{-0.25, 0.25};
  std::pair<double, double> coupling_range{0.0, 2.0};
  std::uint64_t seed = 0;
};

/// Binary nearest-neighbor grid, node id = row * width + col.  State k
/// encodes the spin s = 2k - 1, so the unary log-potential bias * s gives
/// the table [-bias, bias] and the pairwise coupling * s_i * s_j gives
/// [c, -c, -c, c].  With this convention strong couplings produce the
/// multimodal posteriors that make these grids hard for factorized
/// approximations; couplings confined to entry (1,1) instead act mostly as
/// a field and saturate the model.  Parameters are drawn with
/// SplitMix64(seed) in a fixed order: biases row-major, then horizontal
/// couplings row-major, then vertical couplings row-major.  Factors are
/// listed the same way.
inline FactorGraph make_ising(const IsingSpec& spec) {
  if (spec.height < 1 || spec.width < 1)
    throw std::invalid_argument("grid dimensions must be positive");
  const int h = spec.height, w = spec.width;
  SplitMix64 rng(spec.seed);
  std::vector<double> bias(static_cast<std::size_t>(h) * w);
  for (double& b : bias) b = rng.uniform(spec.bias_range.first, spec.bias_range.second);
  std::vector<double> hcoup, vcoup;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c + 1 < w; ++c)
      hcoup.push_back(
          rng.uniform(spec.coupling_range.first, spec.coupling_range.second));
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c < w; ++c)
      vcoup.push_back(
          rng.uniform(spec.coupling_range.first, spec.coupling_range.second));

  FactorGraph g;
  for (int v = 0; v < h * w; ++v) g.variables.push_back({v, 2, ""});
  for (int v = 0; v < h * w; ++v)
    g.factors.push_back(Factor({v}, {2}, {-bias[v], bias[v]}));
  const auto coupling_table = [](double c) {
    return std::vector<double>{c, -c, -c, c};
  };
  std::size_t e = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c + 1 < w; ++c)
      g.factors.push_back(Factor({r * w + c, r * w + c + 1}, {2, 2},
                                 coupling_table(hcoup[e++])));
  e = 0;
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c < w; ++c)
      g.factors.push_back(Factor({r * w + c, (r + 1) * w + c}, {2, 2},
                                 coupling_table(vcoup[e++])));
  g.check();
  return g;
}

// ---------------------------------------------------------------------------
// Sigmoid belief networks

struct SigmoidNetSpec {
  std::vector<int> layer_sizes;    // hidden layers, top to bottom
  int observed_layer_size = 0;     // 0 means no observed layer
  std::pair<double, double> weight_range{0.0, 1.0};
  std::uint64_t seed = 0;
};

/// Layered binary belief net, fully connected between adjacent layers, ids
/// numbering layer 0 first and the observed layer (if any) last.  Parent
/// state k enters the activation as the spin 2k - 1, so each node has
/// p(x=1 | parents) = sigmoid(bias + sum of weight * parent spin) and
/// top-layer nodes are bias-only.  With spins an all-positive weight
/// interval still yields balanced, strongly coupled activations instead of
/// the saturated nets that 0/1 parent encoding produces.  Biases come from
/// the weight interval too.  Draw order: nodes ascending id, bias first,
/// then one weight per parent in ascending parent order.
inline DirectedModel make_sigmoid_net(const SigmoidNetSpec& spec) {
  std::vector<int> layers = spec.layer_sizes;
  if (spec.observed_layer_size > 0) layers.push_back(spec.observed_layer_size);
  if (layers.empty()) throw std::invalid_argument("no layers");
  for (int sz : layers)
    if (sz < 1) throw std::invalid_argument("layer sizes must be >= 1");

  DirectedModel m;
  std::vector<std::vector<VarId>> layer_ids;
  VarId next = 0;
  for (int sz : layers) {
    std::vector<VarId> ids(sz);
    for (int i = 0; i < sz; ++i) {
      ids[i] = next;
      m.variables.push_back({next, 2, ""});
      ++next;
    }
    layer_ids.push_back(std::move(ids));
  }

  SplitMix64 rng(spec.seed);
  const auto draw = [&]() {
    return rng.uniform(spec.weight_range.first, spec.weight_range.second);
  };
  for (std::size_t l = 0; l < layer_ids.size(); ++l) {
    const std::vector<VarId> parents =
        (l == 0) ? std::vector<VarId>{} : layer_ids[l - 1];
    if (parents.size() > 20)
      throw capacity_error("fan-in " + std::to_string(parents.size()) +
                           " exceeds the CPD materialization cap of 20");
    for (VarId child : layer_ids[l]) {
      const double b = draw();
      std::vector<double> wts(parents.size());
      for (double& x : wts) x = draw();
      const std::size_t rows = std::size_t{1} << parents.size();
      std::vector<double> table(rows * 2);
      for (std::size_t cfg = 0; cfg < rows; ++cfg) {
        double z = b;
        // Row-major over parents, last parent fastest: bit 0 of cfg is the
        // last parent's state.
        for (std::size_t j = 0; j < parents.size(); ++j)
          z += ((cfg >> (parents.size() - 1 - j)) & 1) ? wts[j] : -wts[j];
        table[cfg * 2] = detail::log_sigmoid(-z);
        table[cfg * 2 + 1] = detail::log_sigmoid(z);
      }
      m.cpds.push_back({child, parents, std::move(table)});
    }
  }
  m.check();
  return m;
}

/// Ancestral sample: one uniform per variable, ascending id order (which is
/// topological for DirectedModel).
inline std::vector<int> ancestral_sample(const DirectedModel& m,
                                         std::uint64_t seed) {
  m.check();
  SplitMix64 rng(seed);
  std::vector<int> x(m.num_vars(), 0);
  for (const auto& cpd : m.cpds) {
    const int card = m.variables[cpd.child].cardinality;
    std::size_t row = 0;
    for (VarId p : cpd.parents)
      row = row * static_cast<std::size_t>(m.variables[p].cardinality) +
            static_cast<std::size_t>(x[p]);
    std::vector<double> probs(card);
    for (int k = 0; k < card; ++k)
      probs[k] = std::exp(cpd.log_table[row * card + k]);
    x[cpd.child] = detail::draw_categorical(rng, probs);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Factorial HMMs

struct FhmmSpec {
  int num_chains = 6;
  int num_steps = 40;
  int num_states = 3;
  int output_dim = 6;
  std::vector<std::vector<double>> log_init;   // [chain][state]
  std::vector<std::vector<double>> log_trans;  // [chain][from * K + to]
  std::vector<std::vector<double>> weights;    // [chain][row * K + state]
  std::vector<double> covariance;              // output_dim^2, row-major
  std::uint64_t seed = 0;

  void check() const {
    if (num_chains < 1 || num_steps < 1 || num_states < 1 || output_dim < 1)
      throw std::invalid_argument("fhmm dimensions must be positive");
    const std::size_t m = num_chains, k = num_states, d = output_dim;
    if (log_init.size() != m || log_trans.size() != m || weights.size() != m ||
        covariance.size() != d * d)
      throw std::invalid_argument("fhmm parameter table sizes mismatch");
    for (std::size_t c = 0; c < m; ++c) {
      if (log_init[c].size() != k || log_trans[c].size() != k * k ||
          weights[c].size() != d * k)
        throw std::invalid_argument("fhmm chain table size mismatch");
      if (std::fabs(log_sum_exp(log_init[c])) > 1e-9)
        throw std::invalid_argument("initial distribution not normalized");
      for (std::size_t r = 0; r < k; ++r) {
        const std::span<const double> row(log_trans[c].data() + r * k, k);
        if (std::fabs(log_sum_exp(row)) > 1e-9)
          throw std::invalid_argument("transition row not normalized");
      }
    }
  }
};

/// Random parameters standing in for a trained model: initial and
/// transition rows are normalized uniform(0,1) draws, emission weight
/// entries are uniform(-1,1), and the covariance is the identity scaled by
/// one uniform(0.5,2) draw.  Draw order: per chain the initial row then the
/// transition rows; then per chain the weight matrix row-major; then the
/// covariance scale.
inline FhmmSpec random_fhmm(int chains, int steps, int states, int output_dim,
                            std::uint64_t seed) {
  FhmmSpec spec;
  spec.num_chains = chains;
  spec.num_steps = steps;
  spec.num_states = states;
  spec.output_dim = output_dim;
  spec.seed = seed;
  SplitMix64 rng(seed);
  const auto normalized_log_row = [&](std::size_t n) {
    std::vector<double> row(n);
    double sum = 0.0;
    for (double& v : row) sum += (v = rng.uniform());
    for (double& v : row) v = std::log(v) - std::log(sum);
    return row;
  };
  for (int m = 0; m < chains; ++m) {
    spec.log_init.push_back(normalized_log_row(states));
    std::vector<double> trans;
    for (int r = 0; r < states; ++r) {
      const auto row = normalized_log_row(states);
      trans.insert(trans.end(), row.begin(), row.end());
    }
    spec.log_trans.push_back(std::move(trans));
  }
  for (int m = 0; m < chains; ++m) {
    std::vector<double> w(static_cast<std::size_t>(output_dim) * states);
    for (double& x : w) x = rng.uniform(-1.0, 1.0);
    spec.weights.push_back(std::move(w));
  }
  const double scale = rng.uniform(0.5, 2.0);
  spec.covariance.assign(static_cast<std::size_t>(output_dim) * output_dim,
                         0.0);
  for (int i = 0; i < output_dim; ++i)
    spec.covariance[static_cast<std::size_t>(i) * output_dim + i] = scale;
  spec.check();
  return spec;
}

struct FhmmSample {
  std::vector<std::vector<int>> states;          // [chain][step]
  std::vector<std::vector<double>> observations; // [step][output_dim]
};

/// Sample hidden paths chain by chain (one uniform per step), then emissions
/// step by step (output_dim normals each, two uniforms per normal).
inline FhmmSample sample_fhmm(const FhmmSpec& spec, std::uint64_t seed) {
  spec.check();
  SplitMix64 rng(seed);
  FhmmSample out;
  const int K = spec.num_states, d = spec.output_dim;
  out.states.assign(spec.num_chains, std::vector<int>(spec.num_steps, 0));
  for (int m = 0; m < spec.num_chains; ++m) {
    std::vector<double> probs(K);
    for (int k = 0; k < K; ++k) probs[k] = std::exp(spec.log_init[m][k]);
    out.states[m][0] = detail::draw_categorical(rng, probs);
    for (int t = 1; t < spec.num_steps; ++t) {
      const int prev = out.states[m][t - 1];
      for (int k = 0; k < K; ++k)
        probs[k] = std::exp(spec.log_trans[m][prev * K + k]);
      out.states[m][t] = detail::draw_categorical(rng, probs);
    }
  }
  const std::vector<double> chol = detail::cholesky(spec.covariance, d);
  out.observations.assign(spec.num_steps, std::vector<double>(d, 0.0));
  for (int t = 0; t < spec.num_steps; ++t) {
    std::vector<double> z(d);
    for (double& v : z) v = rng.normal();
    std::vector<double>& y = out.observations[t];
    for (int m = 0; m < spec.num_chains; ++m) {
      const int k = out.states[m][t];
      for (int r = 0; r < d; ++r)
        y[r] += spec.weights[m][static_cast<std::size_t>(r) * K + k];
    }
    for (int r = 0; r < d; ++r)
      for (int c = 0; c <= r; ++c)
        y[r] += chol[static_cast<std::size_t>(r) * d + c] * z[c];
  }
  return out;
}

namespace detail {

/// Per-step emission log-density table over the M chain states (row-major,
/// last chain fastest): the full Gaussian log-density of y at the summed
/// state-dependent means, constant included, so evidence mass is exact.
inline std::vector<double> emission_table(const FhmmSpec& spec,
                                          const std::vector<double>& y) {
  const int M = spec.num_chains, K = spec.num_states, d = spec.output_dim;
  const std::vector<double> chol = cholesky(spec.covariance, d);
  double log_det = 0.0;
  for (int i = 0; i < d; ++i)
    log_det += 2.0 * std::log(chol[static_cast<std::size_t>(i) * d + i]);
  const double norm_const =
      -0.5 * d * std::log(2.0 * 3.14159265358979323846) - 0.5 * log_det;

  std::size_t cells = 1;
  for (int m = 0; m < M; ++m)
    cells *= static_cast<std::size_t>(K);
  std::vector<double> table(cells);
  std::vector<int> digit(M, 0);
  std::vector<double> mu(d), v(d), z(d);
  for (std::size_t idx = 0;; ++idx) {
    std::fill(mu.begin(), mu.end(), 0.0);
    for (int m = 0; m < M; ++m)
      for (int r = 0; r < d; ++r)
        mu[r] += spec.weights[m][static_cast<std::size_t>(r) * K + digit[m]];
    for (int r = 0; r < d; ++r) v[r] = y[r] - mu[r];
    // Forward solve L z = v; the quadratic form is |z|^2.
    double quad = 0.0;
    for (int r = 0; r < d; ++r) {
      double s = v[r];
      for (int c = 0; c < r; ++c)
        s -= chol[static_cast<std::size_t>(r) * d + c] * z[c];
      z[r] = s / chol[static_cast<std::size_t>(r) * d + r];
      quad += z[r] * z[r];
    }
    table[idx] = norm_const - 0.5 * quad;
    int p = M - 1;
    while (p >= 0 && digit[p] + 1 == K) digit[p--] = 0;
    if (p < 0) break;
    ++digit[p];
  }
  return table;
}

}  // namespace detail

/// Factor graph of an fHMM conditioned on an observation sequence.
/// Variable id(chain m, step t) = m * num_steps + t.  Factors: per chain an
/// initial unary then the transition pairs in time order; then one emission
/// factor per step over all chains' variables at that step (ascending id,
/// i.e. ascending chain), with the Gaussian log-density as its table.
inline FactorGraph make_fhmm(const FhmmSpec& spec,
                             const std::vector<std::vector<double>>& obs,
                             std::size_t cap = default_cap) {
  spec.check();
  const int M = spec.num_chains, T = spec.num_steps, K = spec.num_states;
  if (obs.size() != static_cast<std::size_t>(T))
    throw std::invalid_argument("need one observation vector per step");
  for (const auto& y : obs)
    if (y.size() != static_cast<std::size_t>(spec.output_dim))
      throw std::invalid_argument("observation dimension mismatch");
  std::size_t cells = 1;
  for (int m = 0; m < M; ++m) {
    cells *= static_cast<std::size_t>(K);
    if (cells > cap)
      throw capacity_error("per-step emission table of K^M cells exceeds cap");
  }

  FactorGraph g;
  for (int m = 0; m < M; ++m)
    for (int t = 0; t < T; ++t)
      g.variables.push_back({m * T + t, K, ""});
  for (int m = 0; m < M; ++m) {
    g.factors.push_back(Factor({m * T}, {K}, spec.log_init[m]));
    for (int t = 0; t + 1 < T; ++t)
      g.factors.push_back(
          Factor({m * T + t, m * T + t + 1}, {K, K}, spec.log_trans[m]));
  }
  for (int t = 0; t < T; ++t) {
    std::vector<VarId> scope(M);
    for (int m = 0; m < M; ++m) scope[m] = m * T + t;
    g.factors.push_back(Factor(std::move(scope), std::vector<int>(M, K),
                               detail::emission_table(spec, obs[t])));
  }
  g.check();
  return g;
}

/// The same posterior re-expressed on a chain of compound variables: step t
/// becomes one variable with K^M states (digits = per-chain states, last
/// chain fastest).  Initial and emission tables become unaries, transitions
/// a shared pairwise table, and the result is a tree, so sum-product is
/// exact on it.
struct CompoundChain {
  FactorGraph graph;
  int num_chains = 0;
  int num_states = 0;
  int num_steps = 0;
};

inline CompoundChain compound_chain(const FhmmSpec& spec,
                                    const std::vector<std::vector<double>>& obs,
                                    std::size_t cap = default_cap) {
  spec.check();
  const int M = spec.num_chains, T = spec.num_steps, K = spec.num_states;
  std::size_t cells = 1;
  for (int m = 0; m < M; ++m) cells *= static_cast<std::size_t>(K);
  if (cells * cells > cap)
    throw capacity_error("compound transition table of K^2M cells exceeds cap");
  if (obs.size() != static_cast<std::size_t>(T))
    throw std::invalid_argument("need one observation vector per step");

  const int S = static_cast<int>(cells);
  std::vector<std::vector<int>> digits(S, std::vector<int>(M, 0));
  for (int s = 1; s < S; ++s) {
    digits[s] = digits[s - 1];
    int p = M - 1;
    while (digits[s][p] + 1 == K) digits[s][p--] = 0;
    ++digits[s][p];
  }

  CompoundChain cc;
  cc.num_chains = M;
  cc.num_states = K;
  cc.num_steps = T;
  FactorGraph& g = cc.graph;
  for (int t = 0; t < T; ++t) g.variables.push_back({t, S, ""});

  std::vector<double> init(S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int m = 0; m < M; ++m) init[s] += spec.log_init[m][digits[s][m]];
  g.factors.push_back(Factor({0}, {S}, std::move(init)));

  std::vector<double> trans(static_cast<std::size_t>(S) * S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      double v = 0.0;
      for (int m = 0; m < M; ++m)
        v += spec.log_trans[m][digits[s][m] * K + digits[s2][m]];
      trans[static_cast<std::size_t>(s) * S + s2] = v;
    }
  for (int t = 0; t + 1 < T; ++t)
    g.factors.push_back(Factor({t, t + 1}, {S, S}, trans));

  for (int t = 0; t < T; ++t)
    g.factors.push_back(Factor({t}, {S}, detail::emission_table(spec, obs[t])));
  g.check();
  return cc;
}

/// Per-chain-variable marginals recovered from compound-variable marginals
/// by summing out the other digits.  Keys follow make_fhmm's id scheme.
inline std::map<VarId, std::vector<double>> split_compound_marginals(
    const CompoundChain& cc,
    const std::map<VarId, std::vector<double>>& compound) {
  const int M = cc.num_chains, K = cc.num_states, T = cc.num_steps;
  std::map<VarId, std::vector<double>> out;
  for (int t = 0; t < T; ++t) {
    const std::vector<double>& p = compound.at(t);
    std::vector<int> digit(M, 0);
    std::vector<std::vector<double>> per(M, std::vector<double>(K, 0.0));
    for (std::size_t s = 0; s < p.size(); ++s) {
      for (int m = 0; m < M; ++m) per[m][digit[m]] += p[s];
      int q = M - 1;
      while (q >= 0 && digit[q] + 1 == K) digit[q--] = 0;
      if (q >= 0) ++digit[q];
    }
    for (int m = 0; m < M; ++m) out[m * T + t] = std::move(per[m]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact sampling from small undirected models

/// One exact sample by CDF inversion over the enumerated hidden state
/// space; two passes keep it streaming.  Evidence variables are fixed at
/// their observed states in the returned assignment.  One uniform draw per
/// call.
inline std::vector<int> sample_assignment(const FactorGraph& g,
                                          SplitMix64& rng,
                                          std::size_t cap = default_cap) {
  const FactorGraph cond = condition(g, {});
  const std::vector<VarId> hidden = cond.hidden_vars();
  if (hidden.empty())
    throw std::invalid_argument("sampling needs a hidden variable");
  if (cond.hidden_state_count() > cap)
    throw capacity_error("state space exceeds sampling cap");
  std::vector<int> shape;
  for (VarId v : hidden) shape.push_back(cond.cardinality(v));

  double max_e = neg_inf;
  double total = 0.0;
  {
    Walker w(shape);
    std::vector<int> views;
    for (const Factor& f : cond.factors)
      views.push_back(w.add_view(stride_map(hidden, shape, f)));
    do {
      double e = 0.0;
      for (std::size_t a = 0; a < cond.factors.size(); ++a)
        e += cond.factors[a].values[w.offset(views[a])];
      max_e = std::max(max_e, e);
    } while (w.advance());
    if (max_e == neg_inf)
      throw numeric_error("every assignment has zero probability");
    w.reset();
    do {
      double e = 0.0;
      for (std::size_t a = 0; a < cond.factors.size(); ++a)
        e += cond.factors[a].values[w.offset(views[a])];
      if (e != neg_inf) total += std::exp(e - max_e);
    } while (w.advance());
  }
  const double target = rng.uniform() * total;
  std::vector<int> assignment(cond.num_vars(), 0);
  for (const auto& [v, s] : cond.evidence) assignment[v] = s;
  double acc = 0.0;
  Walker w(shape);
  std::vector<int> views;
  for (const Factor& f : cond.factors)
    views.push_back(w.add_view(stride_map(hidden, shape, f)));
  std::vector<int> chosen;
  do {
    double e = 0.0;
    for (std::size_t a = 0; a < cond.factors.size(); ++a)
      e += cond.factors[a].values[w.offset(views[a])];
    if (e == neg_inf) continue;
    acc += std::exp(e - max_e);
    chosen = w.digits();
    if (acc >= target) break;
  } while (w.advance());
  for (std::size_t i = 0; i < hidden.size(); ++i)
    assignment[hidden[i]] = chosen[i];
  return assignment;
}

}  // namespace gmf
