#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmf/experiment.hpp"
#include "gmf/io.hpp"

namespace gmf {

namespace detail {

inline void append_marginals(std::string& out,
                             const std::map<VarId, std::vector<double>>& m) {
  out += '{';
  bool first = true;
  for (const auto& [v, probs] : m) {
    if (!first) out += ',';
    first = false;
    out += '"' + std::to_string(v) + "\":";
    append_real_array(out, probs);
  }
  out += '}';
}

/// Sidecar meta for structure-aware partition schemes; absent sidecars
/// leave the family blank, which those schemes reject with a clear error.
inline ModelMeta meta_for_model(const std::string& model_path) {
  const std::string path = meta_path_for(model_path);
  if (!std::filesystem::exists(path)) return {};
  return load_meta(read_file(path));
}

}  // namespace detail

/// Command-line front end; parses args (program name excluded), writes any
/// report to `out` and diagnostics to `err`, returns the exit status.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"discrete graphical-model inference toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  int max_sweeps = 1000;
  int restarts = 1;
  std::size_t cap = default_cap;
  const auto add_common = [&](CLI::App* a) {
    a->add_option("--seed", seed, "seed for any randomized step");
    a->add_option("--tolerance", tolerance, "convergence tolerance");
    a->add_option("--max-sweeps", max_sweeps, "sweep or iteration limit");
    a->add_option("--restarts", restarts, "random restarts for gmf");
    a->add_option("--cap", cap, "largest table size any step may build");
  };
  add_common(&app);

  // gen
  CLI::App* gen = app.add_subcommand("gen", "generate a benchmark model");
  gen->require_subcommand(1);
  std::string gen_out = "model.json";

  CLI::App* gen_ising = gen->add_subcommand("ising", "nearest-neighbor grid");
  IsingSpec ising;
  gen_ising->add_option("--height", ising.height);
  gen_ising->add_option("--width", ising.width);
  gen_ising->add_option("--bias-min", ising.bias_range.first);
  gen_ising->add_option("--bias-max", ising.bias_range.second);
  gen_ising->add_option("--coupling-min", ising.coupling_range.first);
  gen_ising->add_option("--coupling-max", ising.coupling_range.second);
  gen_ising->add_option("--out", gen_out, "model file to write");
  add_common(gen_ising);

  CLI::App* gen_sigmoid =
      gen->add_subcommand("sigmoid", "layered binary belief net");
  SigmoidNetSpec sigmoid;
  sigmoid.layer_sizes = {6, 6, 6};
  gen_sigmoid->add_option("--layers", sigmoid.layer_sizes,
                          "hidden layer sizes, top first");
  gen_sigmoid->add_option("--observed", sigmoid.observed_layer_size,
                          "observed bottom layer size (0 for none)");
  gen_sigmoid->add_option("--weight-min", sigmoid.weight_range.first);
  gen_sigmoid->add_option("--weight-max", sigmoid.weight_range.second);
  gen_sigmoid->add_option("--out", gen_out, "model file to write");
  add_common(gen_sigmoid);

  CLI::App* gen_fhmm =
      gen->add_subcommand("fhmm", "factorial HMM with sampled observations");
  int fh_chains = 6, fh_steps = 40, fh_states = 3, fh_dim = 6;
  gen_fhmm->add_option("--chains", fh_chains);
  gen_fhmm->add_option("--steps", fh_steps);
  gen_fhmm->add_option("--states", fh_states);
  gen_fhmm->add_option("--output-dim", fh_dim);
  gen_fhmm->add_option("--out", gen_out, "model file to write");
  add_common(gen_fhmm);

  // one-shot inference commands
  std::string model_path;
  std::string partition_arg = "singletons";
  double damping = 0.0;

  CLI::App* exact_cmd =
      app.add_subcommand("exact", "oracle log-partition and marginals");
  exact_cmd->add_option("--model", model_path)->required();
  add_common(exact_cmd);

  CLI::App* gmf_cmd =
      app.add_subcommand("gmf", "generalized mean field over a clustering");
  gmf_cmd->add_option("--model", model_path)->required();
  gmf_cmd->add_option("--partition", partition_arg,
                      "scheme string or partition file");
  add_common(gmf_cmd);

  CLI::App* mf_cmd = app.add_subcommand("mf", "naive mean field");
  mf_cmd->add_option("--model", model_path)->required();
  add_common(mf_cmd);

  CLI::App* bp_cmd = app.add_subcommand("bp", "loopy belief propagation");
  bp_cmd->add_option("--model", model_path)->required();
  bp_cmd->add_option("--damping", damping, "message damping in [0,1)");
  add_common(bp_cmd);

  CLI::App* part_cmd =
      app.add_subcommand("partition", "materialize a partition scheme");
  std::string scheme;
  std::string part_out;
  part_cmd->add_option("--model", model_path)->required();
  part_cmd->add_option("--scheme", scheme)->required();
  part_cmd->add_option("--out", part_out, "write here instead of stdout");
  add_common(part_cmd);

  CLI::App* exp_cmd =
      app.add_subcommand("experiment", "run a multi-trial benchmark config");
  std::string config_path;
  std::string out_dir = ".";
  exp_cmd->add_option("--config", config_path)->required();
  exp_cmd->add_option("--out-dir", out_dir, "directory for results.csv and "
                                            "summary.json");
  add_common(exp_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen_ising->parsed()) {
      ising.seed = seed;
      write_file(gen_out, save_model(make_ising(ising)));
      ModelMeta meta;
      meta.family = "ising";
      meta.height = ising.height;
      meta.width = ising.width;
      meta.bias_range = ising.bias_range;
      meta.coupling_range = ising.coupling_range;
      meta.seed = seed;
      write_file(meta_path_for(gen_out), save_meta(meta));
    } else if (gen_sigmoid->parsed()) {
      sigmoid.seed = seed;
      const DirectedModel net = make_sigmoid_net(sigmoid);
      FactorGraph g = net.moralize();
      ModelMeta meta;
      meta.family = "sigmoid";
      meta.layer_sizes = sigmoid.layer_sizes;
      meta.observed_layer_size = sigmoid.observed_layer_size;
      meta.weight_range = sigmoid.weight_range;
      meta.seed = seed;
      if (sigmoid.observed_layer_size > 0) {
        meta.has_observation_seed = true;
        meta.observation_seed = observation_seed_for(seed);
        const std::vector<int> x = ancestral_sample(net, meta.observation_seed);
        const int n = g.num_vars();
        for (int v = n - sigmoid.observed_layer_size; v < n; ++v)
          g.evidence[v] = x[v];
      }
      write_file(gen_out, save_model(g));
      write_file(meta_path_for(gen_out), save_meta(meta));
    } else if (gen_fhmm->parsed()) {
      const FhmmSpec spec =
          random_fhmm(fh_chains, fh_steps, fh_states, fh_dim, seed);
      ModelMeta meta;
      meta.family = "fhmm";
      meta.chains = fh_chains;
      meta.steps = fh_steps;
      meta.states = fh_states;
      meta.output_dim = fh_dim;
      meta.seed = seed;
      meta.has_observation_seed = true;
      meta.observation_seed = observation_seed_for(seed);
      const FhmmSample sample = sample_fhmm(spec, meta.observation_seed);
      write_file(gen_out,
                 save_model(make_fhmm(spec, sample.observations, cap)));
      write_file(meta_path_for(gen_out), save_meta(meta));
      write_file(obs_path_for(gen_out), save_observations(sample.observations));
    } else if (exact_cmd->parsed()) {
      const FactorGraph g = load_model(read_file(model_path));
      const ExactResult res = all_node_marginals(g, cap);
      std::string rep = "{\"log_partition\":";
      detail::append_real(rep, res.log_partition);
      rep += ",\"marginals\":";
      detail::append_marginals(rep, res.marginals);
      rep += '}';
      out << rep << '\n';
    } else if (gmf_cmd->parsed() || mf_cmd->parsed()) {
      const FactorGraph g = load_model(read_file(model_path));
      const Partition part =
          mf_cmd->parsed()
              ? singletons(g.num_vars())
              : resolve_partition(partition_arg,
                                  detail::meta_for_model(model_path), g);
      GmfConfig gc;
      gc.tolerance = tolerance;
      gc.max_sweeps = max_sweeps;
      gc.restarts = restarts;
      gc.cap = cap;
      gc.seed = seed;
      const GmfResult res = run_gmf(g, part, gc);
      std::string rep = "{\"elbo\":";
      detail::append_real(rep, res.elbo);
      rep += ",\"elbo_trace\":";
      detail::append_real_array(rep, res.elbo_trace);
      rep += ",\"sweeps\":" + std::to_string(res.sweeps);
      rep += ",\"converged\":";
      rep += res.converged ? "true" : "false";
      rep += ",\"restart_index\":" + std::to_string(res.restart_index);
      rep += ",\"wall_time_ms\":";
      detail::append_real(rep, res.wall_time_ms);
      rep += ",\"seed\":" + std::to_string(seed);
      rep += ",\"partition\":[";
      for (std::size_t c = 0; c < part.clusters.size(); ++c) {
        if (c) rep += ',';
        detail::append_int_array(rep, part.clusters[c]);
      }
      rep += "],\"marginals\":";
      detail::append_marginals(rep, res.marginals);
      rep += '}';
      out << rep << '\n';
    } else if (bp_cmd->parsed()) {
      const FactorGraph g = load_model(read_file(model_path));
      BpConfig bc;
      bc.tolerance = tolerance;
      bc.max_iters = max_sweeps;
      bc.damping = damping;
      bc.cap = cap;
      const BpResult res = run_bp(g, bc);
      std::string rep = "{\"iterations\":" + std::to_string(res.iterations);
      rep += ",\"converged\":";
      rep += res.converged ? "true" : "false";
      rep += ",\"max_residual\":";
      detail::append_real(rep, res.max_residual);
      rep += ",\"wall_time_ms\":";
      detail::append_real(rep, res.wall_time_ms);
      rep += ",\"marginals\":";
      detail::append_marginals(rep, res.marginals);
      rep += '}';
      out << rep << '\n';
    } else if (part_cmd->parsed()) {
      const FactorGraph g = load_model(read_file(model_path));
      const Partition part =
          resolve_partition(scheme, detail::meta_for_model(model_path), g);
      const std::string text = save_partition(part);
      if (part_out.empty())
        out << text << '\n';
      else
        write_file(part_out, text);
    } else if (exp_cmd->parsed()) {
      ExperimentConfig cfg = load_experiment_config(read_file(config_path));
      const auto given = [&](const std::string& name) {
        return app.count(name) + exp_cmd->count(name) > 0;
      };
      if (given("--seed")) cfg.base_seed = seed;
      if (given("--tolerance")) cfg.tolerance = tolerance;
      if (given("--max-sweeps")) cfg.max_sweeps = max_sweeps;
      if (given("--restarts")) cfg.restarts = restarts;
      if (given("--cap")) cfg.cap = cap;
      const ExperimentResult res = run_experiment(cfg, &err);
      std::filesystem::create_directories(out_dir);
      write_file((std::filesystem::path(out_dir) / "results.csv").string(),
                 format_csv(res));
      write_file((std::filesystem::path(out_dir) / "summary.json").string(),
                 format_summary(res));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gmf
