#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hydro/harness.hpp"
#include "hydro/rng.hpp"

namespace {

using namespace hydro;

constexpr int kExitInvalidConfig = 2;
constexpr int kExitNotConverged = 3;

struct CommonFlags {
  std::string config_path;
  std::string method;
  std::string output_dir;
  std::vector<uint64_t> seeds;
  double sigma = -1.0;
  int iterations = -1;
  int rollout_len = -1;
  int dataset_size = -1;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "experiment config JSON");
  sub->add_option("--method", f.method, "override the configured method");
  sub->add_option("--output-dir", f.output_dir, "override the output directory");
  sub->add_option("--seeds", f.seeds, "override the run seed list");
  sub->add_option("--sigma", f.sigma, "override train.sigma");
  sub->add_option("--iterations", f.iterations, "override train.iterations");
  sub->add_option("--rollout-len", f.rollout_len, "override train.rollout_len");
  sub->add_option("--dataset-size", f.dataset_size, "override dataset.size");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = load_experiment_config(f.config_path);
  if (!f.method.empty()) cfg.method = parse_method(f.method);
  if (!f.output_dir.empty()) cfg.output_dir = f.output_dir;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (f.sigma >= 0.0) cfg.train.sigma = f.sigma;
  if (f.iterations > 0) cfg.train.iterations = f.iterations;
  if (f.rollout_len >= 0) cfg.train.rollout_len = f.rollout_len;
  if (f.dataset_size > 0) cfg.dataset_size = f.dataset_size;
  cfg.validate();
  return cfg;
}

void save_solution_json(const SolveResult& sol, double sigma, double gamma,
                        double value_at_init, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "{\n";
  os << "  \"sigma\": " << fmt_g17(sigma) << ",\n";
  os << "  \"gamma\": " << fmt_g17(gamma) << ",\n";
  os << "  \"n_states\": " << sol.q.n_states << ",\n";
  os << "  \"n_actions\": " << sol.q.n_actions << ",\n";
  os << "  \"iterations\": " << sol.iterations << ",\n";
  os << "  \"converged\": " << (sol.converged ? "true" : "false") << ",\n";
  os << "  \"value_at_init\": " << fmt_g17(value_at_init) << ",\n";
  os << "  \"q\": [";
  for (size_t i = 0; i < sol.q.v.size(); ++i) {
    if (i) os << ", ";
    os << fmt_g17(sol.q.v[i]);
  }
  os << "],\n";
  os << "  \"policy\": [";
  for (size_t i = 0; i < sol.policy.act.size(); ++i) {
    if (i) os << ", ";
    os << sol.policy.act[i];
  }
  os << "]\n}\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

int cmd_solve_exact(const CommonFlags& flags, bool strict) {
  ExperimentConfig cfg = resolve_config(flags);
  TabularMDP target = compile_grid(cfg.grid, cfg.gamma);
  SolveResult sol = robust_value_iteration(target, cfg.train.sigma);
  double v0 = 0.0;
  for (int s = 0; s < target.n_states; ++s)
    v0 += target.init_dist[size_t(s)] * sol.q.state_value(s);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path =
      cfg.output_dir + "/exact_q_sigma" + fmt_g17(cfg.train.sigma) + ".json";
  save_solution_json(sol, cfg.train.sigma, cfg.gamma, v0, path);
  std::cout << "solve-exact: sigma=" << fmt_g17(cfg.train.sigma)
            << " value_at_init=" << fmt_g17(v0) << " iterations=" << sol.iterations
            << (sol.converged ? "" : " (not converged)") << "\n"
            << "wrote " << path << "\n";
  if (strict && !sol.converged) return kExitNotConverged;
  return 0;
}

int cmd_gen_data(const CommonFlags& flags, uint64_t run_seed) {
  ExperimentConfig cfg = resolve_config(flags);
  TabularMDP target = compile_grid(cfg.grid, cfg.gamma);
  PolicyTable behavior = robust_value_iteration(target, 0.0).policy;
  Dataset data = generate_offline_dataset(target, behavior, cfg.behavior_epsilon,
                                          cfg.dataset_size, cfg.dataset_seed + run_seed);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path =
      cfg.output_dir + "/dataset_seed" + std::to_string(run_seed) + ".csv";
  save_dataset_csv(data, path);
  std::cout << "gen-data: " << data.size() << " transitions\nwrote " << path << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, uint64_t run_seed, bool seed_given) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!seed_given) run_seed = cfg.seeds.front();

  auto [target, source] = make_env_pair(cfg.grid, cfg.gamma, cfg.shift);
  PolicyTable behavior = robust_value_iteration(target, 0.0).policy;
  Dataset data = generate_offline_dataset(target, behavior, cfg.behavior_epsilon,
                                          cfg.dataset_size, cfg.dataset_seed + run_seed);
  TrainConfig tc = cfg.train;
  tc.gamma = cfg.gamma;
  tc.seed = run_seed;

  Checkpoint ck;
  ck.method = method_name(cfg.method);
  ck.fingerprint = experiment_fingerprint(cfg, run_seed);
  ck.iteration = tc.iterations;
  ck.n_states = target.n_states;
  ck.n_actions = target.n_actions;
  TrainLog log;
  std::string summary;
  if (cfg.method == Method::fqi || cfg.method == Method::rfqi) {
    FittedResult fr = cfg.method == Method::fqi ? fqi_train(data, tc, nullptr, &target)
                                                : rfqi_train(data, tc, nullptr, &target);
    for (int a = 0; a < ck.n_actions; ++a)
      for (int s = 0; s < ck.n_states; ++s)
        ck.q_weights.push_back(fr.q.weights()(a, s));
    ck.g_values = fr.g.values();
    ck.update_checksum = fr.log.checksum;
    ck.rng_state = fr.log.rng_state;
    log = std::move(fr.log);
  } else {
    HydroOptions opts;
    TrainConfig tc2 = tc;
    if (cfg.method == Method::naive_merge) {
      opts.filter_enabled = false;
      opts.priority_enabled = false;
      tc2.topk_fraction = 1.0;
    } else if (cfg.method == Method::hydro_no_priority) {
      opts.priority_enabled = false;
    } else if (cfg.method == Method::hydro_no_filter) {
      opts.filter_enabled = false;
    }
    Simulator sim(source, run_seed);
    HydroResult hr = hydro_train(sim, data, tc2, opts, nullptr, &target);
    for (int a = 0; a < ck.n_actions; ++a)
      for (int s = 0; s < ck.n_states; ++s)
        ck.q_weights.push_back(hr.q.weights()(a, s));
    ck.g_values = hr.g.values();
    ck.update_checksum = hr.log.checksum;
    ck.rng_state = hr.log.rng_state;
    summary = " accept_rate=" + fmt_g17(hr.accept_rate) +
              " buffer_size=" + std::to_string(hr.buffer_size) +
              " epsilon_u=" + fmt_g17(hr.epsilon_u);
    log = std::move(hr.log);
  }

  std::filesystem::create_directories(cfg.output_dir);
  std::string base = cfg.output_dir + "/" + method_name(cfg.method) + "_seed" +
                     std::to_string(run_seed);
  save_train_log_csv(log, base + "_train_log.csv");
  save_checkpoint(ck, cfg.output_dir + "/checkpoint_" + method_name(cfg.method) +
                          "_seed" + std::to_string(run_seed) + ".json");
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)ck.update_checksum);
  std::cout << "train: method=" << method_name(cfg.method) << " seed=" << run_seed
            << " update_checksum=" << hex << summary << "\nwrote " << base
            << "_train_log.csv\n";
  return 0;
}

int cmd_eval_sweep(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  SweepResult res = run_sweep(cfg);
  std::cout << "eval-sweep: " << res.rows.size() << " rows\nwrote " << res.csv_path
            << "\n";
  return 0;
}

int cmd_diagnose_thm1(const CommonFlags& flags, int instances, int n_states,
                      int n_actions, std::vector<double> sigmas, bool strict) {
  ExperimentConfig cfg = resolve_config(flags);
  if (instances < 1) throw std::invalid_argument("diagnose-thm1: instances >= 1");
  if (sigmas.empty()) sigmas = {0.1, 0.3};

  std::vector<Thm1Report> reports;
  for (int i = 0; i < instances; ++i) {
    TabularMDP target = random_tabular_mdp(n_states, n_actions, cfg.gamma, uint64_t(i));
    TabularMDP source = target;
    if (i % 2 == 1) {
      // Mismatched source: fresh random dynamics, shared rewards and starts.
      TabularMDP other =
          random_tabular_mdp(n_states, n_actions, cfg.gamma, uint64_t(i) + 50000);
      source.kernel = other.kernel;
    }
    PolicyTable pi = random_policy(n_states, n_actions, uint64_t(i));
    PolicyTable unused;
    unused.act.assign(size_t(n_states), 0);
    Dataset data = generate_offline_dataset(target, unused, 1.0, 400, uint64_t(i));
    for (double sigma : sigmas)
      reports.push_back(bound_diagnostics_thm1(pi, target, source, data, sigma, 7, 1.0,
                                               uint64_t(i), false));
  }

  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/thm1_diagnostics.csv";
  save_thm1_csv(reports, path);
  size_t violations = 0;
  for (const Thm1Report& r : reports)
    if (!r.holds) ++violations;
  std::cout << "diagnose-thm1: " << reports.size() << " checks, " << violations
            << " violations\nwrote " << path << "\n";
  if (strict && violations > 0) return kExitNotConverged;
  return 0;
}

int cmd_diagnose_thm2(const CommonFlags& flags, double kappa, int iters, bool strict) {
  ExperimentConfig cfg = resolve_config(flags);
  auto [target, source] = make_env_pair(cfg.grid, cfg.gamma, cfg.shift);
  double k = kappa >= 0.0 ? kappa : cfg.train.kappa;
  KappaDiagnostics diag = kappa_mixed_iteration(target, source, cfg.train.sigma, k, iters);
  std::filesystem::create_directories(cfg.output_dir);
  std::string path = cfg.output_dir + "/thm2_kappa" + fmt_g17(k) + ".csv";
  save_thm2_csv(diag, path);
  size_t violations = 0;
  for (const KappaIterRow& r : diag.rows)
    if (r.gap > r.bound + 1e-9) ++violations;
  std::cout << "diagnose-thm2: kappa=" << fmt_g17(k) << " iters=" << diag.rows.size()
            << " violations=" << violations << "\nwrote " << path << "\n";
  if (strict && violations > 0) return kExitNotConverged;
  return 0;
}

int cmd_ztest(const std::string& path_a, const std::string& path_b, bool allow_small_n) {
  std::vector<double> a = seed_averages(load_sweep_csv(path_a));
  std::vector<double> b = seed_averages(load_sweep_csv(path_b));
  ZTestResult res = ztest_compare(a, b, allow_small_n);
  std::cout << "ztest: n_a=" << a.size() << " n_b=" << b.size()
            << " z=" << fmt_g17(res.z) << " p=" << fmt_g17(res.p_value)
            << " reject_h0_at_0.05=" << (res.reject_at_005 ? "yes" : "no") << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  if (inputs.empty()) throw std::invalid_argument("report: no input files");
  std::vector<SweepRow> rows;
  for (const std::string& path : inputs) {
    std::vector<SweepRow> part = load_sweep_csv(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::vector<ReportRow> rep = make_report(rows);
  save_report_csv(rep, out_path);
  std::cout << "report: " << rep.size() << " groups\nwrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust offline RL laboratory: exact solvers, fitted training, "
               "hybrid source transfer, and experiment sweeps"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool strict = false;

  auto* solve = app.add_subcommand("solve-exact", "robust value iteration on the target");
  add_common(solve, flags);
  solve->add_flag("--strict", strict, "exit 3 when the solver does not converge");

  auto* gen = app.add_subcommand("gen-data", "write an offline dataset CSV");
  add_common(gen, flags);
  uint64_t gen_seed = 0;
  gen->add_option("--run-seed", gen_seed, "seed offset added to dataset.seed");

  auto* train = app.add_subcommand("train", "train one method for one seed");
  add_common(train, flags);
  uint64_t train_seed = 0;
  auto* train_seed_opt =
      train->add_option("--seed", train_seed, "run seed (default: first of seeds)");

  auto* sweep = app.add_subcommand("eval-sweep", "train per seed and sweep perturbations");
  add_common(sweep, flags);

  auto* thm1 = app.add_subcommand("diagnose-thm1", "performance-bound checks on random instances");
  add_common(thm1, flags);
  int t1_instances = 50, t1_states = 6, t1_actions = 3;
  std::vector<double> t1_sigmas;
  thm1->add_option("--instances", t1_instances, "number of random instances");
  thm1->add_option("--states", t1_states, "states per instance (incl. fail state)");
  thm1->add_option("--actions", t1_actions, "actions per instance");
  thm1->add_option("--sigmas", t1_sigmas, "radii to check (default 0.1 0.3)");
  thm1->add_flag("--strict", strict, "exit 3 on any violation");

  auto* thm2 = app.add_subcommand("diagnose-thm2", "mixed-iteration convergence table");
  add_common(thm2, flags);
  double t2_kappa = -1.0;
  int t2_iters = 200;
  thm2->add_option("--kappa", t2_kappa, "mixing weight (default train.kappa)");
  thm2->add_option("--iters", t2_iters, "iterations to trace");
  thm2->add_flag("--strict", strict, "exit 3 on any bound violation");

  auto* ztest = app.add_subcommand("ztest", "one-sided z-test between two sweep CSVs");
  std::string zt_a, zt_b;
  bool zt_small = false;
  ztest->add_option("--a", zt_a, "sweep CSV whose mean is hypothesized higher")->required();
  ztest->add_option("--b", zt_b, "baseline sweep CSV")->required();
  ztest->add_flag("--allow-small-n", zt_small, "permit n < 30 per sample");

  auto* report = app.add_subcommand("report", "aggregate sweep CSVs into mean/std curves");
  std::vector<std::string> rp_inputs;
  std::string rp_out = "report.csv";
  report->add_option("--input", rp_inputs, "sweep CSV files")->required();
  report->add_option("--out", rp_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve_exact(flags, strict);
    if (gen->parsed()) return cmd_gen_data(flags, gen_seed);
    if (train->parsed()) return cmd_train(flags, train_seed, train_seed_opt->count() > 0);
    if (sweep->parsed()) return cmd_eval_sweep(flags);
    if (thm1->parsed())
      return cmd_diagnose_thm1(flags, t1_instances, t1_states, t1_actions, t1_sigmas,
                               strict);
    if (thm2->parsed()) return cmd_diagnose_thm2(flags, t2_kappa, t2_iters, strict);
    if (ztest->parsed()) return cmd_ztest(zt_a, zt_b, zt_small);
    if (report->parsed()) return cmd_report(rp_inputs, rp_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
