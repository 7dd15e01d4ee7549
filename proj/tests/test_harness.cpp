#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hydro/harness.hpp"
#include "support.hpp"

using namespace hydro;
using testutil::TempDir;

namespace {

// Single corridor cell next to the goal; the only sensible move is "right".
GridSpec one_by_two() {
  GridSpec g;
  g.width = 2;
  g.height = 1;
  g.goal = {0, 1};
  g.start_dist = {1.0, 0.0};
  g.slip_prob = 0.0;
  g.wind_push = {0.0, 0.0};
  g.validate();
  return g;
}

QTable optimal_q(const TabularMDP& mdp, double sigma = 0.0) {
  return robust_value_iteration(mdp, sigma).q;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  os << body;
}

// Deterministic three-state MDP (fail last) plus a dataset repeating every
// (s, a) transition often enough that each bootstrap member sees each pair,
// so a zero-prior ensemble reproduces the kernel bit for bit.
struct ExactModelCase {
  TabularMDP mdp;
  Dataset data;
};

ExactModelCase deterministic_case() {
  ExactModelCase c;
  TabularMDP& m = c.mdp;
  m.n_states = 3;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.fail_state = 2;
  m.init_dist = {0.5, 0.5, 0.0};
  m.reward = {0.8, 0.2,   // s0
              0.5, 0.9,   // s1
              0.0, 0.0};  // fail
  m.kernel = {0.0, 1.0, 0.0,  0.0, 0.0, 1.0,   // s0: a0 -> s1, a1 -> fail
              1.0, 0.0, 0.0,  0.0, 1.0, 0.0,   // s1: a0 -> s0, a1 -> s1
              0.0, 0.0, 1.0,  0.0, 0.0, 1.0};  // fail
  m.validate();
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      Transition t;
      t.s = s;
      t.a = a;
      t.r = m.r(s, a);
      for (int sn = 0; sn < m.n_states; ++sn)
        if (m.row(s, a)[size_t(sn)] == 1.0) t.s_next = sn;
      for (int k = 0; k < 100; ++k) c.data.push_back(t);
    }
  }
  return c;
}

std::string minimal_config_json() {
  return R"({"schema_version": 1})";
}

}  // namespace

TEST_CASE("evaluate_policy walks the corridor to the goal") {
  TabularMDP mdp = compile_grid(one_by_two(), 0.9);
  QTable q = optimal_q(mdp);
  EvalStats st = evaluate_policy(q, mdp, 20, 10, 7);
  // One reward-free step right, then nine absorbing goal steps at +1.
  CHECK(st.mean == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(st.stddev == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(st.episodes == 20);
  CHECK(st.horizon == 10);
}

TEST_CASE("evaluate_policy horizon zero and fail-state starts return zero") {
  TabularMDP mdp = compile_grid(one_by_two(), 0.9);
  QTable q = optimal_q(mdp);
  EvalStats st0 = evaluate_policy(q, mdp, 5, 0, 3);
  CHECK(st0.mean == 0.0);

  TabularMDP from_fail = mdp;
  from_fail.init_dist.assign(size_t(mdp.n_states), 0.0);
  from_fail.init_dist[size_t(mdp.fail_state)] = 1.0;
  EvalStats stf = evaluate_policy(q, from_fail, 5, 50, 3);
  CHECK(stf.mean == 0.0);
  CHECK(stf.stddev == 0.0);
}

TEST_CASE("evaluate_policy uses common random numbers per seed") {
  TabularMDP mdp = compile_grid(GridSpec::cliff_walk_5x5(), 0.95);
  QTable q = optimal_q(mdp);
  EvalStats a = evaluate_policy(q, mdp, 30, 60, 11);
  EvalStats b = evaluate_policy(q, mdp, 30, 60, 11);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
  EvalStats c = evaluate_policy(q, mdp, 30, 60, 12);
  CHECK(a.mean != c.mean);
}

TEST_CASE("evaluate_policy validates its inputs") {
  TabularMDP mdp = compile_grid(one_by_two(), 0.9);
  QTable q = optimal_q(mdp);
  QTable wrong(mdp.n_states + 1, mdp.n_actions);
  CHECK_THROWS_AS(evaluate_policy(wrong, mdp, 5, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_policy(q, mdp, 0, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_policy(q, mdp, 5, -1, 0), std::invalid_argument);
}

TEST_CASE("simulator-driven evaluation matches the kernel-driven protocol shape") {
  TabularMDP mdp = compile_grid(one_by_two(), 0.9);
  QTable q = optimal_q(mdp);
  Simulator sim(mdp, 5);
  EvalStats st = evaluate_policy(q, sim, 10, 10);
  CHECK(st.mean == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("exact_policy_return reproduces the chain closed form") {
  TabularMDP chain = testutil::two_state_chain();
  PolicyTable pi;
  pi.act = {0, 0};
  CHECK(exact_policy_return(pi, chain, 0.2) == doctest::Approx(1.0 / 0.28).epsilon(1e-10));
  CHECK(exact_policy_return(pi, chain, 0.0) == doctest::Approx(10.0).epsilon(1e-10));
}

TEST_CASE("ztest_compare on identical samples is exactly neutral") {
  std::vector<double> xs(30, 1.5);
  ZTestResult r = ztest_compare(xs, xs);
  CHECK(r.z == 0.0);
  CHECK(r.p_value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(r.reject_at_005);
}

TEST_CASE("ztest_compare detects a large separation") {
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[size_t(i)] = 10.0 + 0.01 * i;
    b[size_t(i)] = 1.0 + 0.01 * i;
  }
  ZTestResult r = ztest_compare(a, b);
  CHECK(r.z > 5.0);
  CHECK(r.p_value < 1e-6);
  CHECK(r.reject_at_005);
}

TEST_CASE("ztest_compare refuses small samples unless opted in") {
  std::vector<double> a(5, 2.0), b(5, 1.0);
  a[0] = 2.5;
  b[0] = 0.5;
  CHECK_THROWS_WITH_AS(ztest_compare(a, b), doctest::Contains("30"),
                       std::invalid_argument);
  ZTestResult r = ztest_compare(a, b, true);
  CHECK(r.z > 0.0);
  std::vector<double> one(1, 0.0);
  CHECK_THROWS_AS(ztest_compare(one, one, true), std::invalid_argument);
}

TEST_CASE("random_tabular_mdp draws valid instances with a reachable fail state") {
  TabularMDP m = random_tabular_mdp(6, 3, 0.9, 42);
  CHECK(m.n_states == 6);
  CHECK(m.fail_state == 5);
  CHECK(m.init_dist[5] == 0.0);
  for (int s = 0; s + 1 < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      CHECK(m.row(s, a)[size_t(m.fail_state)] > 0.0);

  TabularMDP again = random_tabular_mdp(6, 3, 0.9, 42);
  CHECK(m.kernel == again.kernel);
  CHECK(m.reward == again.reward);
  TabularMDP other = random_tabular_mdp(6, 3, 0.9, 43);
  CHECK(m.kernel != other.kernel);
  CHECK_THROWS_AS(random_tabular_mdp(1, 1, 0.9, 0), std::invalid_argument);
  CHECK_THROWS_AS(random_tabular_mdp(4, 2, 1.0, 0), std::invalid_argument);
}

TEST_CASE("thm1 diagnostic is tight when model, source, and target coincide") {
  ExactModelCase c = deterministic_case();
  PolicyTable pi;
  pi.act = {0, 1, 0};
  Thm1Report rep = bound_diagnostics_thm1(pi, c.mdp, c.mdp, c.data, 0.0, 5, 0.0, 1);
  CHECK(rep.term_a == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.term_b == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.lhs == doctest::Approx(rep.rhs).epsilon(1e-12));
  CHECK(rep.holds);
}

TEST_CASE("thm1 term_b vanishes when the source equals the worst-case kernel") {
  TabularMDP target = testutil::two_state_chain();
  PolicyTable pi;
  pi.act = {0, 0};
  TabularMDP source = target;
  source.kernel = {0.8, 0.2, 0.0, 1.0};

  Dataset data;
  for (int s = 0; s < 2; ++s) {
    Transition t;
    t.s = s;
    t.a = 0;
    t.r = target.r(s, 0);
    t.s_next = s;
    for (int k = 0; k < 100; ++k) data.push_back(t);
  }
  Thm1Report rep = bound_diagnostics_thm1(pi, target, source, data, 0.2, 5, 0.0, 1);
  CHECK(rep.term_a == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(rep.term_b == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(rep.holds);
  // lhs is the robust chain value, source_value the worst-case-kernel rollout.
  CHECK(rep.lhs == doctest::Approx(1.0 / 0.28).epsilon(1e-8));
  CHECK(rep.source_value == doctest::Approx(rep.lhs).epsilon(1e-6));
}

TEST_CASE("thm1 diagnostic holds on random instances with mismatched sources") {
  for (uint64_t i = 0; i < 5; ++i) {
    TabularMDP target = random_tabular_mdp(6, 2, 0.9, i);
    TabularMDP source = target;
    TabularMDP other = random_tabular_mdp(6, 2, 0.9, i + 50000);
    source.kernel = other.kernel;
    PolicyTable pi = random_policy(6, 2, i);
    PolicyTable unused;
    unused.act.assign(6, 0);
    Dataset data = generate_offline_dataset(target, unused, 1.0, 400, i);
    Thm1Report rep = bound_diagnostics_thm1(pi, target, source, data, 0.3, 7, 1.0, i);
    CHECK(rep.holds);
    CHECK(rep.term_a >= 0.0);
    CHECK(rep.term_b >= 0.0);
  }
}

TEST_CASE("thm1 rejects mismatched shapes and empty datasets") {
  TabularMDP target = random_tabular_mdp(4, 2, 0.9, 0);
  TabularMDP bigger = random_tabular_mdp(5, 2, 0.9, 0);
  PolicyTable pi = random_policy(4, 2, 0);
  Dataset data;
  CHECK_THROWS_AS(bound_diagnostics_thm1(pi, target, target, data, 0.1),
                  std::invalid_argument);
  Transition t;
  data.push_back(t);
  CHECK_THROWS_AS(bound_diagnostics_thm1(pi, target, bigger, data, 0.1),
                  std::invalid_argument);
}

TEST_CASE("save_thm1_csv writes one row per report") {
  TempDir dir("thm1csv");
  std::vector<Thm1Report> reps(2);
  reps[0].sigma = 0.1;
  reps[0].holds = true;
  reps[1].sigma = 0.3;
  std::string path = dir.file("t.csv");
  save_thm1_csv(reps, path);
  std::string body = testutil::slurp(path);
  CHECK(body.rfind("instance,sigma,lhs,source_value,term_a,term_b,rhs,holds\n", 0) == 0);
  CHECK(std::count(body.begin(), body.end(), '\n') == 3);
}

TEST_CASE("experiment config parses defaults from a minimal file") {
  TempDir dir("cfgmin");
  std::string path = dir.file("c.json");
  write_file(path, minimal_config_json());
  ExperimentConfig cfg = load_experiment_config(path);
  CHECK(cfg.gamma == 0.95);
  CHECK(cfg.method == Method::hydro);
  CHECK(cfg.seeds.size() == 10);
  CHECK(cfg.dataset_size == 500);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.shift.slip_delta == 0.2);
}

TEST_CASE("experiment config propagates every block") {
  TempDir dir("cfgfull");
  std::string path = dir.file("c.json");
  write_file(path, R"({
    "schema_version": 1,
    "env": {"preset": "cliff_walk_5x5", "gamma": 0.9,
            "source_shift": {"slip_delta": 0.1, "wind_delta": 0.05}},
    "dataset": {"size": 200, "seed": 7, "behavior_epsilon": 0.2},
    "method": "rfqi",
    "train": {"sigma": 0.3, "iterations": 50, "batch_size": 32},
    "eval": {"episodes": 5, "horizon": 50, "perturb_param": "wind_push",
             "grid": [0.0, 0.1]},
    "seeds": [0, 1],
    "output_dir": "runs"
  })");
  ExperimentConfig cfg = load_experiment_config(path);
  CHECK(cfg.gamma == 0.9);
  CHECK(cfg.shift.slip_delta == 0.1);
  CHECK(cfg.shift.wind_delta == 0.05);
  CHECK(cfg.dataset_size == 200);
  CHECK(cfg.dataset_seed == 7);
  CHECK(cfg.behavior_epsilon == 0.2);
  CHECK(cfg.method == Method::rfqi);
  CHECK(cfg.train.sigma == 0.3);
  CHECK(cfg.train.iterations == 50);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.eval.episodes == 5);
  CHECK(cfg.eval.param == PerturbParam::wind_push);
  CHECK(cfg.eval.magnitudes == std::vector<double>{0.0, 0.1});
  CHECK(cfg.seeds == std::vector<uint64_t>{0, 1});
  CHECK(cfg.output_dir == "runs");
}

TEST_CASE("experiment config rejects malformed files by name") {
  TempDir dir("cfgbad");
  auto expect_throw = [&](const std::string& body, const std::string& needle) {
    std::string path = dir.file("bad.json");
    write_file(path, body);
    CHECK_THROWS_WITH_AS(load_experiment_config(path), doctest::Contains(needle.c_str()),
                         std::invalid_argument);
  };
  expect_throw(R"({"schema_version": 1, "turbo": true})", "turbo");
  expect_throw(R"({"schema_version": 2})", "unsupported schema_version");
  expect_throw(R"({"output_dir": "x"})", "missing schema_version");
  expect_throw(R"({"schema_version": 1, "env": {"preset": "lava_world"}})",
               "lava_world");
  expect_throw(
      R"({"schema_version": 1, "env": {"preset": "cliff_walk_5x5", "grid": "g.json"}})",
      "exclusive");
  expect_throw(R"({"schema_version": 1, "train": {"gamma": 0.9}})", "gamma");
  expect_throw(R"({"schema_version": 1, "train": {"seed": 3}})", "seed");
  expect_throw(R"({"schema_version": 1, "eval": {"perturb_param": "heat"}})", "heat");
  expect_throw(R"({"schema_version": 1, "seeds": [1, 1]})", "duplicate seeds");
  CHECK_THROWS_AS(load_experiment_config(dir.file("absent.json")),
                  std::invalid_argument);
}

TEST_CASE("sweep CSV round-trips exactly") {
  TempDir dir("sweepcsv");
  std::vector<SweepRow> rows(2);
  rows[0] = {"rfqi", "slip_prob", 0.1, 3, 1.0 / 3.0, 0.25, 30};
  rows[1] = {"hydro", "wind_push", 0.0, 11, -2.5, 1e-17, 5};
  std::string path = dir.file("s.csv");
  save_sweep_csv(rows, path);
  std::vector<SweepRow> back = load_sweep_csv(path);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].param == rows[i].param);
    CHECK(back[i].magnitude == rows[i].magnitude);
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].mean_return == rows[i].mean_return);
    CHECK(back[i].std_return == rows[i].std_return);
    CHECK(back[i].episodes == rows[i].episodes);
  }
}

TEST_CASE("sweep CSV loader names the offending column") {
  TempDir dir("sweephdr");
  std::string path = dir.file("s.csv");
  write_file(path, "method,param,magnitude,seed,mean,std_return,episodes\n");
  CHECK_THROWS_WITH_AS(load_sweep_csv(path), doctest::Contains("mean"),
                       std::invalid_argument);
  write_file(path, "method,param\n");
  CHECK_THROWS_WITH_AS(load_sweep_csv(path), doctest::Contains("magnitude"),
                       std::invalid_argument);
  write_file(path,
             "method,param,magnitude,seed,mean_return,std_return,episodes\n"
             "hydro,slip_prob,0.1,0,oops,0.0,3\n");
  CHECK_THROWS_WITH_AS(load_sweep_csv(path), doctest::Contains("line 2"),
                       std::invalid_argument);
}

TEST_CASE("make_report aggregates per (method, param, magnitude)") {
  std::vector<SweepRow> rows;
  for (uint64_t seed : {0, 1, 2}) {
    SweepRow r{"hydro", "slip_prob", 0.1, seed, double(seed) + 1.0, 0.0, 10};
    rows.push_back(r);
  }
  rows.push_back({"fqi", "slip_prob", 0.1, 0, 5.0, 0.0, 10});
  std::vector<ReportRow> rep = make_report(rows);
  REQUIRE(rep.size() == 2);
  // Groups come out in sorted key order, so fqi precedes hydro.
  CHECK(rep[0].method == "fqi");
  CHECK(rep[0].n_seeds == 1);
  CHECK(rep[0].std_across_seeds == 0.0);
  CHECK(rep[1].method == "hydro");
  CHECK(rep[1].mean_return == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(rep[1].std_across_seeds == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep[1].n_seeds == 3);
  CHECK_THROWS_AS(make_report({}), std::invalid_argument);
}

TEST_CASE("save_report_csv writes the aggregate header") {
  TempDir dir("repcsv");
  std::vector<ReportRow> rows(1);
  rows[0] = {"hydro", "slip_prob", 0.2, 3.5, 0.1, 4};
  std::string path = dir.file("r.csv");
  save_report_csv(rows, path);
  std::string body = testutil::slurp(path);
  CHECK(body.rfind("method,param,magnitude,mean_return,std_across_seeds,n_seeds\n", 0) ==
        0);
  CHECK(body.find("hydro,slip_prob,") != std::string::npos);
}

TEST_CASE("seed_averages folds the grid per seed in ascending order") {
  std::vector<SweepRow> rows;
  rows.push_back({"hydro", "slip_prob", 0.0, 2, 1.0, 0.0, 10});
  rows.push_back({"hydro", "slip_prob", 0.1, 2, 3.0, 0.0, 10});
  rows.push_back({"hydro", "slip_prob", 0.0, 0, 2.0, 0.0, 10});
  rows.push_back({"hydro", "slip_prob", 0.1, 0, 4.0, 0.0, 10});
  std::vector<double> avg = seed_averages(rows);
  REQUIRE(avg.size() == 2);
  CHECK(avg[0] == doctest::Approx(3.0));  // seed 0
  CHECK(avg[1] == doctest::Approx(2.0));  // seed 2
  rows.push_back({"fqi", "slip_prob", 0.0, 0, 9.0, 0.0, 10});
  CHECK_THROWS_AS(seed_averages(rows), std::invalid_argument);
  CHECK_THROWS_AS(seed_averages({}), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  TempDir dir("ckpt");
  Checkpoint ck;
  ck.method = "rfqi";
  ck.fingerprint = "00ff00ff00ff00ff";
  ck.iteration = 123;
  ck.n_states = 2;
  ck.n_actions = 2;
  ck.q_weights = {0.1, 1.0 / 3.0, -2.5, 7e-13};
  ck.g_values = {1.25, 0.0, 3.0, 1e17};
  ck.update_checksum = 0xdeadbeefcafef00dULL;
  ck.rng_state = {{"target_batch", "12345 67"}, {"rollout", "9 9"}};
  std::string path = dir.file("c.json");
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.method == ck.method);
  CHECK(back.fingerprint == ck.fingerprint);
  CHECK(back.iteration == ck.iteration);
  CHECK(back.q_weights == ck.q_weights);
  CHECK(back.g_values == ck.g_values);
  CHECK(back.update_checksum == ck.update_checksum);
  CHECK(back.rng_state == ck.rng_state);

  // q_weights are row-major over (action, state).
  QTable q = back.q_table();
  CHECK(q.at(0, 0) == 0.1);
  CHECK(q.at(1, 0) == 1.0 / 3.0);
  CHECK(q.at(0, 1) == -2.5);
  CHECK(q.at(1, 1) == 7e-13);
}

TEST_CASE("checkpoint loader rejects missing keys and bad dimensions") {
  TempDir dir("ckptbad");
  std::string path = dir.file("c.json");
  write_file(path, R"({
    "schema_version": 1, "method": "fqi", "fingerprint": "00", "iteration": 1,
    "n_states": 2, "n_actions": 2, "update_checksum": "0",
    "q_weights": [0,0,0,0], "rng_state": {}})");
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("g_values"),
                       std::invalid_argument);
  write_file(path, R"({"schema_version": 1, "method": "fqi", "horse": 1})");
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("horse"),
                       std::invalid_argument);
  write_file(path, R"({
    "schema_version": 1, "method": "fqi", "fingerprint": "00", "iteration": 1,
    "n_states": 2, "n_actions": 2, "update_checksum": "0",
    "q_weights": [1.0], "g_values": [0,0,0,0], "rng_state": {}})");
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("dimensions"),
                       std::invalid_argument);
}

TEST_CASE("experiment fingerprint tracks inputs but not logging cadence") {
  ExperimentConfig cfg;
  std::string base = experiment_fingerprint(cfg, 0);
  CHECK(base == experiment_fingerprint(cfg, 0));
  CHECK(base != experiment_fingerprint(cfg, 1));

  ExperimentConfig sig = cfg;
  sig.train.sigma += 0.01;
  CHECK(base != experiment_fingerprint(sig, 0));

  ExperimentConfig shift = cfg;
  shift.shift.wind_delta = 0.15;
  CHECK(base != experiment_fingerprint(shift, 0));

  ExperimentConfig logp = cfg;
  logp.train.log_period = 999;
  CHECK(base == experiment_fingerprint(logp, 0));
}

TEST_CASE("train log CSV spells NaN columns as nan") {
  TempDir dir("trainlog");
  TrainLog log;
  TrainLogRow row;
  row.iter = 10;
  row.eval_return_nominal = 4.5;
  log.rows.push_back(row);
  std::string path = dir.file("log.csv");
  save_train_log_csv(log, path);
  std::string body = testutil::slurp(path);
  CHECK(body.rfind("iter,mean_psi_sampled,mean_psi_uniform_ref,accept_rate,lambda_mean,"
                   "eval_return_nominal,eval_return_worstcase\n",
                   0) == 0);
  CHECK(body.find("10,nan,nan,nan,nan,4.5,nan\n") != std::string::npos);
}

TEST_CASE("run_sweep is deterministic and honors matching checkpoints") {
  TempDir dir("sweeprun");
  ExperimentConfig cfg;
  cfg.method = Method::fqi;
  cfg.dataset_size = 150;
  cfg.train.iterations = 30;
  cfg.train.batch_size = 32;
  cfg.train.warmup_iters = 0;
  cfg.eval.episodes = 3;
  cfg.eval.horizon = 30;
  cfg.eval.magnitudes = {0.1, 0.3};
  cfg.seeds = {0, 1};

  cfg.output_dir = dir.file("a");
  SweepResult ra = run_sweep(cfg);
  cfg.output_dir = dir.file("b");
  SweepResult rb = run_sweep(cfg);
  CHECK(testutil::slurp(ra.csv_path) == testutil::slurp(rb.csv_path));
  CHECK(ra.rows.size() == 2 * 2);

  // A checkpoint with a matching fingerprint short-circuits training: the
  // tampered weights survive the rerun untouched.
  std::string ck_path = dir.file("a") + "/checkpoint_fqi_seed0.json";
  Checkpoint orig = load_checkpoint(ck_path);
  Checkpoint tampered = orig;
  for (size_t s = 0; s < size_t(orig.n_states); ++s) tampered.q_weights[s] += 1000.0;
  save_checkpoint(tampered, ck_path);
  cfg.output_dir = dir.file("a");
  run_sweep(cfg);
  CHECK(load_checkpoint(ck_path).q_weights == tampered.q_weights);

  // A stale fingerprint forces a retrain that restores the original weights
  // and rows.
  tampered.fingerprint = "0000000000000000";
  save_checkpoint(tampered, ck_path);
  SweepResult rr = run_sweep(cfg);
  CHECK(load_checkpoint(ck_path).q_weights == orig.q_weights);
  CHECK(testutil::slurp(rr.csv_path) == testutil::slurp(rb.csv_path));
}

TEST_CASE("method names round-trip") {
  for (Method m : {Method::fqi, Method::rfqi, Method::hydro, Method::naive_merge,
                   Method::hydro_no_priority, Method::hydro_no_filter})
    CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_WITH_AS(parse_method("sarsa"), doctest::Contains("sarsa"),
                       std::invalid_argument);
}
