#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hydro/ensemble.hpp"
#include "hydro/envs.hpp"
#include "hydro/fitted.hpp"
#include "hydro/hydro.hpp"
#include "hydro/rmdp.hpp"
#include "hydro/types.hpp"

namespace hydro {

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, zero for one episode
  int episodes = 0;
  int horizon = 0;
};

/// Monte Carlo undiscounted return of the greedy policy of Q over seeded
/// episodes with a hard horizon cap (no early termination; absorbing states
/// keep accruing their reward). The stream depends only on `seed`, so equal
/// seeds evaluate different policies and models under common random numbers.
EvalStats evaluate_policy(const QTable& q, const TabularMDP& mdp, int episodes,
                          int horizon, uint64_t seed);

/// Same protocol driven through a live simulator (consumes its stream).
EvalStats evaluate_policy(const QTable& q, Simulator& sim, int episodes, int horizon);

/// Exact discounted cross-check: E_{d0}[V^{pi,sigma}].
double exact_policy_return(const PolicyTable& pi, const TabularMDP& mdp, double sigma = 0.0);

struct ZTestResult {
  double z = 0.0;
  double p_value = 0.0;  // one-sided upper tail: small when mean_a > mean_b
  bool reject_at_005 = false;
};

/// One-sided two-sample z-test of H0: mean_a <= mean_b. Refuses samples
/// smaller than 30 unless `allow_small_n` (the normal approximation is a
/// documented relaxation for few-seed protocols).
ZTestResult ztest_compare(std::span<const double> a, std::span<const double> b,
                          bool allow_small_n = false);

struct Thm1Report {
  double sigma = 0.0;
  double lhs = 0.0;           // E_d0 of the robust value around the true nominal
  double source_value = 0.0;  // E_d0 of the plain policy value in the source model
  double term_a = 0.0;        // occupancy-weighted TV between worst-case kernels
  double term_b = 0.0;        // occupancy-weighted source-vs-worst-case backup gap
  double rhs = 0.0;           // source_value - c1 * term_a - c2 * term_b
  bool holds = false;         // lhs >= rhs - 1e-8
};

/// Exact performance-difference diagnostic. The estimated nominal kernel is
/// the mean of a bootstrap ensemble fit on `dataset`; the inequality must
/// hold for any such estimate, any source kernel, and any deterministic
/// policy. Throws std::logic_error on violation when `assert_holds`.
Thm1Report bound_diagnostics_thm1(const PolicyTable& pi, const TabularMDP& target,
                                  const TabularMDP& source, const Dataset& dataset,
                                  double sigma, int ensemble_size = 7,
                                  double lambda_prior = 1.0, uint64_t seed = 0,
                                  bool assert_holds = true);

void save_thm1_csv(const std::vector<Thm1Report>& reports, const std::string& path);

/// Per-iteration convergence table for the kappa-mixed iteration:
/// iter, xi, zeta, bound, gap.
void save_thm2_csv(const KappaDiagnostics& diag, const std::string& path);

/// Random dense instance: Dirichlet(1) kernel rows and initial distribution,
/// uniform rewards in [0,1], and an absorbing zero-reward fail state at the
/// last index (every row gives it positive mass).
TabularMDP random_tabular_mdp(int n_states, int n_actions, double gamma, uint64_t seed);

PolicyTable random_policy(int n_states, int n_actions, uint64_t seed);

enum class Method { fqi, rfqi, hydro, naive_merge, hydro_no_priority, hydro_no_filter };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct EvalSpec {
  int episodes = 30;
  int horizon = 200;
  PerturbParam param = PerturbParam::slip_prob;
  std::vector<double> magnitudes = {0.0,  0.05, 0.1,  0.15, 0.2, 0.25,
                                    0.3,  0.35, 0.4,  0.45, 0.5};
};

/// One experiment: an env pair, an offline dataset recipe, a method, and an
/// evaluation sweep over perturbed targets, repeated over `seeds`.
struct ExperimentConfig {
  GridSpec grid = GridSpec::cliff_walk_5x5();
  double gamma = 0.95;
  SourceShift shift{0.2, 0.0};  // default single-shift source: slip 0.1 -> 0.3
  int dataset_size = 500;
  uint64_t dataset_seed = 0;
  double behavior_epsilon = 0.3;
  Method method = Method::hydro;
  TrainConfig train;
  EvalSpec eval;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir = "out";

  void validate() const;
};

/// JSON with schema_version 1; unknown keys anywhere are rejected by name.
/// The train block may not set gamma or seed (the env gamma and the run seed
/// own those).
ExperimentConfig load_experiment_config(const std::string& path);

struct SweepRow {
  std::string method;
  std::string param;
  double magnitude = 0.0;
  uint64_t seed = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  int episodes = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string csv_path;
};

/// Per seed: regenerate the dataset (dataset_seed + run seed), train the
/// configured method (or reuse a checkpoint whose fingerprint matches), and
/// evaluate the greedy policy on every perturbed target. Writes
/// sweep_<method>.csv plus one checkpoint per seed into output_dir.
SweepResult run_sweep(const ExperimentConfig& cfg);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
std::vector<SweepRow> load_sweep_csv(const std::string& path);

/// Mean over the perturbation grid of mean_return, one value per seed
/// (ascending seed order). Rows must belong to a single method.
std::vector<double> seed_averages(const std::vector<SweepRow>& rows);

struct ReportRow {
  std::string method;
  std::string param;
  double magnitude = 0.0;
  double mean_return = 0.0;       // mean over seeds of per-seed mean returns
  double std_across_seeds = 0.0;  // sample std over seeds, 0 for one seed
  int n_seeds = 0;
};

std::vector<ReportRow> make_report(const std::vector<SweepRow>& rows);
void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path);

/// Training-log CSV: iter, mean_psi_sampled, mean_psi_uniform_ref,
/// accept_rate, lambda_mean, eval_return_nominal, eval_return_worstcase.
void save_train_log_csv(const TrainLog& log, const std::string& path);

struct Checkpoint {
  std::string method;
  std::string fingerprint;  // hex hash of everything the run depends on
  int iteration = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> q_weights;  // row-major (action, state)
  std::vector<double> g_values;   // row-major (state, action)
  uint64_t update_checksum = 0;
  std::map<std::string, std::string> rng_state;

  QTable q_table() const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Hash of the experiment inputs that determine a trained model for one run
/// seed; a checkpoint is reused only when this matches.
std::string experiment_fingerprint(const ExperimentConfig& cfg, uint64_t run_seed);

}  // namespace hydro
