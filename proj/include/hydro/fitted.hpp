#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hydro/dual.hpp"
#include "hydro/rmdp.hpp"
#include "hydro/types.hpp"

namespace hydro {

/// Linear action-value approximator over fixed state features,
/// Q(s,a) = w_a . phi(s). One-hot features reproduce tabular learning
/// exactly; gradients are exact, no autodiff.
class LinearQ {
 public:
  static LinearQ one_hot(int n_states, int n_actions);
  static LinearQ with_features(Eigen::MatrixXd features, int n_actions);

  int n_states() const { return int(features_.rows()); }
  int n_actions() const { return int(weights_.rows()); }
  int dim() const { return int(features_.cols()); }
  bool one_hot_features() const { return one_hot_; }

  double value(int s, int a) const { return weights_.row(a).dot(features_.row(s)); }
  QTable q_table() const;

  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& weights() { return weights_; }

  /// Batched gradient step on a sum of squared-error terms. Residuals are
  /// evaluated against the pre-step weights; `apply_step` commits once.
  void begin_step();
  void accumulate(const SampleBatch& batch, std::span<const double> targets,
                  std::span<const double> sample_weights, double coeff);
  void apply_step(double lr);

  /// Exact least-squares assignment per touched (s,a); one-hot features only.
  void regress_exact(const SampleBatch& batch, std::span<const double> targets);

 private:
  LinearQ() = default;
  Eigen::MatrixXd features_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd grad_;
  bool one_hot_ = false;
  bool step_open_ = false;
};

struct TrainConfig {
  double sigma = 0.2;
  double gamma = 0.95;
  double lr_q = 0.3;
  double lr_g = 0.05;
  int batch_size = 64;
  int iterations = 4000;
  int target_sync_period = 25;
  double kappa = 0.5;          // mixing weight for the kappa-weighted update
  double topk_fraction = 0.25; // fraction of source samples given weight 1
  int rollout_len = 5;         // h; 0 disables source interaction entirely
  double beta = 1.0;           // filter coefficient, alpha = beta * h
  int ensemble_size = 7;
  double lambda_prior = 1.0;
  double rollout_epsilon = 0.1;
  int rollout_horizon = 200;
  size_t buffer_capacity = 100000;
  int dual_steps_per_q = 1;
  bool full_regression = false;
  int log_period = 20;
  // Gap scores start degenerate (Q = 0 forces lambda_hat = 0, psi = 1 for
  // every entry), so priority statistics only mean something once Q has grown.
  int warmup_iters = 1000;
  uint64_t seed = 0;

  void validate() const;
};

/// Non-robust backup r + gamma * max_a Q(s',a).
double fqi_target(double r, int s_next, const QTable& q_target, double gamma);

struct TrainLogRow {
  int iter = 0;
  double mean_psi_sampled = std::numeric_limits<double>::quiet_NaN();
  double mean_psi_uniform_ref = std::numeric_limits<double>::quiet_NaN();
  double accept_rate = std::numeric_limits<double>::quiet_NaN();
  double lambda_mean = std::numeric_limits<double>::quiet_NaN();
  double eval_return_nominal = std::numeric_limits<double>::quiet_NaN();
  double eval_return_worstcase = std::numeric_limits<double>::quiet_NaN();
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  uint64_t checksum = 0;  // chained over (Q, g) bytes after every update
  std::vector<double> supnorm_to_exact;  // filled when an exact Q* is supplied
  std::map<std::string, std::string> rng_state;  // final stream states
};

struct FittedResult {
  LinearQ q;
  DualTable g;
  TrainLog log;
};

/// Offline robust fitted Q-iteration on a target-domain dataset. Rejects
/// source-tagged samples. `eval_mdp` enables exact policy-value snapshots in
/// the log; `exact_q` enables the per-iteration sup-norm trace.
FittedResult rfqi_train(const Dataset& dataset, const TrainConfig& cfg,
                        const QTable* exact_q = nullptr,
                        const TabularMDP* eval_mdp = nullptr);

/// Plain fitted Q-iteration (non-robust backups), same loop and streams.
FittedResult fqi_train(const Dataset& dataset, const TrainConfig& cfg,
                       const QTable* exact_q = nullptr,
                       const TabularMDP* eval_mdp = nullptr);

enum class MixMode {
  sum,    // target and source terms both enter with weight 1
  kappa,  // target term scaled by kappa, source term by (1 - kappa)
};

/// One gradient step on the mixed objective: target samples regress to the
/// empirical robust backup, source samples to the non-robust backup, source
/// term averaged over the full drawn batch (zero-weight samples contribute
/// zero to the numerator only).
void mixed_q_step(LinearQ& q, const DualTable& g, const QTable& q_target,
                  const SampleBatch& target_batch, const SampleBatch& source_batch,
                  std::span<const double> source_weights, const TrainConfig& cfg,
                  MixMode mode = MixMode::sum);

struct KappaIterRow {
  double xi = 0.0;     // ||T^{sigma,g} Q_k - T^sigma Q_k||_inf
  double zeta = 0.0;   // ||T_src Q_k - T^sigma Q_k||_inf
  double bound = 0.0;  // gamma^{k+1} r_max/(1-gamma) + sum_i gamma^{k-i}(kappa xi_i + (1-kappa) zeta_i)
  double gap = 0.0;    // ||Q^{*,sigma} - Q_{k+1}||_inf
};

struct KappaDiagnostics {
  std::vector<KappaIterRow> rows;
  std::vector<QTable> iterates;  // Q_1 .. Q_iters
  QTable q_star;
};

/// Exact-expectation mixed iteration Q_{k+1} = kappa T^{sigma,g_k} Q_k +
/// (1-kappa) T_src Q_k with g_k the exact dual table, tracking the
/// per-iterate contraction bound against the true robust fixed point.
KappaDiagnostics kappa_mixed_iteration(const TabularMDP& target, const TabularMDP& source,
                                       double sigma, double kappa, int iters);

}  // namespace hydro
