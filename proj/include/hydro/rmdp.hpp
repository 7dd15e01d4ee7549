#pragma once

#include <span>
#include <string>
#include <vector>

#include "hydro/types.hpp"

namespace hydro {

/// Finite MDP with explicit transition kernel. Rewards live in [0,1]; the
/// optional fail state must be absorbing with zero reward.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  int fail_state = -1;  // -1 when the model declares none
  std::vector<double> init_dist;  // over states
  std::vector<double> reward;     // row-major (s, a)
  std::vector<double> kernel;     // row-major (s, a, s')

  double r(int s, int a) const { return reward[size_t(s) * n_actions + a]; }
  double& r(int s, int a) { return reward[size_t(s) * n_actions + a]; }

  std::span<const double> row(int s, int a) const {
    return {kernel.data() + (size_t(s) * n_actions + a) * n_states, size_t(n_states)};
  }
  std::span<double> row(int s, int a) {
    return {kernel.data() + (size_t(s) * n_actions + a) * n_states, size_t(n_states)};
  }

  double max_abs_reward() const;

  /// Throws std::invalid_argument naming the offending state/action when any
  /// structural invariant fails (row sums, ranges, fail-state shape).
  void validate() const;
};

/// Exact minimizer of E_q[v] over the total-variation ball of radius sigma
/// around p, intersected with the simplex.
struct WorstCaseResult {
  double value = 0.0;
  std::vector<double> worst_dist;
};

/// Greedy mass transport: move up to sigma total mass from the highest-value
/// states onto the argmin-value state. Ties: argmin and the descending visit
/// order both resolve to the lowest state index.
WorstCaseResult worst_case_expectation_oracle(std::span<const double> p,
                                              std::span<const double> v,
                                              double sigma);

/// Dual evaluation of the same quantity:
///   sup over the ball of -E[v] = -inf_eta { E_p[(eta - v)_+] +
///   sigma*(eta - min v)_+ - eta },  eta in [0, 2/(sigma*(1-gamma))].
/// Returns the worst-case expectation (equal to the oracle value). sigma = 0
/// short-circuits to the nominal expectation.
double dual_form_worst_case(std::span<const double> p, std::span<const double> v,
                            double sigma, double gamma);

/// Simplified dual under the fail-state assumption (min v = 0):
///   -inf_eta { E_p[(eta - v)_+] - eta*(1 - sigma) }.
/// Throws FailStateError when min v > 1e-9.
double fail_state_dual(std::span<const double> p, std::span<const double> v,
                       double sigma, double gamma);

enum class WorstCase { dual, oracle };

/// One application of the robust Bellman operator:
///   (TQ)(s,a) = r(s,a) + gamma * inf_q E_q[max_a' Q(., a')].
QTable robust_bellman_apply(const QTable& q, const TabularMDP& mdp, double sigma,
                            WorstCase method = WorstCase::dual);

struct SolveResult {
  QTable q;
  PolicyTable policy;
  int iterations = 0;
  bool converged = false;
};

/// Value iteration with the robust operator from Q = 0 until the sup-norm
/// update drops below tol. Non-convergence is reported, not thrown.
SolveResult robust_value_iteration(const TabularMDP& mdp, double sigma,
                                   double tol = 1e-10, int max_iters = 100000);

struct EvalResult {
  std::vector<double> values;
  int iterations = 0;
  bool converged = false;
};

/// Fixed point of V(s) = r(s,pi(s)) + gamma * inf_q E_q[V]; sigma = 0 gives
/// plain policy evaluation.
EvalResult robust_policy_evaluation(const PolicyTable& pi, const TabularMDP& mdp,
                                    double sigma, double tol = 1e-10,
                                    int max_iters = 100000);

/// State-to-state kernel achieving the row-wise worst case of the robust
/// value of pi; rows are oracle minimizers at (s, pi(s)).
std::vector<double> worst_case_kernel(const PolicyTable& pi, const TabularMDP& mdp,
                                      double sigma, double tol = 1e-10,
                                      int max_iters = 100000);

/// Nominal state-to-state kernel induced by a deterministic policy.
std::vector<double> policy_kernel(const TabularMDP& mdp, const PolicyTable& pi);

/// Normalized discounted occupancy d(s,a) of pi under `kernel_ss` (a
/// state-to-state kernel, e.g. from worst_case_kernel or policy_kernel):
///   d_s = (1-gamma) d0 + gamma * P^T d_s, solved exactly; d(s,a) puts the
/// state mass on a = pi(s). Output sums to one.
std::vector<double> occupancy_measure(const PolicyTable& pi,
                                      std::span<const double> kernel_ss,
                                      std::span<const double> init_dist,
                                      double gamma, int n_actions);

/// Model file round-trip; floats are written with 17 significant digits so
/// values survive exactly.
TabularMDP load_mdp_json(const std::string& path);
void save_mdp_json(const TabularMDP& mdp, const std::string& path);

}  // namespace hydro
