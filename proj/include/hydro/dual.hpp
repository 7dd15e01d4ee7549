#pragma once

#include <span>
#include <vector>

#include "hydro/rmdp.hpp"
#include "hydro/types.hpp"

namespace hydro {

/// One sample inside a training batch. `weight` carries the top-k indicator
/// for source samples; target samples keep weight 1.
struct BatchEntry {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  Domain domain = Domain::target;
  double weight = 1.0;
};

using SampleBatch = std::vector<BatchEntry>;

/// Per-(s,a) dual variables eta, clipped into [0, 2/(sigma*(1-gamma))] after
/// every update (no upper clip when sigma = 0).
class DualTable {
 public:
  DualTable(int n_states, int n_actions, double sigma, double gamma);

  int n_states() const { return ns_; }
  int n_actions() const { return na_; }
  double clamp_max() const { return clamp_max_; }

  double at(int s, int a) const { return v_[size_t(s) * na_ + a]; }
  double& at(int s, int a) { return v_[size_t(s) * na_ + a]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

 private:
  int ns_;
  int na_;
  double clamp_max_;
  std::vector<double> v_;
};

/// Mean over the batch of (g(s,a) - V(s'))_+ - (1 - sigma) * g(s,a).
double dual_loss(const DualTable& g, const SampleBatch& batch,
                 std::span<const double> v, double sigma);

/// One subgradient step per (s,a): the mean over that pair's batch samples of
/// 1{g(s,a) >= V(s')} - (1 - sigma), using the right subgradient at the kink.
/// Updated entries are clipped back into the admissible interval.
void dual_gradient_step(DualTable& g, const SampleBatch& batch,
                        std::span<const double> v, double sigma, double lr);

/// Single-sample robust backup
///   r - gamma * ((g - V(s'))_+ - g * (1 - sigma)),  V from q_target.
double empirical_robust_backup(double r, int s_next, double g_value,
                               const QTable& q_target, double sigma, double gamma);

/// Exact per-(s,a) minimizer of E_{s'~kernel}[(eta - V(s'))_+] - eta(1-sigma)
/// over the clipped interval; ties resolve to the lowest eta. This is the
/// (1-sigma)-quantile of V(s') under the nominal row.
DualTable exact_dual_table(const TabularMDP& mdp, const QTable& q, double sigma);

}  // namespace hydro
