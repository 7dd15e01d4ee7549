#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hydro/rmdp.hpp"
#include "hydro/types.hpp"

namespace hydro {

/// Cliff-walk gridworld family. Cells are row-major (row * width + col); the
/// compiled model appends one absorbing fail state after the cells. Actions:
/// 0 = up, 1 = down, 2 = left, 3 = right.
struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<std::pair<int, int>> cliff;  // (row, col) cells that drop to fail
  std::pair<int, int> goal{0, 0};
  std::vector<double> start_dist;  // over cells, zero on cliff cells
  double slip_prob = 0.0;          // [0, 1)
  std::vector<double> wind_push;   // per column, [0, 1): upward push probability
  double living_reward = 0.0;      // per step on safe non-goal cells, [0, 1)

  int cell(int row, int col) const { return row * width + col; }
  bool is_cliff(int row, int col) const;
  void validate() const;

  /// Default benchmark: 5x5 grid, cliff along the bottom row between start
  /// corner and goal, slip 0.1, no wind, uniform starts over safe non-goal
  /// cells. Robust and nominal optimal policies genuinely differ on it.
  static GridSpec cliff_walk_5x5();
};

/// Compile to an explicit model. Slip: intended direction with probability
/// 1 - slip, each perpendicular with slip/2. Wind (composed after slip)
/// pushes the post-slip cell one row up with the post-slip column's
/// probability. Moves off the grid clamp; entering a cliff cell transitions
/// to the fail state. Goal is absorbing with reward 1 per step; safe non-goal
/// cells pay living_reward, the fail state pays 0.
TabularMDP compile_grid(const GridSpec& spec, double gamma);

struct SourceShift {
  double slip_delta = 0.0;
  double wind_delta = 0.0;  // added to every column
};

/// Target/source pair sharing rewards and start distribution; only the
/// kernel differs.
std::pair<TabularMDP, TabularMDP> make_env_pair(const GridSpec& base, double gamma,
                                                const SourceShift& shift);

enum class PerturbParam { slip_prob, wind_push };

struct PerturbationSpec {
  PerturbParam param = PerturbParam::slip_prob;
  std::vector<double> magnitudes;  // absolute values substituted into the spec
};

/// One compiled model per magnitude; magnitude equal to the base value
/// reproduces the base model.
std::vector<TabularMDP> perturbation_sweep_envs(const GridSpec& base, double gamma,
                                                const PerturbationSpec& pspec);

/// Seeded sampler over a compiled model. Trajectories are distributed exactly
/// per the kernel rows.
class Simulator {
 public:
  Simulator(const GridSpec& spec, double gamma, uint64_t seed);
  Simulator(TabularMDP mdp, uint64_t seed);

  const TabularMDP& mdp() const { return mdp_; }
  int state() const { return state_; }
  void set_state(int s);
  bool absorbing(int s) const;

  int reset();  // draws from init_dist

  struct StepResult {
    double reward = 0.0;
    int next = 0;
  };
  StepResult step(int action);

 private:
  TabularMDP mdp_;
  std::mt19937_64 rng_;
  int state_ = 0;
};

/// Episodic rollouts with an epsilon-greedy behavior policy; episodes reset
/// through init_dist at the 200-step horizon. `done` marks the final
/// transition of an episode.
Dataset generate_offline_dataset(const TabularMDP& mdp, const PolicyTable& behavior,
                                 double epsilon, int n, uint64_t seed,
                                 Domain domain = Domain::target);

void save_dataset_csv(const Dataset& data, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

GridSpec load_grid_json(const std::string& path);
void save_grid_json(const GridSpec& spec, const std::string& path);

}  // namespace hydro
