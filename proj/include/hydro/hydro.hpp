#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hydro/dual.hpp"
#include "hydro/ensemble.hpp"
#include "hydro/envs.hpp"
#include "hydro/fitted.hpp"
#include "hydro/replay.hpp"
#include "hydro/types.hpp"

namespace hydro {

enum class GapMode {
  exact,   // expectation of the dual term under the mean model
  sample,  // one sampled next state from the mean model
};

/// Estimated discrepancy between the observed source backup and the
/// worst-case backup around the estimated nominal model.
struct GapEstimate {
  double lambda_hat = 0.0;   // |source_side + model_side - g(1-sigma)|, >= 0
  double source_side = 0.0;  // V(s'_src)
  double model_side = 0.0;   // (g - V)_+ term under the mean model
};

/// `mode` sample draws one next state from the mean model and needs `rng`.
GapEstimate gap_lambda_hat(const QTable& q, const DualTable& g, const EnsembleModel& model,
                           int s_src, int a_src, int s_next_src, double sigma,
                           GapMode mode = GapMode::exact, std::mt19937_64* rng = nullptr);

/// Same computation against precomputed state values V = max_a Q(s,a).
GapEstimate gap_from_values(std::span<const double> v, double g_sa,
                            const EnsembleModel& model, int s_src, int a_src,
                            int s_next_src, double sigma,
                            GapMode mode = GapMode::exact, std::mt19937_64* rng = nullptr);

/// psi = 1 / (1 + lambda_hat), in (0, 1], strictly decreasing.
double priority_score(double lambda_hat);

/// Inserts iff u <= epsilon_u, with initial priority computed from the
/// current Q and g. Returns the acceptance flag.
bool buffer_insert_filtered(PriorityBuffer& buffer, const Transition& t, double u,
                            double epsilon_u, const QTable& q, const DualTable& g,
                            const EnsembleModel& model, double sigma,
                            GapMode mode = GapMode::exact, std::mt19937_64* rng = nullptr);

/// Recomputes psi for the referenced entries against the current Q and g and
/// writes the new priorities back into the sum tree. Stale references are
/// skipped; the skip count is returned. `psi_out` / `lambda_out`, when given,
/// are filled aligned with `refs` (NaN on skipped slots).
size_t buffer_update_priorities(PriorityBuffer& buffer, std::span<const EntryRef> refs,
                                const QTable& q, const DualTable& g,
                                const EnsembleModel& model, double sigma,
                                GapMode mode = GapMode::exact,
                                std::mt19937_64* rng = nullptr,
                                std::vector<double>* psi_out = nullptr,
                                std::vector<double>* lambda_out = nullptr);

/// Indicator weights for the ceil(k * N) highest-psi batch positions; ties at
/// the cutoff admit the lower batch index first.
std::vector<double> topk_weights(std::span<const double> psi, double k_fraction);

struct HydroOptions {
  bool filter_enabled = true;    // false: epsilon_u = +inf, accept everything
  bool priority_enabled = true;  // false: uniform buffer draws
  GapMode gap_mode = GapMode::exact;
};

struct HydroResult {
  LinearQ q;
  DualTable g;
  TrainLog log;
  double epsilon_u = 0.0;    // +inf when the filter is disabled, NaN when h = 0
  double accept_rate = 0.0;  // accepted / attempted over the whole run
  size_t attempted = 0;
  size_t accepted = 0;
  size_t buffer_size = 0;
};

/// Hybrid training loop: per iteration, h epsilon-greedy source steps pass
/// the uncertainty filter into the priority buffer; a prioritized source
/// batch and a uniform target batch drive one dual step (target plus
/// model-augmented source pairs) and one mixed Q step with top-k source
/// weights. rollout_len = 0 disables every source mechanism and the loop
/// reproduces rfqi_train bit for bit; disabling filter and priority with
/// topk_fraction = 1 is the naive-merge baseline.
HydroResult hydro_train(Simulator& source_env, const Dataset& dataset_target,
                        const TrainConfig& cfg, const HydroOptions& opts = {},
                        const QTable* exact_q = nullptr,
                        const TabularMDP* eval_mdp = nullptr);

/// hydro_train with the filter and priority mechanisms off and every source
/// sample weighted 1 (the same code path, by construction).
HydroResult naive_merge_train(Simulator& source_env, const Dataset& dataset_target,
                              const TrainConfig& cfg, const QTable* exact_q = nullptr,
                              const TabularMDP* eval_mdp = nullptr);

}  // namespace hydro
