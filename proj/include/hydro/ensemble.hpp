#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hydro/types.hpp"

namespace hydro {

/// Bootstrap ensemble of tabular transition models. Each member is a
/// count-based MLE with additive smoothing fit on an independent
/// with-replacement resample of the dataset; pairs a member never saw fall
/// back to the uniform prior row.
struct EnsembleModel {
  int n_states = 0;
  int n_actions = 0;
  // member_kernels[m] is row-major (s, a, s'); visits[m] counts per (s, a).
  std::vector<std::vector<double>> member_kernels;
  std::vector<std::vector<int>> member_visits;
  std::vector<double> mean_kernel;  // arithmetic mean over members

  int ensemble_size() const { return int(member_kernels.size()); }
  std::span<const double> member_row(int m, int s, int a) const {
    return {member_kernels[size_t(m)].data() + (size_t(s) * n_actions + a) * n_states,
            size_t(n_states)};
  }
};

EnsembleModel fit_ensemble(const Dataset& dataset, int n_states, int n_actions,
                           int ensemble_size, double lambda_prior, uint64_t seed);

/// Epistemic disagreement: the largest pairwise Euclidean distance between
/// member next-state distributions at (s, a). Zero iff all members agree.
double uncertainty(const EnsembleModel& model, int s, int a);

/// Filter threshold epsilon_u = max_{(s,a) in dataset} u(s,a) / (beta * h),
/// the max running over the distinct pairs the dataset visits.
double compute_threshold(const EnsembleModel& model, const Dataset& dataset,
                         double beta, int h);

std::span<const double> mean_next_distribution(const EnsembleModel& model, int s, int a);

}  // namespace hydro
