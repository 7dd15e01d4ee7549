#include "hydro/ensemble.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "hydro/rng.hpp"

namespace hydro {

EnsembleModel fit_ensemble(const Dataset& dataset, int n_states, int n_actions,
                           int ensemble_size, double lambda_prior, uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("fit_ensemble: empty dataset");
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("fit_ensemble: empty shape");
  if (ensemble_size < 2) throw std::invalid_argument("fit_ensemble: ensemble_size >= 2");
  if (lambda_prior < 0.0) throw std::invalid_argument("fit_ensemble: lambda_prior >= 0");
  for (const Transition& t : dataset)
    if (t.s < 0 || t.s >= n_states || t.a < 0 || t.a >= n_actions || t.s_next < 0 ||
        t.s_next >= n_states)
      throw std::invalid_argument("fit_ensemble: transition index out of range");

  EnsembleModel model;
  model.n_states = n_states;
  model.n_actions = n_actions;
  const size_t pairs = size_t(n_states) * n_actions;
  const double uniform = 1.0 / double(n_states);

  for (int m = 0; m < ensemble_size; ++m) {
    std::mt19937_64 rng = make_stream(seed, Stream::member, uint64_t(m));
    std::vector<int> counts(pairs * n_states, 0);
    std::vector<int> visits(pairs, 0);
    for (size_t i = 0; i < dataset.size(); ++i) {
      const Transition& t = dataset[uniform_index(rng, dataset.size())];
      size_t sa = size_t(t.s) * n_actions + t.a;
      counts[sa * n_states + t.s_next] += 1;
      visits[sa] += 1;
    }
    std::vector<double> kernel(pairs * n_states);
    for (size_t sa = 0; sa < pairs; ++sa) {
      if (visits[sa] == 0) {
        for (int sn = 0; sn < n_states; ++sn) kernel[sa * n_states + sn] = uniform;
        continue;
      }
      double denom = double(visits[sa]) + lambda_prior;
      for (int sn = 0; sn < n_states; ++sn)
        kernel[sa * n_states + sn] =
            (double(counts[sa * n_states + sn]) + lambda_prior * uniform) / denom;
    }
    model.member_kernels.push_back(std::move(kernel));
    model.member_visits.push_back(std::move(visits));
  }

  model.mean_kernel.assign(pairs * n_states, 0.0);
  for (const auto& k : model.member_kernels)
    for (size_t i = 0; i < k.size(); ++i) model.mean_kernel[i] += k[i];
  for (double& x : model.mean_kernel) x /= double(ensemble_size);
  return model;
}

double uncertainty(const EnsembleModel& model, int s, int a) {
  if (s < 0 || s >= model.n_states || a < 0 || a >= model.n_actions)
    throw std::invalid_argument("uncertainty: (s,a) out of range");
  const int e = model.ensemble_size();
  double worst = 0.0;
  for (int i = 0; i < e; ++i) {
    auto pi = model.member_row(i, s, a);
    for (int j = i + 1; j < e; ++j) {
      auto pj = model.member_row(j, s, a);
      double d2 = 0.0;
      for (size_t sn = 0; sn < pi.size(); ++sn) {
        double diff = pi[sn] - pj[sn];
        d2 += diff * diff;
      }
      worst = std::max(worst, std::sqrt(d2));
    }
  }
  return worst;
}

double compute_threshold(const EnsembleModel& model, const Dataset& dataset,
                         double beta, int h) {
  if (dataset.empty()) throw std::invalid_argument("compute_threshold: empty dataset");
  if (beta <= 0.0) throw std::invalid_argument("compute_threshold: beta positive");
  if (h < 1) throw std::invalid_argument("compute_threshold: h >= 1");

  std::set<std::pair<int, int>> seen;
  double max_u = 0.0;
  for (const Transition& t : dataset)
    if (seen.insert({t.s, t.a}).second) max_u = std::max(max_u, uncertainty(model, t.s, t.a));
  return max_u / (beta * double(h));
}

std::span<const double> mean_next_distribution(const EnsembleModel& model, int s, int a) {
  if (s < 0 || s >= model.n_states || a < 0 || a >= model.n_actions)
    throw std::invalid_argument("mean_next_distribution: (s,a) out of range");
  return {model.mean_kernel.data() + (size_t(s) * model.n_actions + a) * model.n_states,
          size_t(model.n_states)};
}

}  // namespace hydro
