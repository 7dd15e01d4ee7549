#include "hydro/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace hydro {

namespace {

void check_sigma(double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0))
    throw std::invalid_argument("sigma must lie in [0, 1], got " + fmt_g17(sigma));
}

void check_batch(const DualTable& g, const SampleBatch& batch, std::span<const double> v) {
  if (v.size() != size_t(g.n_states()))
    throw std::invalid_argument("dual: value vector size mismatch");
  for (const BatchEntry& e : batch) {
    if (e.s < 0 || e.s >= g.n_states() || e.a < 0 || e.a >= g.n_actions() ||
        e.s_next < 0 || e.s_next >= g.n_states())
      throw std::invalid_argument("dual: batch entry out of range");
  }
}

}  // namespace

DualTable::DualTable(int n_states, int n_actions, double sigma, double gamma)
    : ns_(n_states), na_(n_actions) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("DualTable: empty shape");
  check_sigma(sigma);
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("DualTable: gamma must lie in (0, 1)");
  clamp_max_ = sigma > 0.0 ? 2.0 / (sigma * (1.0 - gamma))
                           : std::numeric_limits<double>::infinity();
  v_.assign(size_t(ns_) * na_, 0.0);
}

double dual_loss(const DualTable& g, const SampleBatch& batch,
                 std::span<const double> v, double sigma) {
  check_sigma(sigma);
  check_batch(g, batch, v);
  if (batch.empty()) throw std::invalid_argument("dual_loss: empty batch");
  double sum = 0.0;
  for (const BatchEntry& e : batch) {
    double gv = g.at(e.s, e.a);
    sum += std::max(gv - v[size_t(e.s_next)], 0.0) - (1.0 - sigma) * gv;
  }
  return sum / double(batch.size());
}

void dual_gradient_step(DualTable& g, const SampleBatch& batch,
                        std::span<const double> v, double sigma, double lr) {
  check_sigma(sigma);
  check_batch(g, batch, v);
  if (lr <= 0.0) throw std::invalid_argument("dual_gradient_step: lr must be positive");
  if (batch.empty()) return;

  // Mean subgradient per touched pair, then one clipped step.
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (const BatchEntry& e : batch) {
    double gv = g.at(e.s, e.a);
    double sub = (gv >= v[size_t(e.s_next)] ? 1.0 : 0.0) - (1.0 - sigma);
    auto& slot = acc[{e.s, e.a}];
    slot.first += sub;
    slot.second += 1;
  }
  for (const auto& [sa, sum_count] : acc) {
    double mean = sum_count.first / double(sum_count.second);
    double next = g.at(sa.first, sa.second) - lr * mean;
    g.at(sa.first, sa.second) = std::clamp(next, 0.0, g.clamp_max());
  }
}

double empirical_robust_backup(double r, int s_next, double g_value,
                               const QTable& q_target, double sigma, double gamma) {
  check_sigma(sigma);
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("empirical_robust_backup: gamma must lie in (0, 1)");
  if (s_next < 0 || s_next >= q_target.n_states)
    throw std::invalid_argument("empirical_robust_backup: s_next out of range");
  double vn = q_target.state_value(s_next);
  return r - gamma * (std::max(g_value - vn, 0.0) - g_value * (1.0 - sigma));
}

DualTable exact_dual_table(const TabularMDP& mdp, const QTable& q, double sigma) {
  if (q.n_states != mdp.n_states || q.n_actions != mdp.n_actions)
    throw std::invalid_argument("exact_dual_table: Q shape does not match model");
  check_sigma(sigma);

  std::vector<double> v = state_values(q);
  DualTable g(mdp.n_states, mdp.n_actions, sigma, mdp.gamma);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      auto p = mdp.row(s, a);
      // Candidate etas: support values of V(s'), the interval ends.
      std::vector<double> cand;
      cand.reserve(p.size() + 2);
      for (size_t sn = 0; sn < p.size(); ++sn)
        if (p[sn] > 0.0) cand.push_back(std::clamp(v[sn], 0.0, g.clamp_max()));
      cand.push_back(0.0);
      if (std::isfinite(g.clamp_max())) cand.push_back(g.clamp_max());
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

      double best_eta = 0.0;
      double best = std::numeric_limits<double>::infinity();
      for (double eta : cand) {
        double e = 0.0;
        for (size_t sn = 0; sn < p.size(); ++sn)
          e += p[sn] * std::max(eta - v[sn], 0.0);
        double j = e - eta * (1.0 - sigma);
        if (j < best) {
          best = j;
          best_eta = eta;
        }
      }
      g.at(s, a) = best_eta;
    }
  }
  return g;
}

}  // namespace hydro
