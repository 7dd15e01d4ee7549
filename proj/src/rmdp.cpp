#include "hydro/rmdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace hydro {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kDistSumTol = 1e-9;

void check_distribution(std::span<const double> p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < -1e-12)
      throw std::invalid_argument(std::string(what) + ": negative or non-finite mass");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kDistSumTol)
    throw std::invalid_argument(std::string(what) + ": mass sums to " + fmt_g17(sum));
}

void check_values(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

void check_sigma(double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0))
    throw std::invalid_argument("sigma must lie in [0, 1], got " + fmt_g17(sigma));
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1), got " + fmt_g17(gamma));
}

double dot(std::span<const double> p, std::span<const double> v) {
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += p[i] * v[i];
  return s;
}

/// Minimum of a convex piecewise-linear dual objective over [0, eta_max].
/// Breakpoints are the entries of v; ties resolve to the lowest eta.
template <typename Objective>
double minimize_over_breakpoints(std::span<const double> v, double eta_max,
                                 Objective&& obj) {
  std::vector<double> cand;
  cand.reserve(v.size() + 2);
  for (double x : v) cand.push_back(std::clamp(x, 0.0, eta_max));
  cand.push_back(0.0);
  if (std::isfinite(eta_max)) cand.push_back(eta_max);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  double best = std::numeric_limits<double>::infinity();
  for (double eta : cand) {
    double j = obj(eta);
    if (j < best) best = j;
  }
  return best;
}

}  // namespace

double TabularMDP::max_abs_reward() const {
  double m = 0.0;
  for (double x : reward) m = std::max(m, std::abs(x));
  return m;
}

void TabularMDP::validate() const {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("model must have at least one state and action");
  check_gamma(gamma);
  if (init_dist.size() != size_t(n_states) ||
      reward.size() != size_t(n_states) * n_actions ||
      kernel.size() != size_t(n_states) * n_actions * n_states)
    throw std::invalid_argument("model arrays do not match n_states/n_actions");
  if (fail_state < -1 || fail_state >= n_states)
    throw std::invalid_argument("fail_state out of range");

  check_distribution(init_dist, "init_dist");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double rv = r(s, a);
      if (!(rv >= 0.0 && rv <= 1.0))
        throw std::invalid_argument("reward out of [0,1] at state " + std::to_string(s) +
                                    " action " + std::to_string(a));
      double sum = 0.0;
      for (double p : row(s, a)) {
        if (!std::isfinite(p) || p < -1e-15)
          throw std::invalid_argument("negative kernel entry at state " + std::to_string(s) +
                                      " action " + std::to_string(a));
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTol)
        throw std::invalid_argument("kernel row sums to " + fmt_g17(sum) + " at state " +
                                    std::to_string(s) + " action " + std::to_string(a));
    }
  }
  if (fail_state >= 0) {
    for (int a = 0; a < n_actions; ++a) {
      if (std::abs(r(fail_state, a)) > kRowSumTol)
        throw std::invalid_argument("fail state must have zero reward");
      auto p = row(fail_state, a);
      for (int sn = 0; sn < n_states; ++sn) {
        double want = (sn == fail_state) ? 1.0 : 0.0;
        if (std::abs(p[size_t(sn)] - want) > kRowSumTol)
          throw std::invalid_argument("fail state must be absorbing");
      }
    }
  }
}

WorstCaseResult worst_case_expectation_oracle(std::span<const double> p,
                                              std::span<const double> v,
                                              double sigma) {
  if (p.size() != v.size()) throw std::invalid_argument("oracle: p/v size mismatch");
  check_distribution(p, "oracle p");
  check_values(v, "oracle v");
  check_sigma(sigma);

  const size_t n = p.size();
  size_t m = 0;
  for (size_t i = 1; i < n; ++i)
    if (v[i] < v[m]) m = i;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] > v[b]; });

  WorstCaseResult out;
  out.worst_dist.assign(p.begin(), p.end());
  double budget = sigma;
  for (size_t i : order) {
    if (i == m || budget <= 0.0) continue;
    double delta = std::min(out.worst_dist[i], budget);
    out.worst_dist[i] -= delta;
    out.worst_dist[m] += delta;
    budget -= delta;
  }
  out.value = dot(out.worst_dist, v);

  // Feasibility is asserted on every call: result must stay a distribution
  // inside the requested total-variation ball.
  double sum = 0.0, tv = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (out.worst_dist[i] < -1e-12) throw std::logic_error("oracle produced negative mass");
    sum += out.worst_dist[i];
    tv += std::abs(out.worst_dist[i] - p[i]);
  }
  if (std::abs(sum - 1.0) > kDistSumTol + kRowSumTol)
    throw std::logic_error("oracle result does not sum to one");
  if (0.5 * tv > sigma + 1e-12) throw std::logic_error("oracle left the TV ball");
  return out;
}

double dual_form_worst_case(std::span<const double> p, std::span<const double> v,
                            double sigma, double gamma) {
  if (p.size() != v.size()) throw std::invalid_argument("dual: p/v size mismatch");
  check_distribution(p, "dual p");
  check_values(v, "dual v");
  check_sigma(sigma);
  check_gamma(gamma);

  if (sigma == 0.0) return dot(p, v);

  double vmin = *std::min_element(v.begin(), v.end());
  double eta_max = 2.0 / (sigma * (1.0 - gamma));
  double best = minimize_over_breakpoints(v, eta_max, [&](double eta) {
    double e = 0.0;
    for (size_t i = 0; i < p.size(); ++i) e += p[i] * std::max(eta - v[i], 0.0);
    return e + sigma * std::max(eta - vmin, 0.0) - eta;
  });
  return -best;
}

double fail_state_dual(std::span<const double> p, std::span<const double> v,
                       double sigma, double gamma) {
  if (p.size() != v.size()) throw std::invalid_argument("dual: p/v size mismatch");
  check_distribution(p, "dual p");
  check_values(v, "dual v");
  check_sigma(sigma);
  check_gamma(gamma);

  double vmin = *std::min_element(v.begin(), v.end());
  if (vmin > 1e-9)
    throw FailStateError("fail-state assumption violated: min value is " + fmt_g17(vmin));

  if (sigma == 0.0) return dot(p, v);

  double eta_max = 2.0 / (sigma * (1.0 - gamma));
  double best = minimize_over_breakpoints(v, eta_max, [&](double eta) {
    double e = 0.0;
    for (size_t i = 0; i < p.size(); ++i) e += p[i] * std::max(eta - v[i], 0.0);
    return e - eta * (1.0 - sigma);
  });
  return -best;
}

QTable robust_bellman_apply(const QTable& q, const TabularMDP& mdp, double sigma,
                            WorstCase method) {
  if (q.n_states != mdp.n_states || q.n_actions != mdp.n_actions)
    throw std::invalid_argument("robust_bellman_apply: Q shape does not match model");
  check_sigma(sigma);

  std::vector<double> v = state_values(q);
  QTable out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double wc = method == WorstCase::dual
                      ? dual_form_worst_case(mdp.row(s, a), v, sigma, mdp.gamma)
                      : worst_case_expectation_oracle(mdp.row(s, a), v, sigma).value;
      out.at(s, a) = mdp.r(s, a) + mdp.gamma * wc;
    }
  }
  return out;
}

SolveResult robust_value_iteration(const TabularMDP& mdp, double sigma, double tol,
                                   int max_iters) {
  mdp.validate();
  if (tol <= 0.0 || max_iters < 1)
    throw std::invalid_argument("robust_value_iteration: tol and max_iters must be positive");

  SolveResult res;
  res.q = QTable(mdp.n_states, mdp.n_actions);
  for (int k = 0; k < max_iters; ++k) {
    QTable next = robust_bellman_apply(res.q, mdp, sigma);
    double delta = 0.0;
    for (size_t i = 0; i < next.v.size(); ++i)
      delta = std::max(delta, std::abs(next.v[i] - res.q.v[i]));
    res.q = std::move(next);
    res.iterations = k + 1;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }
  res.policy = greedy_policy(res.q);
  return res;
}

EvalResult robust_policy_evaluation(const PolicyTable& pi, const TabularMDP& mdp,
                                    double sigma, double tol, int max_iters) {
  if (pi.n_states() != size_t(mdp.n_states))
    throw std::invalid_argument("robust_policy_evaluation: policy size mismatch");
  for (int s = 0; s < mdp.n_states; ++s)
    if (pi(s) < 0 || pi(s) >= mdp.n_actions)
      throw std::invalid_argument("robust_policy_evaluation: action out of range");
  check_sigma(sigma);
  if (tol <= 0.0 || max_iters < 1)
    throw std::invalid_argument("robust_policy_evaluation: tol and max_iters must be positive");

  EvalResult res;
  res.values.assign(size_t(mdp.n_states), 0.0);
  std::vector<double> next(size_t(mdp.n_states));
  for (int k = 0; k < max_iters; ++k) {
    double delta = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double wc = dual_form_worst_case(mdp.row(s, pi(s)), res.values, sigma, mdp.gamma);
      next[size_t(s)] = mdp.r(s, pi(s)) + mdp.gamma * wc;
      delta = std::max(delta, std::abs(next[size_t(s)] - res.values[size_t(s)]));
    }
    res.values.swap(next);
    res.iterations = k + 1;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::vector<double> worst_case_kernel(const PolicyTable& pi, const TabularMDP& mdp,
                                      double sigma, double tol, int max_iters) {
  EvalResult ev = robust_policy_evaluation(pi, mdp, sigma, tol, max_iters);
  std::vector<double> out(size_t(mdp.n_states) * mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    WorstCaseResult wc = worst_case_expectation_oracle(mdp.row(s, pi(s)), ev.values, sigma);
    std::copy(wc.worst_dist.begin(), wc.worst_dist.end(),
              out.begin() + size_t(s) * mdp.n_states);
  }
  return out;
}

std::vector<double> policy_kernel(const TabularMDP& mdp, const PolicyTable& pi) {
  if (pi.n_states() != size_t(mdp.n_states))
    throw std::invalid_argument("policy_kernel: policy size mismatch");
  std::vector<double> out(size_t(mdp.n_states) * mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    auto r = mdp.row(s, pi(s));
    std::copy(r.begin(), r.end(), out.begin() + size_t(s) * mdp.n_states);
  }
  return out;
}

std::vector<double> occupancy_measure(const PolicyTable& pi,
                                      std::span<const double> kernel_ss,
                                      std::span<const double> init_dist,
                                      double gamma, int n_actions) {
  const int n = int(init_dist.size());
  if (n < 1 || kernel_ss.size() != size_t(n) * n)
    throw std::invalid_argument("occupancy_measure: kernel/init size mismatch");
  if (pi.n_states() != size_t(n))
    throw std::invalid_argument("occupancy_measure: policy size mismatch");
  check_gamma(gamma);
  check_distribution(init_dist, "occupancy init_dist");
  for (int s = 0; s < n; ++s) {
    double sum = 0.0;
    for (int t = 0; t < n; ++t) sum += kernel_ss[size_t(s) * n + t];
    if (std::abs(sum - 1.0) > kDistSumTol)
      throw std::invalid_argument("occupancy_measure: kernel row " + std::to_string(s) +
                                  " sums to " + fmt_g17(sum));
  }

  // Solve (I - gamma P^T) d = (1-gamma) d0 exactly.
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < n; ++t) A(t, s) -= gamma * kernel_ss[size_t(s) * n + t];
  Eigen::VectorXd b(n);
  for (int s = 0; s < n; ++s) b(s) = (1.0 - gamma) * init_dist[size_t(s)];
  Eigen::VectorXd d = A.partialPivLu().solve(b);

  std::vector<double> out(size_t(n) * n_actions, 0.0);
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    double ds = d(s);
    if (ds < 0.0) {
      if (ds < -1e-10) throw std::logic_error("occupancy_measure: negative occupancy");
      ds = 0.0;
    }
    out[size_t(s) * n_actions + pi(s)] = ds;
    total += ds;
  }
  if (std::abs(total - 1.0) > kDistSumTol)
    throw std::logic_error("occupancy_measure: mass sums to " + fmt_g17(total));
  return out;
}

namespace {

void write_double_array(std::ostream& os, const double* data, size_t n) {
  os << '[';
  for (size_t i = 0; i < n; ++i) {
    if (i) os << ", ";
    os << fmt_g17(data[i]);
  }
  os << ']';
}

}  // namespace

void save_mdp_json(const TabularMDP& mdp, const std::string& path) {
  mdp.validate();
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "{\n";
  os << "  \"n_states\": " << mdp.n_states << ",\n";
  os << "  \"n_actions\": " << mdp.n_actions << ",\n";
  os << "  \"gamma\": " << fmt_g17(mdp.gamma) << ",\n";
  os << "  \"fail_state\": " << mdp.fail_state << ",\n";
  os << "  \"init_dist\": ";
  write_double_array(os, mdp.init_dist.data(), mdp.init_dist.size());
  os << ",\n  \"reward\": [\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    os << "    ";
    write_double_array(os, mdp.reward.data() + size_t(s) * mdp.n_actions,
                       size_t(mdp.n_actions));
    os << (s + 1 < mdp.n_states ? ",\n" : "\n");
  }
  os << "  ],\n  \"kernel\": [\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    os << "    [\n";
    for (int a = 0; a < mdp.n_actions; ++a) {
      os << "      ";
      auto r = mdp.row(s, a);
      write_double_array(os, r.data(), r.size());
      os << (a + 1 < mdp.n_actions ? ",\n" : "\n");
    }
    os << (s + 1 < mdp.n_states ? "    ],\n" : "    ]\n");
  }
  os << "  ]\n}\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

TabularMDP load_mdp_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }

  static const char* keys[] = {"n_states", "n_actions", "gamma",  "fail_state",
                               "init_dist", "reward",   "kernel"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known |= it.key() == k;
    if (!known) throw std::invalid_argument(path + ": unknown key \"" + it.key() + "\"");
  }
  for (const char* k : keys)
    if (!j.contains(k)) throw std::invalid_argument(path + ": missing key \"" + std::string(k) + "\"");

  TabularMDP m;
  m.n_states = j["n_states"].get<int>();
  m.n_actions = j["n_actions"].get<int>();
  m.gamma = j["gamma"].get<double>();
  m.fail_state = j["fail_state"].get<int>();
  m.init_dist = j["init_dist"].get<std::vector<double>>();
  const auto& rw = j["reward"];
  const auto& kn = j["kernel"];
  if (!rw.is_array() || int(rw.size()) != m.n_states)
    throw std::invalid_argument(path + ": reward must have one row per state");
  if (!kn.is_array() || int(kn.size()) != m.n_states)
    throw std::invalid_argument(path + ": kernel must have one block per state");
  for (const auto& row : rw) {
    auto vals = row.get<std::vector<double>>();
    if (int(vals.size()) != m.n_actions)
      throw std::invalid_argument(path + ": reward row width mismatch");
    m.reward.insert(m.reward.end(), vals.begin(), vals.end());
  }
  for (const auto& block : kn) {
    if (!block.is_array() || int(block.size()) != m.n_actions)
      throw std::invalid_argument(path + ": kernel block height mismatch");
    for (const auto& row : block) {
      auto vals = row.get<std::vector<double>>();
      if (int(vals.size()) != m.n_states)
        throw std::invalid_argument(path + ": kernel row width mismatch");
      m.kernel.insert(m.kernel.end(), vals.begin(), vals.end());
    }
  }
  m.validate();
  return m;
}

}  // namespace hydro
