#include "hydro/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "hydro/dual.hpp"
#include "hydro/rng.hpp"

namespace hydro {

namespace {

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

double sample_var(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / double(xs.size() - 1);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_keys(const nlohmann::json& j, const std::string& where,
                  std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known |= it.key() == k;
    if (!known) throw std::invalid_argument(where + ": unknown key \"" + it.key() + "\"");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

EvalStats evaluate_policy(const QTable& q, const TabularMDP& mdp, int episodes,
                          int horizon, uint64_t seed) {
  mdp.validate();
  if (q.n_states != mdp.n_states || q.n_actions != mdp.n_actions)
    throw std::invalid_argument("evaluate_policy: Q shape mismatch");
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes >= 1");
  if (horizon < 0) throw std::invalid_argument("evaluate_policy: horizon >= 0");

  PolicyTable pi = greedy_policy(q);
  std::mt19937_64 rng = make_stream(seed, Stream::eval);
  std::vector<double> returns(size_t(episodes), 0.0);
  for (int e = 0; e < episodes; ++e) {
    int s = sample_categorical(mdp.init_dist, rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      int a = pi(s);
      total += mdp.r(s, a);
      s = sample_categorical(mdp.row(s, a), rng);
    }
    returns[size_t(e)] = total;
  }
  double m = mean_of(returns);
  return EvalStats{m, std::sqrt(sample_var(returns, m)), episodes, horizon};
}

EvalStats evaluate_policy(const QTable& q, Simulator& sim, int episodes, int horizon) {
  const TabularMDP& mdp = sim.mdp();
  if (q.n_states != mdp.n_states || q.n_actions != mdp.n_actions)
    throw std::invalid_argument("evaluate_policy: Q shape mismatch");
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes >= 1");
  if (horizon < 0) throw std::invalid_argument("evaluate_policy: horizon >= 0");

  PolicyTable pi = greedy_policy(q);
  std::vector<double> returns(size_t(episodes), 0.0);
  for (int e = 0; e < episodes; ++e) {
    sim.reset();
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) total += sim.step(pi(sim.state())).reward;
    returns[size_t(e)] = total;
  }
  double m = mean_of(returns);
  return EvalStats{m, std::sqrt(sample_var(returns, m)), episodes, horizon};
}

double exact_policy_return(const PolicyTable& pi, const TabularMDP& mdp, double sigma) {
  EvalResult res = robust_policy_evaluation(pi, mdp, sigma);
  return dot(mdp.init_dist, res.values);
}

ZTestResult ztest_compare(std::span<const double> a, std::span<const double> b,
                          bool allow_small_n) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("ztest: need at least two observations per sample");
  if (!allow_small_n && (a.size() < 30 || b.size() < 30))
    throw std::invalid_argument(
        "ztest: the normal approximation needs n >= 30 per sample; report raw means "
        "or opt in with allow_small_n");
  double ma = mean_of(a), mb = mean_of(b);
  double va = sample_var(a, ma), vb = sample_var(b, mb);
  double z = (ma - mb) /
             std::sqrt(va / double(a.size()) + vb / double(b.size()) + 1e-12);
  double p = 0.5 * std::erfc(z / std::sqrt(2.0));
  return ZTestResult{z, p, p < 0.05};
}

Thm1Report bound_diagnostics_thm1(const PolicyTable& pi, const TabularMDP& target,
                                  const TabularMDP& source, const Dataset& dataset,
                                  double sigma, int ensemble_size, double lambda_prior,
                                  uint64_t seed, bool assert_holds) {
  target.validate();
  source.validate();
  if (target.n_states != source.n_states || target.n_actions != source.n_actions ||
      target.gamma != source.gamma)
    throw std::invalid_argument("thm1: target/source shape or gamma mismatch");
  if (pi.n_states() != size_t(target.n_states))
    throw std::invalid_argument("thm1: policy size mismatch");
  if (dataset.empty()) throw std::invalid_argument("thm1: empty dataset");

  const int n = target.n_states;
  const double gamma = target.gamma;
  const double r_max = target.max_abs_reward();

  EnsembleModel em = fit_ensemble(dataset, n, target.n_actions, ensemble_size,
                                  lambda_prior, seed);
  TabularMDP hat = target;
  hat.kernel = em.mean_kernel;
  hat.fail_state = -1;  // the estimated rows need not keep the fail state absorbing
  hat.validate();

  EvalResult v_true = robust_policy_evaluation(pi, target, sigma);
  EvalResult v_src = robust_policy_evaluation(pi, source, 0.0);
  EvalResult v_hat = robust_policy_evaluation(pi, hat, sigma);

  Thm1Report rep;
  rep.sigma = sigma;
  rep.lhs = dot(target.init_dist, v_true.values);
  rep.source_value = dot(source.init_dist, v_src.values);

  std::vector<double> k_true = worst_case_kernel(pi, target, sigma);
  std::vector<double> k_hat = worst_case_kernel(pi, hat, sigma);
  std::vector<double> d_hat =
      occupancy_measure(pi, k_hat, target.init_dist, gamma, target.n_actions);
  for (int s = 0; s < n; ++s) {
    double tv = 0.0;
    for (int sn = 0; sn < n; ++sn)
      tv += std::abs(k_true[size_t(s) * n + sn] - k_hat[size_t(s) * n + sn]);
    rep.term_a += d_hat[size_t(s) * target.n_actions + pi(s)] * 0.5 * tv;
  }

  std::vector<double> k_src = policy_kernel(source, pi);
  std::vector<double> d_src =
      occupancy_measure(pi, k_src, source.init_dist, gamma, source.n_actions);
  for (int s = 0; s < n; ++s) {
    double e_src = dot(source.row(s, pi(s)), v_hat.values);
    double inf_e = dual_form_worst_case(hat.row(s, pi(s)), v_hat.values, sigma, gamma);
    rep.term_b += d_src[size_t(s) * source.n_actions + pi(s)] * std::abs(e_src - inf_e);
  }

  rep.rhs = rep.source_value -
            (2.0 * gamma * r_max / ((1.0 - gamma) * (1.0 - gamma))) * rep.term_a -
            (gamma / (1.0 - gamma)) * rep.term_b;
  rep.holds = rep.lhs >= rep.rhs - 1e-8;
  if (assert_holds && !rep.holds)
    throw std::logic_error("thm1 diagnostic violated: lhs " + fmt_g17(rep.lhs) +
                           " < rhs " + fmt_g17(rep.rhs) + " - 1e-8");
  return rep;
}

void save_thm1_csv(const std::vector<Thm1Report>& reports, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "instance,sigma,lhs,source_value,term_a,term_b,rhs,holds\n";
  for (size_t i = 0; i < reports.size(); ++i) {
    const Thm1Report& r = reports[i];
    os << i << ',' << fmt_g17(r.sigma) << ',' << fmt_g17(r.lhs) << ','
       << fmt_g17(r.source_value) << ',' << fmt_g17(r.term_a) << ','
       << fmt_g17(r.term_b) << ',' << fmt_g17(r.rhs) << ',' << (r.holds ? 1 : 0)
       << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

void save_thm2_csv(const KappaDiagnostics& diag, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "iter,xi,zeta,bound,gap\n";
  for (size_t i = 0; i < diag.rows.size(); ++i) {
    const KappaIterRow& r = diag.rows[i];
    os << i + 1 << ',' << fmt_g17(r.xi) << ',' << fmt_g17(r.zeta) << ','
       << fmt_g17(r.bound) << ',' << fmt_g17(r.gap) << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

TabularMDP random_tabular_mdp(int n_states, int n_actions, double gamma, uint64_t seed) {
  if (n_states < 2 || n_actions < 1)
    throw std::invalid_argument("random_tabular_mdp: need >= 2 states and >= 1 action");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("random_tabular_mdp: gamma in (0,1)");
  std::mt19937_64 rng = make_stream(seed, Stream::instance);

  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.fail_state = n_states - 1;
  m.init_dist.assign(size_t(n_states), 0.0);
  m.reward.assign(size_t(n_states) * n_actions, 0.0);
  m.kernel.assign(size_t(n_states) * n_actions * n_states, 0.0);

  auto dirichlet_row = [&](std::span<double> row) {
    double sum = 0.0;
    for (double& x : row) {
      x = -std::log(1.0 - uniform01(rng));
      sum += x;
    }
    if (sum == 0.0) {
      for (double& x : row) x = 1.0 / double(row.size());
      return;
    }
    for (double& x : row) x /= sum;
  };

  for (int s = 0; s + 1 < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      m.r(s, a) = uniform01(rng);
      dirichlet_row(m.row(s, a));
    }
  }
  for (int a = 0; a < n_actions; ++a) m.row(m.fail_state, a)[size_t(m.fail_state)] = 1.0;
  dirichlet_row(std::span<double>(m.init_dist.data(), size_t(n_states - 1)));

  m.validate();
  return m;
}

PolicyTable random_policy(int n_states, int n_actions, uint64_t seed) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("random_policy: empty shape");
  std::mt19937_64 rng = make_stream(seed, Stream::instance, 1);
  PolicyTable pi;
  pi.act.resize(size_t(n_states));
  for (int s = 0; s < n_states; ++s)
    pi.act[size_t(s)] = int(uniform_index(rng, size_t(n_actions)));
  return pi;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::fqi: return "fqi";
    case Method::rfqi: return "rfqi";
    case Method::hydro: return "hydro";
    case Method::naive_merge: return "naive-merge";
    case Method::hydro_no_priority: return "hydro-no-priority";
    case Method::hydro_no_filter: return "hydro-no-filter";
  }
  throw std::logic_error("method_name: unhandled method");
}

Method parse_method(const std::string& name) {
  if (name == "fqi") return Method::fqi;
  if (name == "rfqi") return Method::rfqi;
  if (name == "hydro") return Method::hydro;
  if (name == "naive-merge") return Method::naive_merge;
  if (name == "hydro-no-priority") return Method::hydro_no_priority;
  if (name == "hydro-no-filter") return Method::hydro_no_filter;
  throw std::invalid_argument("unknown method \"" + name + "\"");
}

void ExperimentConfig::validate() const {
  grid.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("config: gamma in (0,1)");
  if (dataset_size < 1) throw std::invalid_argument("config: dataset size >= 1");
  if (!(behavior_epsilon >= 0.0 && behavior_epsilon <= 1.0))
    throw std::invalid_argument("config: behavior_epsilon in [0,1]");
  train.validate();
  if (eval.episodes < 1) throw std::invalid_argument("config: eval episodes >= 1");
  if (eval.horizon < 0) throw std::invalid_argument("config: eval horizon >= 0");
  if (eval.magnitudes.empty()) throw std::invalid_argument("config: empty perturbation grid");
  if (seeds.empty()) throw std::invalid_argument("config: empty seed list");
  std::set<uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw std::invalid_argument("config: duplicate seeds");
  if (output_dir.empty()) throw std::invalid_argument("config: empty output_dir");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }

  require_keys(j, "config", {"schema_version", "env", "dataset", "method", "train",
                             "eval", "seeds", "output_dir"});
  if (!j.contains("schema_version"))
    throw std::invalid_argument(path + ": missing schema_version");
  if (j["schema_version"].get<int>() != 1)
    throw std::invalid_argument(path + ": unsupported schema_version");

  ExperimentConfig cfg;
  if (j.contains("env")) {
    const auto& e = j["env"];
    require_keys(e, "env", {"preset", "grid", "gamma", "source_shift"});
    if (e.contains("preset") && e.contains("grid"))
      throw std::invalid_argument("env: preset and grid are exclusive");
    if (e.contains("preset")) {
      std::string p = e["preset"].get<std::string>();
      if (p != "cliff_walk_5x5")
        throw std::invalid_argument("env: unknown preset \"" + p + "\"");
      cfg.grid = GridSpec::cliff_walk_5x5();
    }
    if (e.contains("grid")) cfg.grid = load_grid_json(e["grid"].get<std::string>());
    if (e.contains("gamma")) cfg.gamma = e["gamma"].get<double>();
    if (e.contains("source_shift")) {
      const auto& sh = e["source_shift"];
      require_keys(sh, "env.source_shift", {"slip_delta", "wind_delta"});
      if (sh.contains("slip_delta")) cfg.shift.slip_delta = sh["slip_delta"].get<double>();
      if (sh.contains("wind_delta")) cfg.shift.wind_delta = sh["wind_delta"].get<double>();
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    require_keys(d, "dataset", {"size", "seed", "behavior_epsilon"});
    if (d.contains("size")) cfg.dataset_size = d["size"].get<int>();
    if (d.contains("seed")) cfg.dataset_seed = d["seed"].get<uint64_t>();
    if (d.contains("behavior_epsilon"))
      cfg.behavior_epsilon = d["behavior_epsilon"].get<double>();
  }
  if (j.contains("method")) cfg.method = parse_method(j["method"].get<std::string>());
  if (j.contains("train")) {
    const auto& t = j["train"];
    // gamma and seed are owned by the env block and the run seed.
    require_keys(t, "train",
                 {"sigma", "lr_q", "lr_g", "batch_size", "iterations",
                  "target_sync_period", "kappa", "topk_fraction", "rollout_len", "beta",
                  "ensemble_size", "lambda_prior", "rollout_epsilon", "rollout_horizon",
                  "buffer_capacity", "dual_steps_per_q", "full_regression", "log_period",
                  "warmup_iters"});
    TrainConfig& c = cfg.train;
    if (t.contains("sigma")) c.sigma = t["sigma"].get<double>();
    if (t.contains("lr_q")) c.lr_q = t["lr_q"].get<double>();
    if (t.contains("lr_g")) c.lr_g = t["lr_g"].get<double>();
    if (t.contains("batch_size")) c.batch_size = t["batch_size"].get<int>();
    if (t.contains("iterations")) c.iterations = t["iterations"].get<int>();
    if (t.contains("target_sync_period"))
      c.target_sync_period = t["target_sync_period"].get<int>();
    if (t.contains("kappa")) c.kappa = t["kappa"].get<double>();
    if (t.contains("topk_fraction")) c.topk_fraction = t["topk_fraction"].get<double>();
    if (t.contains("rollout_len")) c.rollout_len = t["rollout_len"].get<int>();
    if (t.contains("beta")) c.beta = t["beta"].get<double>();
    if (t.contains("ensemble_size")) c.ensemble_size = t["ensemble_size"].get<int>();
    if (t.contains("lambda_prior")) c.lambda_prior = t["lambda_prior"].get<double>();
    if (t.contains("rollout_epsilon"))
      c.rollout_epsilon = t["rollout_epsilon"].get<double>();
    if (t.contains("rollout_horizon")) c.rollout_horizon = t["rollout_horizon"].get<int>();
    if (t.contains("buffer_capacity"))
      c.buffer_capacity = t["buffer_capacity"].get<size_t>();
    if (t.contains("dual_steps_per_q"))
      c.dual_steps_per_q = t["dual_steps_per_q"].get<int>();
    if (t.contains("full_regression")) c.full_regression = t["full_regression"].get<bool>();
    if (t.contains("log_period")) c.log_period = t["log_period"].get<int>();
    if (t.contains("warmup_iters")) c.warmup_iters = t["warmup_iters"].get<int>();
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    require_keys(e, "eval", {"episodes", "horizon", "perturb_param", "grid"});
    if (e.contains("episodes")) cfg.eval.episodes = e["episodes"].get<int>();
    if (e.contains("horizon")) cfg.eval.horizon = e["horizon"].get<int>();
    if (e.contains("perturb_param")) {
      std::string p = e["perturb_param"].get<std::string>();
      if (p == "slip_prob") {
        cfg.eval.param = PerturbParam::slip_prob;
      } else if (p == "wind_push") {
        cfg.eval.param = PerturbParam::wind_push;
      } else {
        throw std::invalid_argument("eval: unknown perturb_param \"" + p + "\"");
      }
    }
    if (e.contains("grid")) cfg.eval.magnitudes = e["grid"].get<std::vector<double>>();
  }
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();

  cfg.validate();
  return cfg;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "method,param,magnitude,seed,mean_return,std_return,episodes\n";
  for (const SweepRow& r : rows)
    os << r.method << ',' << r.param << ',' << fmt_g17(r.magnitude) << ',' << r.seed
       << ',' << fmt_g17(r.mean_return) << ',' << fmt_g17(r.std_return) << ','
       << r.episodes << '\n';
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::vector<SweepRow> load_sweep_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument(path + ": empty file");
  static const std::vector<std::string> expected = {
      "method", "param", "magnitude", "seed", "mean_return", "std_return", "episodes"};
  std::vector<std::string> header = split_csv_line(line);
  for (size_t i = 0; i < std::max(header.size(), expected.size()); ++i) {
    if (i >= expected.size())
      throw std::invalid_argument(path + ": unexpected column \"" + header[i] + "\"");
    if (i >= header.size())
      throw std::invalid_argument(path + ": missing column \"" + expected[i] + "\"");
    if (header[i] != expected[i])
      throw std::invalid_argument(path + ": unexpected column \"" + header[i] +
                                  "\" (expected \"" + expected[i] + "\")");
  }

  std::vector<SweepRow> rows;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != expected.size())
      throw std::invalid_argument(path + ": short row at line " + std::to_string(lineno));
    SweepRow r;
    r.method = f[0];
    r.param = f[1];
    try {
      r.magnitude = std::stod(f[2]);
      r.seed = std::stoull(f[3]);
      r.mean_return = std::stod(f[4]);
      r.std_return = std::stod(f[5]);
      r.episodes = std::stoi(f[6]);
    } catch (const std::exception&) {
      throw std::invalid_argument(path + ": bad field at line " + std::to_string(lineno));
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<double> seed_averages(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("seed_averages: no rows");
  std::map<uint64_t, std::pair<double, int>> acc;
  for (const SweepRow& r : rows) {
    if (r.method != rows.front().method)
      throw std::invalid_argument("seed_averages: rows mix methods");
    auto& slot = acc[r.seed];
    slot.first += r.mean_return;
    slot.second += 1;
  }
  std::vector<double> out;
  out.reserve(acc.size());
  for (const auto& [seed, slot] : acc) out.push_back(slot.first / double(slot.second));
  return out;
}

std::vector<ReportRow> make_report(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("report: no rows");
  std::map<std::tuple<std::string, std::string, double>, std::vector<double>> groups;
  for (const SweepRow& r : rows)
    groups[{r.method, r.param, r.magnitude}].push_back(r.mean_return);
  std::vector<ReportRow> out;
  out.reserve(groups.size());
  for (const auto& [key, means] : groups) {
    ReportRow row;
    row.method = std::get<0>(key);
    row.param = std::get<1>(key);
    row.magnitude = std::get<2>(key);
    row.mean_return = mean_of(means);
    row.std_across_seeds = std::sqrt(sample_var(means, row.mean_return));
    row.n_seeds = int(means.size());
    out.push_back(row);
  }
  return out;
}

void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "method,param,magnitude,mean_return,std_across_seeds,n_seeds\n";
  for (const ReportRow& r : rows)
    os << r.method << ',' << r.param << ',' << fmt_g17(r.magnitude) << ','
       << fmt_g17(r.mean_return) << ',' << fmt_g17(r.std_across_seeds) << ','
       << r.n_seeds << '\n';
  if (!os) throw std::runtime_error("failed writing " + path);
}

void save_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "iter,mean_psi_sampled,mean_psi_uniform_ref,accept_rate,lambda_mean,"
        "eval_return_nominal,eval_return_worstcase\n";
  for (const TrainLogRow& r : log.rows)
    os << r.iter << ',' << fmt_g17(r.mean_psi_sampled) << ','
       << fmt_g17(r.mean_psi_uniform_ref) << ',' << fmt_g17(r.accept_rate) << ','
       << fmt_g17(r.lambda_mean) << ',' << fmt_g17(r.eval_return_nominal) << ','
       << fmt_g17(r.eval_return_worstcase) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path);
}

QTable Checkpoint::q_table() const {
  QTable q(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      q.at(s, a) = q_weights[size_t(a) * n_states + s];
  return q;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)ck.update_checksum);
  os << "{\n";
  os << "  \"schema_version\": 1,\n";
  os << "  \"method\": \"" << ck.method << "\",\n";
  os << "  \"fingerprint\": \"" << ck.fingerprint << "\",\n";
  os << "  \"iteration\": " << ck.iteration << ",\n";
  os << "  \"n_states\": " << ck.n_states << ",\n";
  os << "  \"n_actions\": " << ck.n_actions << ",\n";
  os << "  \"update_checksum\": \"" << hex << "\",\n";
  os << "  \"q_weights\": [";
  for (size_t i = 0; i < ck.q_weights.size(); ++i) {
    if (i) os << ", ";
    os << fmt_g17(ck.q_weights[i]);
  }
  os << "],\n";
  os << "  \"g_values\": [";
  for (size_t i = 0; i < ck.g_values.size(); ++i) {
    if (i) os << ", ";
    os << fmt_g17(ck.g_values[i]);
  }
  os << "],\n";
  os << "  \"rng_state\": {";
  bool first = true;
  for (const auto& [name, state] : ck.rng_state) {
    if (!first) os << ", ";
    first = false;
    os << '"' << name << "\": \"" << state << '"';
  }
  os << "}\n}\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  require_keys(j, "checkpoint",
               {"schema_version", "method", "fingerprint", "iteration", "n_states",
                "n_actions", "update_checksum", "q_weights", "g_values", "rng_state"});
  for (const char* k : {"schema_version", "method", "fingerprint", "iteration",
                        "n_states", "n_actions", "update_checksum", "q_weights",
                        "g_values", "rng_state"})
    if (!j.contains(k))
      throw std::invalid_argument(path + ": missing key \"" + std::string(k) + "\"");
  if (j["schema_version"].get<int>() != 1)
    throw std::invalid_argument(path + ": unsupported schema_version");

  Checkpoint ck;
  ck.method = j["method"].get<std::string>();
  ck.fingerprint = j["fingerprint"].get<std::string>();
  ck.iteration = j["iteration"].get<int>();
  ck.n_states = j["n_states"].get<int>();
  ck.n_actions = j["n_actions"].get<int>();
  ck.update_checksum = std::stoull(j["update_checksum"].get<std::string>(), nullptr, 16);
  ck.q_weights = j["q_weights"].get<std::vector<double>>();
  ck.g_values = j["g_values"].get<std::vector<double>>();
  for (auto it = j["rng_state"].begin(); it != j["rng_state"].end(); ++it)
    ck.rng_state[it.key()] = it.value().get<std::string>();
  if (ck.n_states < 1 || ck.n_actions < 1 ||
      ck.q_weights.size() != size_t(ck.n_states) * ck.n_actions ||
      ck.g_values.size() != size_t(ck.n_states) * ck.n_actions)
    throw std::invalid_argument(path + ": inconsistent checkpoint dimensions");
  return ck;
}

std::string experiment_fingerprint(const ExperimentConfig& cfg, uint64_t run_seed) {
  std::ostringstream os;
  os << method_name(cfg.method) << '|' << cfg.grid.width << 'x' << cfg.grid.height << '|';
  for (const auto& c : cfg.grid.cliff) os << c.first << ',' << c.second << ';';
  os << '|' << cfg.grid.goal.first << ',' << cfg.grid.goal.second << '|';
  for (double p : cfg.grid.start_dist) os << fmt_g17(p) << ';';
  os << '|' << fmt_g17(cfg.grid.slip_prob) << '|' << fmt_g17(cfg.grid.living_reward) << '|';
  for (double w : cfg.grid.wind_push) os << fmt_g17(w) << ';';
  os << '|' << fmt_g17(cfg.gamma) << '|' << fmt_g17(cfg.shift.slip_delta) << ','
     << fmt_g17(cfg.shift.wind_delta) << '|' << cfg.dataset_size << ','
     << cfg.dataset_seed << ',' << fmt_g17(cfg.behavior_epsilon) << '|';
  const TrainConfig& t = cfg.train;
  os << fmt_g17(t.sigma) << ',' << fmt_g17(t.lr_q) << ',' << fmt_g17(t.lr_g) << ','
     << t.batch_size << ',' << t.iterations << ',' << t.target_sync_period << ','
     << fmt_g17(t.kappa) << ',' << fmt_g17(t.topk_fraction) << ',' << t.rollout_len
     << ',' << fmt_g17(t.beta) << ',' << t.ensemble_size << ','
     << fmt_g17(t.lambda_prior) << ',' << fmt_g17(t.rollout_epsilon) << ','
     << t.rollout_horizon << ',' << t.buffer_capacity << ',' << t.dual_steps_per_q
     << ',' << (t.full_regression ? 1 : 0) << ',' << t.warmup_iters << '|' << run_seed;
  std::string s = os.str();
  Fnv1a f;
  f.feed(s.data(), s.size());
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", (unsigned long long)f.h);
  return hex;
}

namespace {

HydroOptions options_for(Method m) {
  HydroOptions o;
  if (m == Method::hydro_no_priority) o.priority_enabled = false;
  if (m == Method::hydro_no_filter) o.filter_enabled = false;
  if (m == Method::naive_merge) {
    o.filter_enabled = false;
    o.priority_enabled = false;
  }
  return o;
}

void fill_from_eigen(std::vector<double>& out, const Eigen::MatrixXd& w) {
  out.resize(size_t(w.rows()) * size_t(w.cols()));
  for (Eigen::Index a = 0; a < w.rows(); ++a)
    for (Eigen::Index s = 0; s < w.cols(); ++s)
      out[size_t(a) * size_t(w.cols()) + size_t(s)] = w(a, s);
}

Checkpoint train_one(const ExperimentConfig& cfg, const TabularMDP& target,
                     const TabularMDP& source, const PolicyTable& behavior,
                     uint64_t run_seed) {
  TrainConfig tc = cfg.train;
  tc.gamma = cfg.gamma;
  tc.seed = run_seed;
  tc.log_period = tc.iterations;  // sweeps only need the final snapshot

  Dataset data = generate_offline_dataset(target, behavior, cfg.behavior_epsilon,
                                          cfg.dataset_size, cfg.dataset_seed + run_seed);

  Checkpoint ck;
  ck.method = method_name(cfg.method);
  ck.fingerprint = experiment_fingerprint(cfg, run_seed);
  ck.iteration = tc.iterations;
  ck.n_states = target.n_states;
  ck.n_actions = target.n_actions;

  if (cfg.method == Method::fqi || cfg.method == Method::rfqi) {
    FittedResult fr = cfg.method == Method::fqi ? fqi_train(data, tc, nullptr, &target)
                                                : rfqi_train(data, tc, nullptr, &target);
    fill_from_eigen(ck.q_weights, fr.q.weights());
    ck.g_values = fr.g.values();
    ck.update_checksum = fr.log.checksum;
    ck.rng_state = fr.log.rng_state;
  } else {
    Simulator sim(source, run_seed);
    HydroResult hr = cfg.method == Method::naive_merge
                         ? naive_merge_train(sim, data, tc)
                         : hydro_train(sim, data, tc, options_for(cfg.method));
    fill_from_eigen(ck.q_weights, hr.q.weights());
    ck.g_values = hr.g.values();
    ck.update_checksum = hr.log.checksum;
    ck.rng_state = hr.log.rng_state;
  }
  return ck;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  auto [target, source] = make_env_pair(cfg.grid, cfg.gamma, cfg.shift);
  PolicyTable behavior = robust_value_iteration(target, 0.0).policy;
  PerturbationSpec ps{cfg.eval.param, cfg.eval.magnitudes};
  std::vector<TabularMDP> envs = perturbation_sweep_envs(cfg.grid, cfg.gamma, ps);
  std::filesystem::create_directories(cfg.output_dir);

  SweepResult out;
  for (uint64_t run_seed : cfg.seeds) {
    std::string ck_path = cfg.output_dir + "/checkpoint_" + method_name(cfg.method) +
                          "_seed" + std::to_string(run_seed) + ".json";
    std::string fp = experiment_fingerprint(cfg, run_seed);
    Checkpoint ck;
    bool reused = false;
    if (std::filesystem::exists(ck_path)) {
      try {
        Checkpoint prev = load_checkpoint(ck_path);
        if (prev.fingerprint == fp) {
          ck = std::move(prev);
          reused = true;
        }
      } catch (const std::exception&) {
        // unreadable or foreign file; retrain and overwrite
      }
    }
    if (!reused) {
      ck = train_one(cfg, target, source, behavior, run_seed);
      save_checkpoint(ck, ck_path);
    }

    QTable q = ck.q_table();
    for (size_t mi = 0; mi < cfg.eval.magnitudes.size(); ++mi) {
      EvalStats st =
          evaluate_policy(q, envs[mi], cfg.eval.episodes, cfg.eval.horizon, run_seed);
      SweepRow row;
      row.method = method_name(cfg.method);
      row.param = cfg.eval.param == PerturbParam::slip_prob ? "slip_prob" : "wind_push";
      row.magnitude = cfg.eval.magnitudes[mi];
      row.seed = run_seed;
      row.mean_return = st.mean;
      row.std_return = st.stddev;
      row.episodes = st.episodes;
      out.rows.push_back(row);
    }
  }

  out.csv_path = cfg.output_dir + std::string("/sweep_") + method_name(cfg.method) + ".csv";
  save_sweep_csv(out.rows, out.csv_path);
  return out;
}

}  // namespace hydro
