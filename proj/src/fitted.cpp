#include "hydro/fitted.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hydro/rng.hpp"

namespace hydro {

LinearQ LinearQ::one_hot(int n_states, int n_actions) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("LinearQ: empty shape");
  LinearQ q;
  q.features_ = Eigen::MatrixXd::Identity(n_states, n_states);
  q.weights_ = Eigen::MatrixXd::Zero(n_actions, n_states);
  q.one_hot_ = true;
  return q;
}

LinearQ LinearQ::with_features(Eigen::MatrixXd features, int n_actions) {
  if (features.rows() < 1 || features.cols() < 1 || n_actions < 1)
    throw std::invalid_argument("LinearQ: empty shape");
  LinearQ q;
  q.features_ = std::move(features);
  q.weights_ = Eigen::MatrixXd::Zero(n_actions, q.features_.cols());
  q.one_hot_ = false;
  return q;
}

QTable LinearQ::q_table() const {
  QTable t(n_states(), n_actions());
  for (int s = 0; s < n_states(); ++s)
    for (int a = 0; a < n_actions(); ++a) t.at(s, a) = value(s, a);
  return t;
}

void LinearQ::begin_step() {
  grad_ = Eigen::MatrixXd::Zero(weights_.rows(), weights_.cols());
  step_open_ = true;
}

void LinearQ::accumulate(const SampleBatch& batch, std::span<const double> targets,
                         std::span<const double> sample_weights, double coeff) {
  if (!step_open_) throw std::logic_error("LinearQ: accumulate outside a step");
  if (targets.size() != batch.size())
    throw std::invalid_argument("LinearQ: targets size mismatch");
  if (!sample_weights.empty() && sample_weights.size() != batch.size())
    throw std::invalid_argument("LinearQ: sample weights size mismatch");
  for (size_t i = 0; i < batch.size(); ++i) {
    const BatchEntry& e = batch[i];
    if (e.s < 0 || e.s >= n_states() || e.a < 0 || e.a >= n_actions())
      throw std::invalid_argument("LinearQ: batch entry out of range");
    double w = sample_weights.empty() ? 1.0 : sample_weights[i];
    double resid = value(e.s, e.a) - targets[i];
    grad_.row(e.a) += (coeff * w * resid) * features_.row(e.s);
  }
}

void LinearQ::apply_step(double lr) {
  if (!step_open_) throw std::logic_error("LinearQ: apply_step outside a step");
  weights_ -= lr * grad_;
  step_open_ = false;
}

void LinearQ::regress_exact(const SampleBatch& batch, std::span<const double> targets) {
  if (!one_hot_)
    throw std::invalid_argument("LinearQ: exact regression requires one-hot features");
  if (targets.size() != batch.size())
    throw std::invalid_argument("LinearQ: targets size mismatch");
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (size_t i = 0; i < batch.size(); ++i) {
    const BatchEntry& e = batch[i];
    if (e.s < 0 || e.s >= n_states() || e.a < 0 || e.a >= n_actions())
      throw std::invalid_argument("LinearQ: batch entry out of range");
    auto& slot = acc[{e.s, e.a}];
    slot.first += targets[i];
    slot.second += 1;
  }
  // One-hot weights are the table itself: w(a, s) = Q(s, a).
  for (const auto& [sa, sum_count] : acc)
    weights_(sa.second, sa.first) = sum_count.first / double(sum_count.second);
}

void TrainConfig::validate() const {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("config: sigma in [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("config: gamma in (0,1)");
  if (lr_q <= 0.0 || lr_g <= 0.0) throw std::invalid_argument("config: learning rates positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size >= 1");
  if (iterations < 1) throw std::invalid_argument("config: iterations >= 1");
  if (target_sync_period < 1) throw std::invalid_argument("config: target_sync_period >= 1");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("config: kappa in [0,1]");
  if (!(topk_fraction > 0.0 && topk_fraction <= 1.0))
    throw std::invalid_argument("config: topk_fraction in (0,1]");
  if (rollout_len < 0) throw std::invalid_argument("config: rollout_len >= 0");
  if (beta <= 0.0) throw std::invalid_argument("config: beta positive");
  if (ensemble_size < 2) throw std::invalid_argument("config: ensemble_size >= 2");
  if (lambda_prior < 0.0) throw std::invalid_argument("config: lambda_prior >= 0");
  if (!(rollout_epsilon >= 0.0 && rollout_epsilon <= 1.0))
    throw std::invalid_argument("config: rollout_epsilon in [0,1]");
  if (rollout_horizon < 1) throw std::invalid_argument("config: rollout_horizon >= 1");
  if (buffer_capacity < 1) throw std::invalid_argument("config: buffer_capacity >= 1");
  if (dual_steps_per_q < 1) throw std::invalid_argument("config: dual_steps_per_q >= 1");
  if (log_period < 1) throw std::invalid_argument("config: log_period >= 1");
  if (warmup_iters < 0) throw std::invalid_argument("config: warmup_iters >= 0");
}

double fqi_target(double r, int s_next, const QTable& q_target, double gamma) {
  if (s_next < 0 || s_next >= q_target.n_states)
    throw std::invalid_argument("fqi_target: s_next out of range");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("fqi_target: gamma must lie in [0, 1)");
  return r + gamma * q_target.state_value(s_next);
}

void mixed_q_step(LinearQ& q, const DualTable& g, const QTable& q_target,
                  const SampleBatch& target_batch, const SampleBatch& source_batch,
                  std::span<const double> source_weights, const TrainConfig& cfg,
                  MixMode mode) {
  if (target_batch.empty() && source_batch.empty())
    throw std::invalid_argument("mixed_q_step: both batches empty");
  if (source_weights.size() != source_batch.size())
    throw std::invalid_argument("mixed_q_step: weights size mismatch");
  for (const BatchEntry& e : target_batch)
    if (e.domain != Domain::target)
      throw std::invalid_argument("mixed_q_step: non-target sample in target batch");
  for (const BatchEntry& e : source_batch)
    if (e.domain != Domain::source)
      throw std::invalid_argument("mixed_q_step: non-source sample in source batch");
  for (double w : source_weights)
    if (w < 0.0) throw std::invalid_argument("mixed_q_step: negative sample weight");

  double tw = mode == MixMode::sum ? 1.0 : cfg.kappa;
  double sw = mode == MixMode::sum ? 1.0 : 1.0 - cfg.kappa;

  std::vector<double> y_target(target_batch.size());
  for (size_t i = 0; i < target_batch.size(); ++i) {
    const BatchEntry& e = target_batch[i];
    y_target[i] = empirical_robust_backup(e.r, e.s_next, g.at(e.s, e.a), q_target,
                                          cfg.sigma, cfg.gamma);
  }
  std::vector<double> y_source(source_batch.size());
  for (size_t i = 0; i < source_batch.size(); ++i) {
    const BatchEntry& e = source_batch[i];
    y_source[i] = fqi_target(e.r, e.s_next, q_target, cfg.gamma);
  }

  q.begin_step();
  if (!target_batch.empty())
    q.accumulate(target_batch, y_target, {}, tw * 2.0 / double(target_batch.size()));
  if (!source_batch.empty())
    q.accumulate(source_batch, y_source, source_weights,
                 sw * 2.0 / double(source_batch.size()));
  q.apply_step(cfg.lr_q);
}

namespace {

std::string rng_state_string(const std::mt19937_64& g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

FittedResult fitted_train_loop(const Dataset& dataset, const TrainConfig& cfg, bool robust,
                               const QTable* exact_q, const TabularMDP* eval_mdp) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  int max_s = 0, max_a = 0;
  for (const Transition& t : dataset) {
    if (t.domain != Domain::target)
      throw std::invalid_argument("train: offline dataset contains a source-tagged sample");
    if (t.s < 0 || t.a < 0 || t.s_next < 0)
      throw std::invalid_argument("train: negative index in dataset");
    max_s = std::max({max_s, t.s, t.s_next});
    max_a = std::max(max_a, t.a);
  }
  int n_states = eval_mdp ? eval_mdp->n_states : max_s + 1;
  int n_actions = eval_mdp ? eval_mdp->n_actions : max_a + 1;
  if (eval_mdp && (max_s >= n_states || max_a >= n_actions))
    throw std::invalid_argument("train: dataset indices exceed evaluation model");
  if (exact_q && (exact_q->n_states != n_states || exact_q->n_actions != n_actions))
    throw std::invalid_argument("train: exact Q shape mismatch");

  std::mt19937_64 rng_batch = make_stream(cfg.seed, Stream::target_batch);

  FittedResult res{LinearQ::one_hot(n_states, n_actions),
                   DualTable(n_states, n_actions, cfg.sigma, cfg.gamma),
                   {}};
  QTable q_target = res.q.q_table();
  Fnv1a checksum;

  SampleBatch batch(size_t(cfg.batch_size));
  std::vector<double> y(size_t(cfg.batch_size));
  for (int k = 0; k < cfg.iterations; ++k) {
    for (int i = 0; i < cfg.batch_size; ++i) {
      const Transition& t = dataset[uniform_index(rng_batch, dataset.size())];
      batch[size_t(i)] = BatchEntry{t.s, t.a, t.r, t.s_next, t.domain, 1.0};
    }

    if (robust) {
      std::vector<double> v = state_values(q_target);
      for (int d = 0; d < cfg.dual_steps_per_q; ++d)
        dual_gradient_step(res.g, batch, v, cfg.sigma, cfg.lr_g);
    }

    if (cfg.full_regression) {
      for (size_t i = 0; i < batch.size(); ++i) {
        const BatchEntry& e = batch[i];
        y[i] = robust ? empirical_robust_backup(e.r, e.s_next, res.g.at(e.s, e.a),
                                                q_target, cfg.sigma, cfg.gamma)
                      : fqi_target(e.r, e.s_next, q_target, cfg.gamma);
      }
      res.q.regress_exact(batch, y);
    } else if (robust) {
      mixed_q_step(res.q, res.g, q_target, batch, {}, {}, cfg, MixMode::sum);
    } else {
      for (size_t i = 0; i < batch.size(); ++i)
        y[i] = fqi_target(batch[i].r, batch[i].s_next, q_target, cfg.gamma);
      res.q.begin_step();
      res.q.accumulate(batch, y, {}, 2.0 / double(batch.size()));
      res.q.apply_step(cfg.lr_q);
    }

    checksum.feed(res.q.weights().data(), size_t(res.q.weights().size()) * sizeof(double));
    checksum.feed(res.g.values());

    if ((k + 1) % cfg.target_sync_period == 0) q_target = res.q.q_table();

    if (exact_q) {
      double gap = 0.0;
      QTable live = res.q.q_table();
      for (size_t i = 0; i < live.v.size(); ++i)
        gap = std::max(gap, std::abs(live.v[i] - exact_q->v[i]));
      res.log.supnorm_to_exact.push_back(gap);
    }

    if ((k + 1) % cfg.log_period == 0 || k + 1 == cfg.iterations) {
      TrainLogRow row;
      row.iter = k + 1;
      if (eval_mdp) {
        PolicyTable pi = greedy_policy(res.q.q_table());
        EvalResult nom = robust_policy_evaluation(pi, *eval_mdp, 0.0, 1e-10, 100000);
        EvalResult wc = robust_policy_evaluation(pi, *eval_mdp, cfg.sigma, 1e-10, 100000);
        double vn = 0.0, vw = 0.0;
        for (int s = 0; s < eval_mdp->n_states; ++s) {
          vn += eval_mdp->init_dist[size_t(s)] * nom.values[size_t(s)];
          vw += eval_mdp->init_dist[size_t(s)] * wc.values[size_t(s)];
        }
        row.eval_return_nominal = vn;
        row.eval_return_worstcase = vw;
      }
      res.log.rows.push_back(row);
    }
  }
  res.log.checksum = checksum.h;
  res.log.rng_state["target_batch"] = rng_state_string(rng_batch);
  return res;
}

}  // namespace

FittedResult rfqi_train(const Dataset& dataset, const TrainConfig& cfg,
                        const QTable* exact_q, const TabularMDP* eval_mdp) {
  return fitted_train_loop(dataset, cfg, true, exact_q, eval_mdp);
}

FittedResult fqi_train(const Dataset& dataset, const TrainConfig& cfg,
                       const QTable* exact_q, const TabularMDP* eval_mdp) {
  return fitted_train_loop(dataset, cfg, false, exact_q, eval_mdp);
}

KappaDiagnostics kappa_mixed_iteration(const TabularMDP& target, const TabularMDP& source,
                                       double sigma, double kappa, int iters) {
  target.validate();
  source.validate();
  if (target.n_states != source.n_states || target.n_actions != source.n_actions ||
      target.gamma != source.gamma)
    throw std::invalid_argument("kappa_mixed_iteration: domain shape/gamma mismatch");
  if (!(kappa >= 0.0 && kappa <= 1.0))
    throw std::invalid_argument("kappa_mixed_iteration: kappa in [0,1]");
  if (iters < 1) throw std::invalid_argument("kappa_mixed_iteration: iters >= 1");

  const double gamma = target.gamma;
  const double r_max = target.max_abs_reward();

  KappaDiagnostics out;
  out.q_star = robust_value_iteration(target, sigma, 1e-13, 1000000).q;

  QTable q(target.n_states, target.n_actions);
  double carried = 0.0;     // sum_i gamma^{k-i} (kappa xi_i + (1-kappa) zeta_i)
  double decay = gamma;     // gamma^{k+1}
  for (int k = 0; k < iters; ++k) {
    std::vector<double> v = state_values(q);
    DualTable g = exact_dual_table(target, q, sigma);
    QTable exact_robust = robust_bellman_apply(q, target, sigma);

    QTable next(target.n_states, target.n_actions);
    double xi = 0.0, zeta = 0.0;
    for (int s = 0; s < target.n_states; ++s) {
      for (int a = 0; a < target.n_actions; ++a) {
        auto p = target.row(s, a);
        double gv = g.at(s, a);
        double e_plus = 0.0;
        for (size_t sn = 0; sn < p.size(); ++sn)
          e_plus += p[sn] * std::max(gv - v[sn], 0.0);
        double t_dual = target.r(s, a) - gamma * (e_plus - gv * (1.0 - sigma));

        auto ps = source.row(s, a);
        double ev = 0.0;
        for (size_t sn = 0; sn < ps.size(); ++sn) ev += ps[sn] * v[sn];
        double t_src = source.r(s, a) + gamma * ev;

        next.at(s, a) = kappa * t_dual + (1.0 - kappa) * t_src;
        xi = std::max(xi, std::abs(t_dual - exact_robust.at(s, a)));
        zeta = std::max(zeta, std::abs(t_src - exact_robust.at(s, a)));
      }
    }

    carried = gamma * carried + (kappa * xi + (1.0 - kappa) * zeta);
    KappaIterRow row;
    row.xi = xi;
    row.zeta = zeta;
    row.bound = decay * r_max / (1.0 - gamma) + carried;
    double gap = 0.0;
    for (size_t i = 0; i < next.v.size(); ++i)
      gap = std::max(gap, std::abs(out.q_star.v[i] - next.v[i]));
    row.gap = gap;
    out.rows.push_back(row);
    out.iterates.push_back(next);
    q = std::move(next);
    decay *= gamma;
  }
  return out;
}

}  // namespace hydro
