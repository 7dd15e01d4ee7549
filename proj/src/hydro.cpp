#include "hydro/hydro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hydro/rng.hpp"

namespace hydro {

namespace {

double plus_part(double x) { return x > 0.0 ? x : 0.0; }

std::string rng_state_string(const std::mt19937_64& g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

}  // namespace

GapEstimate gap_from_values(std::span<const double> v, double g_sa,
                            const EnsembleModel& model, int s_src, int a_src,
                            int s_next_src, double sigma, GapMode mode,
                            std::mt19937_64* rng) {
  if (s_src < 0 || s_src >= model.n_states || a_src < 0 || a_src >= model.n_actions ||
      s_next_src < 0 || s_next_src >= model.n_states)
    throw std::invalid_argument("gap_lambda_hat: index out of range");
  if (v.size() != size_t(model.n_states))
    throw std::invalid_argument("gap_lambda_hat: value vector size mismatch");

  GapEstimate est;
  est.source_side = v[size_t(s_next_src)];
  std::span<const double> mean = mean_next_distribution(model, s_src, a_src);
  if (mode == GapMode::exact) {
    double e = 0.0;
    for (size_t sn = 0; sn < mean.size(); ++sn) e += mean[sn] * plus_part(g_sa - v[sn]);
    est.model_side = e;
  } else {
    if (!rng) throw std::invalid_argument("gap_lambda_hat: sample mode needs an rng");
    int sn = sample_categorical(mean, *rng);
    est.model_side = plus_part(g_sa - v[size_t(sn)]);
  }
  est.lambda_hat = std::abs(est.source_side + est.model_side - g_sa * (1.0 - sigma));
  return est;
}

GapEstimate gap_lambda_hat(const QTable& q, const DualTable& g, const EnsembleModel& model,
                           int s_src, int a_src, int s_next_src, double sigma,
                           GapMode mode, std::mt19937_64* rng) {
  if (q.n_states != model.n_states || q.n_actions != model.n_actions ||
      g.n_states() != model.n_states || g.n_actions() != model.n_actions)
    throw std::invalid_argument("gap_lambda_hat: shape mismatch");
  std::vector<double> v = state_values(q);
  return gap_from_values(v, g.at(s_src, a_src), model, s_src, a_src, s_next_src, sigma,
                         mode, rng);
}

double priority_score(double lambda_hat) {
  if (!(lambda_hat >= 0.0)) throw std::invalid_argument("priority_score: negative gap");
  return 1.0 / (1.0 + lambda_hat);
}

bool buffer_insert_filtered(PriorityBuffer& buffer, const Transition& t, double u,
                            double epsilon_u, const QTable& q, const DualTable& g,
                            const EnsembleModel& model, double sigma, GapMode mode,
                            std::mt19937_64* rng) {
  if (!(u <= epsilon_u)) return false;
  GapEstimate est = gap_lambda_hat(q, g, model, t.s, t.a, t.s_next, sigma, mode, rng);
  buffer.insert(t, u, priority_score(est.lambda_hat));
  return true;
}

size_t buffer_update_priorities(PriorityBuffer& buffer, std::span<const EntryRef> refs,
                                const QTable& q, const DualTable& g,
                                const EnsembleModel& model, double sigma, GapMode mode,
                                std::mt19937_64* rng, std::vector<double>* psi_out,
                                std::vector<double>* lambda_out) {
  if (g.n_states() != model.n_states || g.n_actions() != model.n_actions)
    throw std::invalid_argument("buffer_update_priorities: shape mismatch");
  std::vector<double> v = state_values(q);
  if (psi_out) {
    psi_out->clear();
    psi_out->reserve(refs.size());
  }
  if (lambda_out) {
    lambda_out->clear();
    lambda_out->reserve(refs.size());
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  size_t skipped = 0;
  for (const EntryRef& ref : refs) {
    if (!buffer.valid(ref)) {
      ++skipped;
      if (psi_out) psi_out->push_back(nan);
      if (lambda_out) lambda_out->push_back(nan);
      continue;
    }
    const BufferEntry& e = buffer.entry(ref.slot);
    GapEstimate est = gap_from_values(v, g.at(e.t.s, e.t.a), model, e.t.s, e.t.a,
                                      e.t.s_next, sigma, mode, rng);
    double psi = priority_score(est.lambda_hat);
    buffer.set_priority(ref.slot, psi);
    if (psi_out) psi_out->push_back(psi);
    if (lambda_out) lambda_out->push_back(est.lambda_hat);
  }
  return skipped;
}

std::vector<double> topk_weights(std::span<const double> psi, double k_fraction) {
  if (!(k_fraction > 0.0 && k_fraction <= 1.0))
    throw std::invalid_argument("topk_weights: k_fraction in (0,1]");
  for (double p : psi)
    if (!std::isfinite(p)) throw std::invalid_argument("topk_weights: non-finite score");
  std::vector<double> w(psi.size(), 0.0);
  if (psi.empty()) return w;
  size_t m = size_t(std::ceil(k_fraction * double(psi.size())));
  m = std::clamp(m, size_t(1), psi.size());
  std::vector<size_t> idx(psi.size());
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t i, size_t j) { return psi[i] > psi[j]; });
  for (size_t i = 0; i < m; ++i) w[idx[i]] = 1.0;
  return w;
}

HydroResult hydro_train(Simulator& source_env, const Dataset& dataset_target,
                        const TrainConfig& cfg, const HydroOptions& opts,
                        const QTable* exact_q, const TabularMDP* eval_mdp) {
  cfg.validate();
  const TabularMDP& env = source_env.mdp();
  const int n_states = env.n_states;
  const int n_actions = env.n_actions;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (eval_mdp && (eval_mdp->n_states != n_states || eval_mdp->n_actions != n_actions))
    throw std::invalid_argument("hydro_train: evaluation model shape mismatch");
  if (exact_q && (exact_q->n_states != n_states || exact_q->n_actions != n_actions))
    throw std::invalid_argument("hydro_train: exact Q shape mismatch");
  if (dataset_target.empty()) throw std::invalid_argument("hydro_train: empty dataset");
  for (const Transition& t : dataset_target) {
    if (t.domain != Domain::target)
      throw std::invalid_argument("hydro_train: offline dataset contains a source-tagged sample");
    if (t.s < 0 || t.s >= n_states || t.a < 0 || t.a >= n_actions || t.s_next < 0 ||
        t.s_next >= n_states)
      throw std::invalid_argument("hydro_train: dataset indices exceed the source model");
  }

  const bool online = cfg.rollout_len > 0;

  HydroResult res{LinearQ::one_hot(n_states, n_actions),
                  DualTable(n_states, n_actions, cfg.sigma, cfg.gamma),
                  {},
                  nan,
                  nan,
                  0,
                  0,
                  0};

  EnsembleModel model;
  if (online) {
    model = fit_ensemble(dataset_target, n_states, n_actions, cfg.ensemble_size,
                         cfg.lambda_prior, cfg.seed);
    res.epsilon_u = opts.filter_enabled
                        ? compute_threshold(model, dataset_target, cfg.beta, cfg.rollout_len)
                        : std::numeric_limits<double>::infinity();
  }
  PriorityBuffer buffer(cfg.buffer_capacity);

  std::mt19937_64 rng_batch = make_stream(cfg.seed, Stream::target_batch);
  // Salt 1 keeps action draws distinct from a Simulator seeded with cfg.seed.
  std::mt19937_64 rng_act = make_stream(cfg.seed, Stream::rollout, 1);
  std::mt19937_64 rng_buf = make_stream(cfg.seed, Stream::buffer_sample);
  std::mt19937_64 rng_model = make_stream(cfg.seed, Stream::dual_augment);
  std::mt19937_64 rng_ref = make_stream(cfg.seed, Stream::uniform_ref);

  QTable q_target = res.q.q_table();
  Fnv1a checksum;
  int ep_t = 0;

  // Each log row reports means over the iterations since the previous row, so
  // the prioritized-versus-uniform comparison aggregates log_period batches
  // instead of one draw of each.
  double win_psi_sampled = 0.0, win_psi_ref = 0.0, win_lambda = 0.0;
  size_t win_n_sampled = 0, win_n_ref = 0, win_n_lambda = 0;

  SampleBatch target_batch(size_t(cfg.batch_size));
  for (int k = 0; k < cfg.iterations; ++k) {
    QTable live;
    if (online) live = res.q.q_table();

    for (int step = 0; step < cfg.rollout_len; ++step) {
      int s = source_env.state();
      int a;
      if (uniform01(rng_act) < cfg.rollout_epsilon) {
        a = int(uniform_index(rng_act, size_t(n_actions)));
      } else {
        a = 0;
        for (int cand = 1; cand < n_actions; ++cand)
          if (live.at(s, cand) > live.at(s, a)) a = cand;
      }
      auto sr = source_env.step(a);
      ++ep_t;
      bool boundary = ep_t >= cfg.rollout_horizon || source_env.absorbing(sr.next);
      Transition t{s, a, sr.reward, sr.next, boundary, Domain::source};
      ++res.attempted;
      double u = uncertainty(model, s, a);
      if (buffer_insert_filtered(buffer, t, u, res.epsilon_u, live, res.g, model,
                                 cfg.sigma, opts.gap_mode, &rng_model))
        ++res.accepted;
      if (boundary) {
        source_env.reset();
        ep_t = 0;
      }
    }

    std::vector<EntryRef> refs;
    SampleBatch src_batch;
    std::vector<double> psi_at_draw;
    if (online && !buffer.empty()) {
      refs = opts.priority_enabled
                 ? buffer.sample_prioritized(size_t(cfg.batch_size), rng_buf)
                 : buffer.sample_uniform(size_t(cfg.batch_size), rng_buf);
      src_batch.reserve(refs.size());
      psi_at_draw.reserve(refs.size());
      for (const EntryRef& ref : refs) {
        const BufferEntry& e = buffer.entry(ref.slot);
        psi_at_draw.push_back(e.psi);
        src_batch.push_back(BatchEntry{e.t.s, e.t.a, e.t.r, e.t.s_next, Domain::source, 1.0});
      }
      for (double p : psi_at_draw) win_psi_sampled += p;
      win_n_sampled += psi_at_draw.size();
      std::vector<EntryRef> probe = buffer.sample_uniform(size_t(cfg.batch_size), rng_ref);
      for (const EntryRef& ref : probe) win_psi_ref += buffer.entry(ref.slot).psi;
      win_n_ref += probe.size();
    }

    for (int i = 0; i < cfg.batch_size; ++i) {
      const Transition& t = dataset_target[uniform_index(rng_batch, dataset_target.size())];
      target_batch[size_t(i)] = BatchEntry{t.s, t.a, t.r, t.s_next, t.domain, 1.0};
    }

    std::vector<double> psi_new;
    std::vector<double> lambda_new;
    if (!refs.empty()) {
      size_t stale = buffer_update_priorities(buffer, refs, live, res.g, model, cfg.sigma,
                                              opts.gap_mode, &rng_model, &psi_new,
                                              &lambda_new);
      if (stale != 0) throw std::logic_error("hydro_train: buffer mutated mid-iteration");
      for (double l : lambda_new) win_lambda += l;
      win_n_lambda += lambda_new.size();
    }

    SampleBatch dual_batch = target_batch;
    for (const BatchEntry& e : src_batch) {
      int sn = sample_categorical(mean_next_distribution(model, e.s, e.a), rng_model);
      dual_batch.push_back(BatchEntry{e.s, e.a, e.r, sn, Domain::target, 1.0});
    }
    std::vector<double> v_dual = state_values(q_target);
    for (int d = 0; d < cfg.dual_steps_per_q; ++d)
      dual_gradient_step(res.g, dual_batch, v_dual, cfg.sigma, cfg.lr_g);

    std::vector<double> weights = topk_weights(psi_new, cfg.topk_fraction);
    mixed_q_step(res.q, res.g, q_target, target_batch, src_batch, weights, cfg,
                 MixMode::sum);

    checksum.feed(res.q.weights().data(), size_t(res.q.weights().size()) * sizeof(double));
    checksum.feed(res.g.values());

    if ((k + 1) % cfg.target_sync_period == 0) q_target = res.q.q_table();

    if (exact_q) {
      double gap = 0.0;
      QTable snap = res.q.q_table();
      for (size_t i = 0; i < snap.v.size(); ++i)
        gap = std::max(gap, std::abs(snap.v[i] - exact_q->v[i]));
      res.log.supnorm_to_exact.push_back(gap);
    }

    if ((k + 1) % cfg.log_period == 0 || k + 1 == cfg.iterations) {
      TrainLogRow row;
      row.iter = k + 1;
      row.mean_psi_sampled = win_n_sampled ? win_psi_sampled / double(win_n_sampled) : nan;
      row.mean_psi_uniform_ref = win_n_ref ? win_psi_ref / double(win_n_ref) : nan;
      row.lambda_mean = win_n_lambda ? win_lambda / double(win_n_lambda) : nan;
      win_psi_sampled = win_psi_ref = win_lambda = 0.0;
      win_n_sampled = win_n_ref = win_n_lambda = 0;
      row.accept_rate =
          res.attempted ? double(res.accepted) / double(res.attempted) : nan;
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
  res.log.rng_state["rollout_action"] = rng_state_string(rng_act);
  res.log.rng_state["buffer_sample"] = rng_state_string(rng_buf);
  res.log.rng_state["model_draw"] = rng_state_string(rng_model);
  res.log.rng_state["uniform_ref"] = rng_state_string(rng_ref);
  res.accept_rate = res.attempted ? double(res.accepted) / double(res.attempted) : nan;
  res.buffer_size = buffer.size();
  return res;
}

HydroResult naive_merge_train(Simulator& source_env, const Dataset& dataset_target,
                              const TrainConfig& cfg, const QTable* exact_q,
                              const TabularMDP* eval_mdp) {
  TrainConfig merged = cfg;
  merged.topk_fraction = 1.0;
  HydroOptions opts;
  opts.filter_enabled = false;
  opts.priority_enabled = false;
  return hydro_train(source_env, dataset_target, merged, opts, exact_q, eval_mdp);
}

}  // namespace hydro
