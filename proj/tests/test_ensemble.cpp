#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "hydro/ensemble.hpp"
#include "hydro/envs.hpp"
#include "support.hpp"

using namespace hydro;

namespace {

Dataset deterministic_dataset() {
  // Covers every pair of a 3-state, 2-action space with a fixed next state.
  Dataset data;
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int rep = 0; rep < 4; ++rep)
        data.push_back({s, a, 0.0, (s + a) % 3, false, Domain::target});
  return data;
}

EnsembleModel two_member_disagreement() {
  EnsembleModel m;
  m.n_states = 2;
  m.n_actions = 1;
  m.member_kernels = {{1.0, 0.0, 0.5, 0.5}, {0.0, 1.0, 0.5, 0.5}};
  m.member_visits = {{3, 3}, {3, 3}};
  m.mean_kernel = {0.5, 0.5, 0.5, 0.5};
  return m;
}

}  // namespace

TEST_CASE("deterministic data with no prior yields identical point-mass members") {
  EnsembleModel model = fit_ensemble(deterministic_dataset(), 3, 2, 4, 0.0, 99);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) {
      for (int mi = 0; mi < 4; ++mi) {
        auto row = model.member_row(mi, s, a);
        CHECK(row[size_t((s + a) % 3)] == doctest::Approx(1.0));
      }
      CHECK(uncertainty(model, s, a) == doctest::Approx(0.0));
    }
}

TEST_CASE("an overwhelming prior pulls every row to uniform") {
  EnsembleModel model = fit_ensemble(deterministic_dataset(), 3, 2, 3, 1e12, 7);
  for (int mi = 0; mi < 3; ++mi) {
    auto row = model.member_row(mi, 0, 0);
    for (int sn = 0; sn < 3; ++sn)
      CHECK(row[size_t(sn)] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  }
}

TEST_CASE("unvisited pairs fall back to the uniform prior row") {
  Dataset data = {{0, 0, 0.0, 1, false, Domain::target},
                  {0, 0, 0.0, 1, false, Domain::target}};
  EnsembleModel model = fit_ensemble(data, 3, 2, 3, 1.0, 11);
  for (int mi = 0; mi < 3; ++mi) {
    auto row = model.member_row(mi, 2, 1);
    for (int sn = 0; sn < 3; ++sn)
      CHECK(row[size_t(sn)] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("member rows are valid distributions") {
  GridSpec spec = GridSpec::cliff_walk_5x5();
  TabularMDP m = compile_grid(spec, 0.95);
  PolicyTable pi;
  pi.act.assign(size_t(m.n_states), 3);
  Dataset data = generate_offline_dataset(m, pi, 0.5, 400, 5);
  EnsembleModel model = fit_ensemble(data, m.n_states, m.n_actions, 5, 1.0, 3);
  for (int mi = 0; mi < 5; ++mi)
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        auto row = model.member_row(mi, s, a);
        double sum = 0.0;
        for (double x : row) {
          CHECK(x >= 0.0);
          sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      }
}

TEST_CASE("bootstrap concentration on a fair coin") {
  Dataset data;
  for (int i = 0; i < 1000; ++i)
    data.push_back({0, 0, 0.0, i % 2, false, Domain::target});
  EnsembleModel model = fit_ensemble(data, 2, 1, 7, 1.0, 123);
  for (int mi = 0; mi < 7; ++mi) {
    auto row = model.member_row(mi, 0, 0);
    CHECK(std::abs(row[0] - 0.5) <= 0.1);
    CHECK(std::abs(row[1] - 0.5) <= 0.1);
  }
}

TEST_CASE("fitting is deterministic per seed") {
  Dataset data;
  for (int i = 0; i < 60; ++i)
    data.push_back({i % 3, i % 2, 0.0, (i * 7) % 3, false, Domain::target});
  EnsembleModel a = fit_ensemble(data, 3, 2, 4, 1.0, 42);
  EnsembleModel b = fit_ensemble(data, 3, 2, 4, 1.0, 42);
  CHECK(a.member_kernels == b.member_kernels);
  CHECK(a.mean_kernel == b.mean_kernel);
  EnsembleModel c = fit_ensemble(data, 3, 2, 4, 1.0, 43);
  CHECK(a.member_kernels != c.member_kernels);
}

TEST_CASE("empty datasets and degenerate ensemble sizes are rejected") {
  CHECK_THROWS_AS(fit_ensemble({}, 2, 1, 3, 1.0, 0), std::invalid_argument);
  Dataset data = {{0, 0, 0.0, 0, false, Domain::target}};
  CHECK_THROWS_AS(fit_ensemble(data, 2, 1, 1, 1.0, 0), std::invalid_argument);
}

TEST_CASE("disagreement hand case and permutation invariance") {
  EnsembleModel m = two_member_disagreement();
  CHECK(uncertainty(m, 0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(uncertainty(m, 1, 0) == doctest::Approx(0.0));

  std::swap(m.member_kernels[0], m.member_kernels[1]);
  CHECK(uncertainty(m, 0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("threshold is the dataset max scaled by one over beta times h") {
  EnsembleModel m = two_member_disagreement();
  Dataset data = {{0, 0, 0.0, 1, false, Domain::target},
                  {0, 0, 0.0, 1, false, Domain::target},  // duplicate pair
                  {1, 0, 0.0, 1, false, Domain::target}};
  double max_u = std::sqrt(2.0);
  CHECK(compute_threshold(m, data, 2.0, 5) == doctest::Approx(max_u / 10.0));
  CHECK(compute_threshold(m, data, 1.0, 1) == doctest::Approx(max_u));
  CHECK(compute_threshold(m, data, 4.0, 5) ==
        doctest::Approx(compute_threshold(m, data, 2.0, 5) / 2.0));
  CHECK(compute_threshold(m, data, 2.0, 10) ==
        doctest::Approx(compute_threshold(m, data, 2.0, 5) / 2.0));

  Dataset agree_only = {{1, 0, 0.0, 1, false, Domain::target}};
  CHECK(compute_threshold(m, agree_only, 1.0, 1) == doctest::Approx(0.0));

  CHECK_THROWS_AS(compute_threshold(m, data, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(compute_threshold(m, data, 1.0, 0), std::invalid_argument);
}

TEST_CASE("mean model averages the member rows") {
  EnsembleModel m = two_member_disagreement();
  auto mean = mean_next_distribution(m, 0, 0);
  CHECK(mean[0] == doctest::Approx(0.5));
  CHECK(mean[1] == doctest::Approx(0.5));
}

TEST_CASE("more data shrinks the mean model error") {
  GridSpec spec = GridSpec::cliff_walk_5x5();
  spec.slip_prob = 0.3;
  TabularMDP m = compile_grid(spec, 0.95);
  PolicyTable pi;
  pi.act.assign(size_t(m.n_states), 3);

  // Mean TV over every live (s, a): growing data improves visited pairs and
  // shrinks the unvisited (uniform-prior) remainder at the same time.
  auto mean_tv = [&](int n) {
    Dataset data = generate_offline_dataset(m, pi, 1.0, n, 2024);
    EnsembleModel model = fit_ensemble(data, m.n_states, m.n_actions, 5, 1.0, 8);
    double total = 0.0;
    int pairs = 0;
    for (int s = 0; s < m.n_states; ++s) {
      if (s == m.fail_state) continue;
      for (int a = 0; a < m.n_actions; ++a) {
        auto est = mean_next_distribution(model, s, a);
        auto truth = m.row(s, a);
        double tv = 0.0;
        for (int sn = 0; sn < m.n_states; ++sn)
          tv += std::abs(est[size_t(sn)] - truth[size_t(sn)]);
        total += 0.5 * tv;
        ++pairs;
      }
    }
    return total / pairs;
  };

  double e10 = mean_tv(10);
  double e100 = mean_tv(100);
  double e1000 = mean_tv(1000);
  CHECK(e100 < e10);
  CHECK(e1000 < e100);
}
