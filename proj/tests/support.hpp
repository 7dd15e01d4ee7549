#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "hydro/rmdp.hpp"
#include "hydro/rng.hpp"

namespace testutil {

// Two states: s0 self-loops with reward 1, s1 is the absorbing fail state.
// Closed forms: V*(s0) = 1 / (1 - gamma (1 - sigma)) under a radius-sigma ball.
inline hydro::TabularMDP two_state_chain(double gamma = 0.9) {
  hydro::TabularMDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.gamma = gamma;
  m.fail_state = 1;
  m.init_dist = {1.0, 0.0};
  m.reward = {1.0, 0.0};
  m.kernel = {1.0, 0.0,   // s0, a0
              0.0, 1.0};  // s1, a0
  m.validate();
  return m;
}

// Rational-kernel instance whose rows are exact multiples of 1/8, so a
// dataset holding eight transitions per pair reproduces the kernel exactly.
inline hydro::TabularMDP eighths_mdp(int n_states, int n_actions, double gamma,
                                     uint64_t seed) {
  using namespace hydro;
  std::mt19937_64 rng = make_stream(seed, Stream::instance);
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.fail_state = n_states - 1;
  m.init_dist.assign(size_t(n_states), 0.0);
  for (int s = 0; s < n_states - 1; ++s) m.init_dist[size_t(s)] = 1.0 / (n_states - 1);
  m.reward.assign(size_t(n_states) * n_actions, 0.0);
  m.kernel.assign(size_t(n_states) * n_actions * n_states, 0.0);
  for (int s = 0; s < n_states - 1; ++s)
    for (int a = 0; a < n_actions; ++a) {
      m.r(s, a) = 0.4 + 0.2 * uniform01(rng);
      auto row = m.row(s, a);
      int remaining = 8;
      row[size_t(n_states - 1)] = 1.0 / 8.0;  // every pair can fail
      remaining -= 1;
      while (remaining > 0) {
        row[uniform_index(rng, size_t(n_states))] += 1.0 / 8.0;
        --remaining;
      }
    }
  for (int a = 0; a < n_actions; ++a) m.row(n_states - 1, a)[size_t(n_states - 1)] = 1.0;
  m.validate();
  return m;
}

inline hydro::Dataset exact_frequency_dataset(const hydro::TabularMDP& m,
                                              int copies_per_eighth = 1) {
  hydro::Dataset data;
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      auto row = m.row(s, a);
      for (int sn = 0; sn < m.n_states; ++sn) {
        int count = int(std::lround(row[size_t(sn)] * 8)) * copies_per_eighth;
        for (int c = 0; c < count; ++c)
          data.push_back({s, a, m.r(s, a), sn, false, hydro::Domain::target});
      }
    }
  return data;
}

inline double supnorm_gap(const hydro::QTable& a, const hydro::QTable& b) {
  double gap = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i)
    gap = std::max(gap, std::abs(a.v[i] - b.v[i]));
  return gap;
}

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Unique scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("hydro_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
