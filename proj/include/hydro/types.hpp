#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydro {

/// Thrown when an input violates the zero-reward absorbing fail-state
/// assumption required by the simplified dual form.
struct FailStateError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Domain : uint8_t { target = 0, source = 1 };

inline const char* domain_name(Domain d) {
  return d == Domain::target ? "target" : "source";
}

/// One logged environment transition. `done` marks an episode boundary in the
/// generating rollout; value backups never consult it.
struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool done = false;
  Domain domain = Domain::target;
};

using Dataset = std::vector<Transition>;

/// Action-value table, row-major over (state, action).
struct QTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> v;

  QTable() = default;
  QTable(int ns, int na) : n_states(ns), n_actions(na), v(size_t(ns) * na, 0.0) {}

  double& at(int s, int a) { return v[size_t(s) * n_actions + a]; }
  double at(int s, int a) const { return v[size_t(s) * n_actions + a]; }

  /// V(s) = max_a Q(s,a).
  double state_value(int s) const {
    double best = at(s, 0);
    for (int a = 1; a < n_actions; ++a) best = std::max(best, at(s, a));
    return best;
  }
};

inline std::vector<double> state_values(const QTable& q) {
  std::vector<double> out(size_t(q.n_states));
  for (int s = 0; s < q.n_states; ++s) out[size_t(s)] = q.state_value(s);
  return out;
}

/// Deterministic policy; one action per state.
struct PolicyTable {
  std::vector<int> act;

  int operator()(int s) const { return act[size_t(s)]; }
  size_t n_states() const { return act.size(); }
};

/// Greedy policy from Q; ties resolve to the lowest action index.
inline PolicyTable greedy_policy(const QTable& q) {
  PolicyTable pi;
  pi.act.resize(size_t(q.n_states));
  for (int s = 0; s < q.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < q.n_actions; ++a)
      if (q.at(s, a) > q.at(s, best)) best = a;
    pi.act[size_t(s)] = best;
  }
  return pi;
}

/// Lossless float formatting for every file the tools write.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// FNV-1a checksum chained over raw value bytes; used to fingerprint update
/// sequences so ablation code paths can be asserted identical.
struct Fnv1a {
  uint64_t h = 1469598103934665603ull;

  void feed(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  void feed(const std::vector<double>& xs) {
    feed(xs.data(), xs.size() * sizeof(double));
  }
};

}  // namespace hydro
