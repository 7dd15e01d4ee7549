#include "hydro/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hydro/rng.hpp"

namespace hydro {

namespace {

constexpr int kEpisodeHorizon = 200;
constexpr int kNumActions = 4;
// Row/col deltas for up, down, left, right.
constexpr int kDr[kNumActions] = {-1, 1, 0, 0};
constexpr int kDc[kNumActions] = {0, 0, -1, 1};
// Perpendicular action pairs used for slip.
constexpr int kPerp[kNumActions][2] = {{2, 3}, {2, 3}, {0, 1}, {0, 1}};

}  // namespace

bool GridSpec::is_cliff(int row, int col) const {
  for (const auto& c : cliff)
    if (c.first == row && c.second == col) return true;
  return false;
}

void GridSpec::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("grid: empty dimensions");
  auto in_bounds = [&](const std::pair<int, int>& c) {
    return c.first >= 0 && c.first < height && c.second >= 0 && c.second < width;
  };
  std::set<std::pair<int, int>> seen;
  for (const auto& c : cliff) {
    if (!in_bounds(c)) throw std::invalid_argument("grid: cliff cell out of bounds");
    if (!seen.insert(c).second) throw std::invalid_argument("grid: duplicate cliff cell");
  }
  if (!in_bounds(goal)) throw std::invalid_argument("grid: goal out of bounds");
  if (is_cliff(goal.first, goal.second))
    throw std::invalid_argument("grid: goal cannot be a cliff cell");
  if (!(slip_prob >= 0.0 && slip_prob < 1.0))
    throw std::invalid_argument("grid: slip_prob in [0,1)");
  if (!(living_reward >= 0.0 && living_reward < 1.0))
    throw std::invalid_argument("grid: living_reward in [0,1)");
  if (int(wind_push.size()) != width)
    throw std::invalid_argument("grid: wind_push needs one entry per column");
  for (double w : wind_push)
    if (!(w >= 0.0 && w < 1.0)) throw std::invalid_argument("grid: wind_push in [0,1)");
  if (int(start_dist.size()) != width * height)
    throw std::invalid_argument("grid: start_dist needs one entry per cell");
  double sum = 0.0;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      double p = start_dist[size_t(cell(row, col))];
      if (!(p >= 0.0)) throw std::invalid_argument("grid: negative start mass");
      if (p > 0.0 && is_cliff(row, col))
        throw std::invalid_argument("grid: start mass on a cliff cell");
      sum += p;
    }
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("grid: start_dist sums to " + fmt_g17(sum));
}

GridSpec GridSpec::cliff_walk_5x5() {
  GridSpec g;
  g.width = 5;
  g.height = 5;
  g.cliff = {{4, 1}, {4, 2}, {4, 3}};
  g.goal = {4, 4};
  g.slip_prob = 0.1;
  g.wind_push.assign(5, 0.0);
  g.start_dist.assign(25, 0.0);
  int safe = 0;
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 5; ++col)
      if (!g.is_cliff(row, col) && !(row == g.goal.first && col == g.goal.second)) ++safe;
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 5; ++col)
      if (!g.is_cliff(row, col) && !(row == g.goal.first && col == g.goal.second))
        g.start_dist[size_t(g.cell(row, col))] = 1.0 / double(safe);
  return g;
}

TabularMDP compile_grid(const GridSpec& spec, double gamma) {
  spec.validate();
  const int cells = spec.width * spec.height;
  const int fail = cells;

  TabularMDP m;
  m.n_states = cells + 1;
  m.n_actions = kNumActions;
  m.gamma = gamma;
  m.fail_state = fail;
  m.init_dist.assign(size_t(m.n_states), 0.0);
  std::copy(spec.start_dist.begin(), spec.start_dist.end(), m.init_dist.begin());
  m.reward.assign(size_t(m.n_states) * kNumActions, 0.0);
  m.kernel.assign(size_t(m.n_states) * kNumActions * m.n_states, 0.0);

  auto clamp_cell = [&](int row, int col) {
    row = std::clamp(row, 0, spec.height - 1);
    col = std::clamp(col, 0, spec.width - 1);
    return std::pair<int, int>{row, col};
  };

  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      int s = spec.cell(row, col);
      bool is_goal = row == spec.goal.first && col == spec.goal.second;
      for (int a = 0; a < kNumActions; ++a) {
        auto out = m.row(s, a);
        if (is_goal) {
          m.r(s, a) = 1.0;
          out[size_t(s)] = 1.0;
          continue;
        }
        if (spec.is_cliff(row, col)) {
          out[size_t(fail)] = 1.0;  // unreachable bookkeeping rows
          continue;
        }
        m.r(s, a) = spec.living_reward;
        const double moves[3] = {1.0 - spec.slip_prob, spec.slip_prob / 2.0,
                                 spec.slip_prob / 2.0};
        const int dirs[3] = {a, kPerp[a][0], kPerp[a][1]};
        for (int k = 0; k < 3; ++k) {
          double pm = moves[k];
          if (pm == 0.0) continue;
          auto [r1, c1] = clamp_cell(row + kDr[dirs[k]], col + kDc[dirs[k]]);
          if (spec.is_cliff(r1, c1)) {
            out[size_t(fail)] += pm;
            continue;
          }
          double w = spec.wind_push[size_t(c1)];
          if (w > 0.0) {
            auto [r2, c2] = clamp_cell(r1 - 1, c1);
            int pushed = spec.is_cliff(r2, c2) ? fail : spec.cell(r2, c2);
            out[size_t(pushed)] += pm * w;
            out[size_t(spec.cell(r1, c1))] += pm * (1.0 - w);
          } else {
            out[size_t(spec.cell(r1, c1))] += pm;
          }
        }
      }
    }
  }
  for (int a = 0; a < kNumActions; ++a) m.row(fail, a)[size_t(fail)] = 1.0;

  m.validate();
  return m;
}

std::pair<TabularMDP, TabularMDP> make_env_pair(const GridSpec& base, double gamma,
                                                const SourceShift& shift) {
  GridSpec src = base;
  src.slip_prob += shift.slip_delta;
  for (double& w : src.wind_push) w += shift.wind_delta;
  // validate() re-checks the shifted parameters' ranges.
  return {compile_grid(base, gamma), compile_grid(src, gamma)};
}

std::vector<TabularMDP> perturbation_sweep_envs(const GridSpec& base, double gamma,
                                                const PerturbationSpec& pspec) {
  if (pspec.magnitudes.empty())
    throw std::invalid_argument("perturbation_sweep_envs: empty magnitude grid");
  std::vector<TabularMDP> out;
  out.reserve(pspec.magnitudes.size());
  for (double mag : pspec.magnitudes) {
    GridSpec g = base;
    if (pspec.param == PerturbParam::slip_prob) {
      g.slip_prob = mag;
    } else {
      g.wind_push.assign(size_t(base.width), mag);
    }
    out.push_back(compile_grid(g, gamma));
  }
  return out;
}

Simulator::Simulator(const GridSpec& spec, double gamma, uint64_t seed)
    : Simulator(compile_grid(spec, gamma), seed) {}

Simulator::Simulator(TabularMDP mdp, uint64_t seed) : mdp_(std::move(mdp)) {
  mdp_.validate();
  rng_ = make_stream(seed, Stream::rollout);
  state_ = sample_categorical(mdp_.init_dist, rng_);
}

void Simulator::set_state(int s) {
  if (s < 0 || s >= mdp_.n_states) throw std::invalid_argument("Simulator: state out of range");
  state_ = s;
}

bool Simulator::absorbing(int s) const {
  for (int a = 0; a < mdp_.n_actions; ++a)
    if (mdp_.row(s, a)[size_t(s)] < 1.0 - 1e-9) return false;
  return true;
}

int Simulator::reset() {
  state_ = sample_categorical(mdp_.init_dist, rng_);
  return state_;
}

Simulator::StepResult Simulator::step(int action) {
  if (action < 0 || action >= mdp_.n_actions)
    throw std::invalid_argument("Simulator: action out of range");
  StepResult res;
  res.reward = mdp_.r(state_, action);
  res.next = sample_categorical(mdp_.row(state_, action), rng_);
  state_ = res.next;
  return res;
}

Dataset generate_offline_dataset(const TabularMDP& mdp, const PolicyTable& behavior,
                                 double epsilon, int n, uint64_t seed, Domain domain) {
  mdp.validate();
  if (n < 1) throw std::invalid_argument("generate_offline_dataset: n must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("generate_offline_dataset: epsilon in [0,1]");
  if (behavior.n_states() != size_t(mdp.n_states))
    throw std::invalid_argument("generate_offline_dataset: behavior size mismatch");
  for (int s = 0; s < mdp.n_states; ++s)
    if (behavior(s) < 0 || behavior(s) >= mdp.n_actions)
      throw std::invalid_argument("generate_offline_dataset: behavior action out of range");

  std::mt19937_64 rng = make_stream(seed, Stream::datagen);
  Dataset data;
  data.reserve(size_t(n));
  while (int(data.size()) < n) {
    int s = sample_categorical(mdp.init_dist, rng);
    for (int t = 0; t < kEpisodeHorizon && int(data.size()) < n; ++t) {
      int a = uniform01(rng) < epsilon ? int(uniform_index(rng, size_t(mdp.n_actions)))
                                       : behavior(s);
      int sn = sample_categorical(mdp.row(s, a), rng);
      data.push_back(Transition{s, a, mdp.r(s, a), sn, t + 1 == kEpisodeHorizon, domain});
      s = sn;
    }
  }
  return data;
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "s,a,r,s_next,done,domain\n";
  for (const Transition& t : data)
    os << t.s << ',' << t.a << ',' << fmt_g17(t.r) << ',' << t.s_next << ','
       << (t.done ? 1 : 0) << ',' << domain_name(t.domain) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path);
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "s,a,r,s_next,done,domain")
    throw std::invalid_argument(path + ": bad dataset header");
  Dataset data;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[6];
    for (int i = 0; i < 6; ++i)
      if (!std::getline(ss, f[i], i < 5 ? ',' : '\n'))
        throw std::invalid_argument(path + ": short row at line " + std::to_string(lineno));
    Transition t;
    try {
      t.s = std::stoi(f[0]);
      t.a = std::stoi(f[1]);
      t.r = std::stod(f[2]);
      t.s_next = std::stoi(f[3]);
      int done = std::stoi(f[4]);
      if (done != 0 && done != 1) throw std::invalid_argument("done");
      t.done = done == 1;
    } catch (const std::exception&) {
      throw std::invalid_argument(path + ": bad field at line " + std::to_string(lineno));
    }
    if (f[5] == "target") {
      t.domain = Domain::target;
    } else if (f[5] == "source") {
      t.domain = Domain::source;
    } else {
      throw std::invalid_argument(path + ": bad domain at line " + std::to_string(lineno));
    }
    data.push_back(t);
  }
  return data;
}

void save_grid_json(const GridSpec& spec, const std::string& path) {
  spec.validate();
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot open " + path + " for writing");
  os << "{\n";
  os << "  \"width\": " << spec.width << ",\n";
  os << "  \"height\": " << spec.height << ",\n";
  os << "  \"cliff\": [";
  for (size_t i = 0; i < spec.cliff.size(); ++i) {
    if (i) os << ", ";
    os << '[' << spec.cliff[i].first << ", " << spec.cliff[i].second << ']';
  }
  os << "],\n";
  os << "  \"goal\": [" << spec.goal.first << ", " << spec.goal.second << "],\n";
  os << "  \"start_dist\": [";
  for (size_t i = 0; i < spec.start_dist.size(); ++i) {
    if (i) os << ", ";
    os << fmt_g17(spec.start_dist[i]);
  }
  os << "],\n";
  os << "  \"slip_prob\": " << fmt_g17(spec.slip_prob) << ",\n";
  os << "  \"living_reward\": " << fmt_g17(spec.living_reward) << ",\n";
  os << "  \"wind_push\": [";
  for (size_t i = 0; i < spec.wind_push.size(); ++i) {
    if (i) os << ", ";
    os << fmt_g17(spec.wind_push[i]);
  }
  os << "]\n}\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

GridSpec load_grid_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  static const char* keys[] = {"width",     "height",        "cliff",     "goal",
                               "start_dist", "slip_prob", "living_reward", "wind_push"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known |= it.key() == k;
    if (!known) throw std::invalid_argument(path + ": unknown key \"" + it.key() + "\"");
  }
  for (const char* k : keys)
    if (!j.contains(k)) throw std::invalid_argument(path + ": missing key \"" + std::string(k) + "\"");

  GridSpec g;
  g.width = j["width"].get<int>();
  g.height = j["height"].get<int>();
  for (const auto& c : j["cliff"]) {
    auto v = c.get<std::vector<int>>();
    if (v.size() != 2) throw std::invalid_argument(path + ": cliff cells are [row, col]");
    g.cliff.emplace_back(v[0], v[1]);
  }
  auto goal = j["goal"].get<std::vector<int>>();
  if (goal.size() != 2) throw std::invalid_argument(path + ": goal is [row, col]");
  g.goal = {goal[0], goal[1]};
  g.start_dist = j["start_dist"].get<std::vector<double>>();
  g.slip_prob = j["slip_prob"].get<double>();
  g.living_reward = j["living_reward"].get<double>();
  g.wind_push = j["wind_push"].get<std::vector<double>>();
  g.validate();
  return g;
}

}  // namespace hydro
