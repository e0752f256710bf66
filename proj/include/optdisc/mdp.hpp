#pragma once

#include <cmath>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

struct Outcome {
  StateId next = 0;
  double reward = 0.0;
  double prob = 1.0;
};

struct StepOutcome {
  StateId next_state = 0;
  double reward = 0.0;
  bool terminated = false;
};

/// Multi-task episodic MDP over a shared state and action space. Immutable once built.
///
/// Outcome lists are stored per (task, state, action) so tasks may differ in
/// both rewards and terminal structure. Terminal states self-loop with reward 0.
class TabularMdp {
 public:
  TabularMdp() = default;

  /// `outcomes` is indexed by (n * S + s) * A + a.
  TabularMdp(std::size_t num_states, std::size_t num_actions, std::size_t num_tasks,
             std::vector<std::vector<Outcome>> outcomes,
             std::vector<std::vector<StateId>> terminals, std::vector<double> initial,
             double gamma)
      : num_states_(num_states),
        num_actions_(num_actions),
        num_tasks_(num_tasks),
        outcomes_(std::move(outcomes)),
        initial_(std::move(initial)),
        gamma_(gamma) {
    if (num_states_ == 0 || num_actions_ == 0 || num_tasks_ == 0) {
      throw Error(Errc::InvalidArgument, "MDP needs at least one state, action and task");
    }
    if (outcomes_.size() != num_tasks_ * num_states_ * num_actions_) {
      throw Error(Errc::InvalidArgument, "outcome table has wrong size");
    }
    if (terminals.size() != num_tasks_) {
      throw Error(Errc::InvalidArgument, "need one terminal set per task");
    }
    if (initial_.size() != num_states_) {
      throw Error(Errc::InvalidArgument, "initial distribution has wrong size");
    }
    if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) throw Error(Errc::InvalidArgument, "gamma not in [0,1]");

    terminal_.assign(num_tasks_ * num_states_, 0);
    for (TaskId n = 0; n < num_tasks_; ++n) {
      for (StateId s : terminals[n]) {
        check_index(s, num_states_, "terminal state");
        terminal_[n * num_states_ + s] = 1;
        for (ActionId a = 0; a < num_actions_; ++a) {
          outcomes_[index(n, s, a)] = {Outcome{s, 0.0, 1.0}};
        }
      }
    }
    for (const auto& row : outcomes_) {
      double total = 0.0;
      for (const auto& o : row) {
        check_index(o.next, num_states_, "outcome state");
        if (o.prob < 0.0) throw Error(Errc::InvalidArgument, "negative outcome probability");
        total += o.prob;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw Error(Errc::InvalidArgument, "outcome probabilities sum to " + std::to_string(total));
      }
    }
    double mass = 0.0;
    for (double p : initial_) {
      if (p < 0.0) throw Error(Errc::InvalidArgument, "negative initial probability");
      mass += p;
    }
    if (std::abs(mass - 1.0) > 1e-12) throw Error(Errc::InvalidArgument, "d0 does not sum to 1");
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_tasks() const { return num_tasks_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& initial() const { return initial_; }

  std::span<const Outcome> outcomes(TaskId n, StateId s, ActionId a) const {
    return outcomes_[index(n, s, a)];
  }

  bool is_terminal(TaskId n, StateId s) const { return terminal_[n * num_states_ + s] != 0; }

  std::vector<StateId> terminals(TaskId n) const {
    std::vector<StateId> out;
    for (StateId s = 0; s < num_states_; ++s) {
      if (is_terminal(n, s)) out.push_back(s);
    }
    return out;
  }

  /// Largest |reward| over all outcomes.
  double max_abs_reward() const {
    double m = 0.0;
    for (const auto& row : outcomes_) {
      for (const auto& o : row) m = std::max(m, std::abs(o.reward));
    }
    return m;
  }

  /// Same MDP with a different discount.
  TabularMdp with_gamma(double gamma) const {
    TabularMdp copy = *this;
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::InvalidArgument, "gamma not in [0,1]");
    copy.gamma_ = gamma;
    return copy;
  }

 private:
  std::size_t index(TaskId n, StateId s, ActionId a) const {
    return (n * num_states_ + s) * num_actions_ + a;
  }

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::size_t num_tasks_ = 0;
  std::vector<std::vector<Outcome>> outcomes_;
  std::vector<char> terminal_;
  std::vector<double> initial_;
  double gamma_ = 1.0;
};

/// One task per goal cell of the selected mode. Every step costs -1, including
/// the step into the goal; d0 is uniform over all non-wall cells.
inline TabularMdp build_mdp(const GridSpec& grid, TaskMode mode, double gamma = 1.0) {
  const auto goals = grid.goals(mode);
  if (goals.empty()) {
    throw Error(Errc::NoGoalsForMode, std::string("map has no ") +
                                          (mode == TaskMode::TrainTasks ? "G" : "B") + " cells");
  }
  const std::size_t S = grid.num_states();
  const std::size_t N = goals.size();
  std::vector<std::vector<Outcome>> outcomes(N * S * kGridActions);
  std::vector<std::vector<StateId>> terminals(N);
  for (TaskId n = 0; n < N; ++n) {
    terminals[n] = {goals[n]};
    for (StateId s = 0; s < S; ++s) {
      for (ActionId a = 0; a < kGridActions; ++a) {
        outcomes[(n * S + s) * kGridActions + a] = {Outcome{grid.move(s, a), -1.0, 1.0}};
      }
    }
  }
  std::vector<double> d0(S, 1.0 / static_cast<double>(S));
  return TabularMdp(S, kGridActions, N, std::move(outcomes), std::move(terminals), std::move(d0),
                    gamma);
}

inline StepOutcome step(const TabularMdp& mdp, TaskId n, StateId s, ActionId a, Rng& rng) {
  check_index(n, mdp.num_tasks(), "task");
  check_index(s, mdp.num_states(), "state");
  check_index(a, mdp.num_actions(), "action");
  const auto outs = mdp.outcomes(n, s, a);
  const double u = uniform01(rng);
  double acc = 0.0;
  const Outcome* chosen = &outs.back();
  for (const auto& o : outs) {
    acc += o.prob;
    if (u < acc) {
      chosen = &o;
      break;
    }
  }
  return {chosen->next, chosen->reward, mdp.is_terminal(n, chosen->next)};
}

/// Samples an initial (task, state) pair: task uniform, state from d0.
inline std::pair<TaskId, StateId> sample_start(const TabularMdp& mdp, Rng& rng) {
  const TaskId n = uniform_index(mdp.num_tasks(), rng);
  const StateId s = sample_categorical(mdp.initial(), rng);
  return {n, s};
}

/// True when, for every task, every state has a positive-probability path to a
/// terminal state (so any fully stochastic policy terminates).
inline bool terminal_reachable_everywhere(const TabularMdp& mdp) {
  const std::size_t S = mdp.num_states();
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    std::vector<std::vector<StateId>> preds(S);
    for (StateId s = 0; s < S; ++s) {
      if (mdp.is_terminal(n, s)) continue;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        for (const auto& o : mdp.outcomes(n, s, a)) {
          if (o.prob > 0.0) preds[o.next].push_back(s);
        }
      }
    }
    std::vector<char> seen(S, 0);
    std::deque<StateId> queue;
    for (StateId s : mdp.terminals(n)) {
      seen[s] = 1;
      queue.push_back(s);
    }
    while (!queue.empty()) {
      const StateId x = queue.front();
      queue.pop_front();
      for (StateId p : preds[x]) {
        if (!seen[p]) {
          seen[p] = 1;
          queue.push_back(p);
        }
      }
    }
    for (StateId s = 0; s < S; ++s) {
      if (!seen[s]) return false;
    }
  }
  return true;
}

/// BFS step counts to `target` on the grid (walls block). Unreachable cells get -1.
inline std::vector<long> grid_distances(const GridSpec& grid, StateId target) {
  std::vector<long> dist(grid.num_states(), -1);
  std::deque<StateId> queue{target};
  dist[target] = 0;
  while (!queue.empty()) {
    const StateId x = queue.front();
    queue.pop_front();
    for (ActionId a = 0; a < kGridActions; ++a) {
      const StateId y = grid.move(x, a);
      if (dist[y] < 0) {
        dist[y] = dist[x] + 1;
        queue.push_back(y);
      }
    }
  }
  return dist;
}

// JSON fixture format:
// {
//   "states": 3, "actions": 2, "gamma": 1.0, "d0": [..],
//   "tasks": [ { "terminals": [2],
//                "outcomes": [ {"s":0, "a":1, "next":2, "reward":-1, "prob":1.0}, ... ] } ]
// }
// (s, a) pairs without listed outcomes self-loop with reward 0.
inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    const std::size_t S = j.at("states").get<std::size_t>();
    const std::size_t A = j.at("actions").get<std::size_t>();
    const double gamma = j.value("gamma", 1.0);
    const auto& tasks = j.at("tasks");
    const std::size_t N = tasks.size();
    std::vector<std::vector<Outcome>> outcomes(N * S * A);
    std::vector<std::vector<StateId>> terminals(N);
    for (TaskId n = 0; n < N; ++n) {
      const auto& t = tasks[n];
      terminals[n] = t.at("terminals").get<std::vector<StateId>>();
      for (const auto& o : t.at("outcomes")) {
        const StateId s = o.at("s").get<StateId>();
        const ActionId a = o.at("a").get<ActionId>();
        check_index(s, S, "fixture state");
        check_index(a, A, "fixture action");
        outcomes[(n * S + s) * A + a].push_back(
            Outcome{o.at("next").get<StateId>(), o.at("reward").get<double>(),
                    o.value("prob", 1.0)});
      }
      for (StateId s = 0; s < S; ++s) {
        for (ActionId a = 0; a < A; ++a) {
          auto& row = outcomes[(n * S + s) * A + a];
          if (row.empty()) row.push_back(Outcome{s, 0.0, 1.0});
        }
      }
    }
    std::vector<double> d0 = j.contains("d0") ? j.at("d0").get<std::vector<double>>()
                                              : std::vector<double>(S, 1.0 / static_cast<double>(S));
    return TabularMdp(S, A, N, std::move(outcomes), std::move(terminals), std::move(d0), gamma);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad MDP fixture: ") + e.what());
  }
}

inline nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["states"] = mdp.num_states();
  j["actions"] = mdp.num_actions();
  j["gamma"] = mdp.gamma();
  j["d0"] = mdp.initial();
  j["tasks"] = nlohmann::json::array();
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    nlohmann::json t;
    t["terminals"] = mdp.terminals(n);
    t["outcomes"] = nlohmann::json::array();
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (mdp.is_terminal(n, s)) continue;
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        for (const auto& o : mdp.outcomes(n, s, a)) {
          t["outcomes"].push_back(
              {{"s", s}, {"a", a}, {"next", o.next}, {"reward", o.reward}, {"prob", o.prob}});
        }
      }
    }
    j["tasks"].push_back(std::move(t));
  }
  return j;
}

}  // namespace optdisc
