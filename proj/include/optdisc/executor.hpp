#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/options.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

/// Sampled initiation set Omega(s): a membership flag per option index.
/// Primitives are always members.
struct InitiationSet {
  std::vector<char> member;
  std::size_t count = 0;

  bool contains(OptionId h) const { return member[h] != 0; }
  std::vector<OptionId> indices() const {
    std::vector<OptionId> out;
    for (OptionId h = 0; h < member.size(); ++h) {
      if (member[h]) out.push_back(h);
    }
    return out;
  }
};

/// Draws one uniform per adjustable option, in index order, even when the
/// interest is 0 or 1. `interest(h)` returns i(s,h) for adjustable h.
template <class InterestFn>
void sample_initiation_set_into(InterestFn&& interest, std::size_t k, std::size_t num_actions,
                                Rng& rng, InitiationSet& out) {
  out.member.assign(k + num_actions, 1);
  out.count = k + num_actions;
  for (OptionId h = 0; h < k; ++h) {
    if (!(uniform01(rng) < interest(h))) {
      out.member[h] = 0;
      --out.count;
    }
  }
}

inline InitiationSet sample_initiation_set(const ParamTables& t, StateId s, Rng& rng) {
  check_index(s, t.num_states, "state");
  InitiationSet out;
  sample_initiation_set_into([&](OptionId h) { return interest_prob(t, s, h); }, t.k,
                             t.num_actions, rng, out);
  return out;
}

inline InitiationSet sample_initiation_set(const OptionSet& o, StateId s, Rng& rng) {
  check_index(s, o.num_states(), "state");
  InitiationSet out;
  sample_initiation_set_into([&](OptionId h) { return o.interest(s, h); }, o.k(), o.num_actions(),
                             rng, out);
  return out;
}

/// Epsilon-greedy over the members of Omega; ties share the greedy mass.
inline void meta_policy(std::span<const double> q_row, const InitiationSet& omega, double eps,
                        std::span<double> out) {
  if (omega.count == 0) throw Error(Errc::EmptyInitiationSet, "initiation set is empty");
  double best = 0.0;
  bool first = true;
  std::size_t ties = 0;
  for (OptionId h = 0; h < q_row.size(); ++h) {
    if (!omega.member[h]) continue;
    if (first || q_row[h] > best) {
      best = q_row[h];
      ties = 1;
      first = false;
    } else if (q_row[h] == best) {
      ++ties;
    }
  }
  const double explore = eps / static_cast<double>(omega.count);
  const double greedy = (1.0 - eps) / static_cast<double>(ties);
  for (OptionId h = 0; h < q_row.size(); ++h) {
    if (!omega.member[h]) {
      out[h] = 0.0;
    } else {
      out[h] = explore + (q_row[h] == best ? greedy : 0.0);
    }
  }
}

inline std::vector<double> meta_policy(std::span<const double> q_row, const InitiationSet& omega,
                                       double eps) {
  std::vector<double> out(q_row.size());
  meta_policy(q_row, omega, eps, out);
  return out;
}

enum class RunMode { Learn, Greedy };

struct TraceStep {
  StateId state = 0;
  bool decision = false;
  std::vector<OptionId> omega;  // only filled at decision points
  OptionId option = 0;
  ActionId action = 0;
  double reward = 0.0;
  bool terminated = false;
};

struct EpisodeTrace {
  TaskId task = 0;
  std::vector<TraceStep> steps;
  double ret = 0.0;
  std::vector<std::size_t> decision_costs;
  bool step_limit_exceeded = false;
  std::size_t steps_taken = 0;

  std::size_t length() const { return steps_taken; }
  std::size_t decisions() const { return decision_costs.size(); }
};

/// G - c * sum of |Omega| over decision points.
inline double compound_return(const EpisodeTrace& trace, double c) {
  if (c < 0.0) throw Error(Errc::InvalidArgument, "option cost must be non-negative");
  double cost = 0.0;
  for (std::size_t k : trace.decision_costs) cost += static_cast<double>(k);
  return trace.ret - c * cost;
}

/// Call-and-return rollout for task n. `q_task` is the |S| x |H| option-value
/// table of that task. Greedy mode uses eps = 0 (ties still split uniformly).
///
/// Random draws per step: at a decision point k uniforms for Omega and one for
/// the option; then one for the action, one for the transition and one for the
/// termination of the running option.
inline EpisodeTrace run_episode(const TabularMdp& mdp, TaskId n, const OptionSet& options,
                                std::span<const double> q_task, double eps, RunMode mode,
                                Rng& rng, std::size_t max_steps,
                                std::optional<StateId> start = std::nullopt,
                                bool record_steps = true) {
  check_index(n, mdp.num_tasks(), "task");
  if (max_steps == 0) throw Error(Errc::InvalidArgument, "maxSteps must be positive");
  const std::size_t H = options.num_options();
  if (q_task.size() != mdp.num_states() * H) {
    throw Error(Errc::InvalidArgument, "Q table does not match |S| x |H|");
  }
  const double e = mode == RunMode::Greedy ? 0.0 : eps;

  EpisodeTrace trace;
  trace.task = n;
  StateId s = start ? *start : sample_categorical(mdp.initial(), rng);
  check_index(s, mdp.num_states(), "start state");

  InitiationSet omega;
  std::vector<double> mu(H);
  bool decide = true;
  OptionId h = 0;
  double discount = 1.0;
  for (std::size_t t = 0; t < max_steps; ++t) {
    TraceStep rec;
    rec.state = s;
    if (decide) {
      sample_initiation_set_into([&](OptionId x) { return options.interest(s, x); }, options.k(),
                                 options.num_actions(), rng, omega);
      meta_policy(q_task.subspan(s * H, H), omega, e, mu);
      h = sample_categorical(mu, rng);
      trace.decision_costs.push_back(omega.count);
      rec.decision = true;
      if (record_steps) rec.omega = omega.indices();
    }
    const ActionId a = sample_categorical(options.policy(s, h), rng);
    const StepOutcome out = step(mdp, n, s, a, rng);
    trace.ret += discount * out.reward;
    ++trace.steps_taken;
    discount *= mdp.gamma();
    decide = bernoulli(options.termination(out.next_state, h), rng);
    rec.option = h;
    rec.action = a;
    rec.reward = out.reward;
    rec.terminated = out.terminated;
    if (record_steps) trace.steps.push_back(std::move(rec));
    s = out.next_state;
    if (out.terminated) return trace;
  }
  trace.step_limit_exceeded = true;
  return trace;
}

inline nlohmann::json trace_to_json(const EpisodeTrace& trace) {
  nlohmann::json j;
  j["task"] = trace.task;
  j["return"] = trace.ret;
  j["decisionCosts"] = trace.decision_costs;
  j["stepLimitExceeded"] = trace.step_limit_exceeded;
  j["steps"] = nlohmann::json::array();
  for (const auto& st : trace.steps) {
    nlohmann::json row{{"state", st.state}, {"option", st.option}, {"action", st.action},
                       {"reward", st.reward}, {"terminated", st.terminated}};
    if (st.decision) row["omega"] = st.omega;
    j["steps"].push_back(std::move(row));
  }
  return j;
}

}  // namespace optdisc
