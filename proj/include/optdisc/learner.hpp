#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/executor.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/options.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

enum class Algorithm { MAOC, FPOC };
/// Importance-ratio clipping: max(1, ratio) or min(1, ratio).
enum class IsClip { Max, Min };

inline std::string to_string(Algorithm a) { return a == Algorithm::MAOC ? "maoc" : "fpoc"; }
inline std::string to_string(IsClip c) { return c == IsClip::Max ? "max" : "min"; }

struct LearnerConfig {
  std::size_t k = 2;
  double alpha = 0.01;
  double epsilon = 0.1;
  double cbar = 0.2;
  double eta = 0.0;
  double gamma = 1.0;
  Algorithm algorithm = Algorithm::FPOC;
  IsClip is_clip = IsClip::Max;
  std::uint64_t total_steps = 10000000;
  std::uint64_t eval_every = 100000;
  std::size_t eval_episodes = 500;
  double eval_cost = 0.2;
  /// Step cap for evaluation episodes; 0 means 10 * |S|.
  std::size_t eval_max_steps = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::InvalidConfig, "alpha must lie in (0,1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(Errc::InvalidConfig, "epsilon must lie in [0,1]");
    if (!(cbar >= 0.0)) throw Error(Errc::InvalidConfig, "cbar must be non-negative");
    if (!(eta >= 0.0)) throw Error(Errc::InvalidConfig, "eta must be non-negative");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::InvalidConfig, "gamma must lie in [0,1]");
    if (!(eval_cost >= 0.0)) throw Error(Errc::InvalidConfig, "evaluation cost must be non-negative");
    if (eval_every == 0) throw Error(Errc::InvalidConfig, "evalEvery must be positive");
  }
};

/// Everything a run carries between steps. Besides the tables this holds the
/// executing option and whether the next step starts with a decision.
struct LearnerState {
  std::size_t num_tasks = 0;
  std::size_t num_states = 0;
  std::size_t num_options = 0;
  std::vector<double> q;  // N x S x H
  ParamTables tables;
  double beta_prev = 1.0;
  TaskId task = 0;
  StateId state = 0;
  OptionId option = 0;
  bool decision_pending = true;
  std::uint64_t step_count = 0;

  std::span<double> q_row(TaskId n, StateId s) {
    return {q.data() + (n * num_states + s) * num_options, num_options};
  }
  std::span<const double> q_row(TaskId n, StateId s) const {
    return {q.data() + (n * num_states + s) * num_options, num_options};
  }
  std::span<const double> q_task(TaskId n) const {
    return {q.data() + n * num_states * num_options, num_states * num_options};
  }

  friend bool operator==(const LearnerState&, const LearnerState&) = default;
};

/// Zero tables, first task and state sampled from the stream.
inline LearnerState make_learner_state(const LearnerConfig& cfg, const TabularMdp& mdp, Rng& rng) {
  LearnerState st;
  st.num_tasks = mdp.num_tasks();
  st.num_states = mdp.num_states();
  st.num_options = cfg.k + mdp.num_actions();
  st.q.assign(st.num_tasks * st.num_states * st.num_options, 0.0);
  st.tables = ParamTables(mdp.num_states(), cfg.k, mdp.num_actions());
  st.tables.interests_pinned = cfg.algorithm == Algorithm::MAOC;
  std::tie(st.task, st.state) = sample_start(mdp, rng);
  return st;
}

// ---------------------------------------------------------------------------
// Estimators for the epsilon-greedy meta-policy

/// Summary of Q over a set: top value, its index, runner-up, sum and size.
struct SetSummary {
  double top = 0.0;
  OptionId arg = 0;
  double second = 0.0;
  double sum = 0.0;
  std::size_t count = 0;
};

inline SetSummary summarize(std::span<const double> q_row, const InitiationSet& omega) {
  SetSummary out;
  out.top = -std::numeric_limits<double>::infinity();
  out.second = -std::numeric_limits<double>::infinity();
  for (OptionId h = 0; h < q_row.size(); ++h) {
    if (!omega.member[h]) continue;
    const double q = q_row[h];
    if (q > out.top) {
      out.second = out.top;
      out.top = q;
      out.arg = h;
    } else if (q > out.second) {
      out.second = q;
    }
    out.sum += q;
    ++out.count;
  }
  return out;
}

/// sum_h mu(h) Q(h) for the epsilon-greedy meta-policy over a set:
/// (1 - eps) max + eps mean.
inline double greedy_value(double top, double sum, std::size_t count, double eps) {
  return (1.0 - eps) * top + eps * (sum / static_cast<double>(count));
}

/// Values of the set with x added and with x removed.
inline std::pair<double, double> with_and_without(std::span<const double> q_row, const SetSummary& sm,
                                                  const InitiationSet& omega, OptionId x, double eps) {
  const double here = greedy_value(sm.top, sm.sum, sm.count, eps);
  if (omega.member[x]) {
    const double top = x == sm.arg ? sm.second : sm.top;
    return {here, greedy_value(top, sm.sum - q_row[x], sm.count - 1, eps)};
  }
  return {greedy_value(std::max(sm.top, q_row[x]), sm.sum + q_row[x], sm.count + 1, eps), here};
}

/// V(s): average over x of the interest-weighted values with x forced in and
/// forced out, minus cbar times the expected number of adjustable options.
inline double estimate_v(std::span<const double> q_row, std::span<const double> interest,
                         const InitiationSet& omega, double eps, double cbar) {
  const SetSummary sm = summarize(q_row, omega);
  const std::size_t k = interest.size();
  if (k == 0) return greedy_value(sm.top, sm.sum, sm.count, eps);
  double mix = 0.0, cost = 0.0;
  for (OptionId x = 0; x < k; ++x) {
    const auto [plus, minus] = with_and_without(q_row, sm, omega, x, eps);
    mix += interest[x] * plus + (1.0 - interest[x]) * minus;
    cost += interest[x];
  }
  return mix / static_cast<double>(k) - cbar * cost;
}

/// M(s,x) = i(1-i) (value with x - value without x - cbar).
inline void estimate_m(std::span<const double> q_row, std::span<const double> interest,
                       const InitiationSet& omega, double eps, double cbar, std::span<double> out) {
  const SetSummary sm = summarize(q_row, omega);
  for (OptionId x = 0; x < interest.size(); ++x) {
    const auto [plus, minus] = with_and_without(q_row, sm, omega, x, eps);
    out[x] = interest[x] * (1.0 - interest[x]) * (plus - minus - cbar);
  }
}

inline std::vector<double> estimate_m(std::span<const double> q_row, std::span<const double> interest,
                                      const InitiationSet& omega, double eps, double cbar) {
  std::vector<double> out(interest.size());
  estimate_m(q_row, interest, omega, eps, cbar, out);
  return out;
}

/// delta(h) = R - Q(S,h) + gamma (1-Z) [V(S') if the shared termination branch
/// fires, else Q(S',h)]. Draws exactly one uniform; returns whether it fired.
inline bool td_errors(double reward, std::span<const double> q_s, std::span<const double> q_next,
                      bool terminated, double beta, double v_next, double gamma, Rng& rng,
                      std::span<double> delta) {
  const bool fired = uniform01(rng) < beta;
  const double keep = terminated ? 0.0 : gamma;
  for (OptionId h = 0; h < q_s.size(); ++h) {
    delta[h] = reward - q_s[h] + keep * (fired ? v_next : q_next[h]);
  }
  return fired;
}

/// Termination increment (before the step size):
/// gamma (Z-1) beta (1-beta) (Q(S',H) - V - eta log((1-beta)/beta)).
inline double termination_increment(double beta, double q_next, double v_next, bool terminated,
                                    double gamma, double eta) {
  const double b = clamp_prob(beta);
  return gamma * ((terminated ? 1.0 : 0.0) - 1.0) * beta * (1.0 - beta) *
         (q_next - v_next - eta * std::log((1.0 - b) / b));
}

struct StepScratch {
  InitiationSet omega;
  InitiationSet omega_next;
  std::vector<double> interest;
  std::vector<double> interest_next;
  std::vector<double> mu;
  std::vector<double> pi;        // pi(.|S,h) for every option, H x A
  std::vector<double> delta;
  std::vector<double> m;
};

/// What happened in one step; handy for traces and tests.
struct StepInfo {
  TaskId task = 0;
  StateId state = 0;
  OptionId option = 0;
  ActionId action = 0;
  double reward = 0.0;
  StateId next_state = 0;
  bool terminated = false;
  bool decision = false;
  bool fired = false;
  double v_next = 0.0;
};

/// One loop body of the learner. Random draws, in order: one uniform per
/// adjustable option for Omega at S; one for the option if a decision is due;
/// one for the action; one for the transition; one per adjustable option for
/// Omega at S'; one for the termination branch; on termination, a task index
/// and a start state.
///
/// The running option is kept until the sampled termination branch fires, so
/// the branch that selects the V target also ends the option.
inline StepInfo fpoc_step(LearnerState& st, const LearnerConfig& cfg, const TabularMdp& mdp, Rng& rng,
                          StepScratch& ws) {
  const std::size_t k = st.tables.k;
  const std::size_t A = mdp.num_actions();
  const std::size_t H = st.num_options;
  const TaskId n = st.task;
  const StateId s = st.state;
  auto& t = st.tables;
  const bool learn_interest = cfg.algorithm == Algorithm::FPOC;

  ws.interest.resize(k);
  ws.interest_next.resize(k);
  ws.mu.resize(H);
  ws.pi.resize(H * A);
  ws.delta.resize(H);
  ws.m.resize(k);

  for (OptionId x = 0; x < k; ++x) ws.interest[x] = t.interests_pinned ? 1.0 : sigmoid(t.interest_pref(s, x));
  sample_initiation_set_into([&](OptionId x) { return ws.interest[x]; }, k, A, rng, ws.omega);

  StepInfo info;
  info.task = n;
  info.state = s;
  info.decision = st.decision_pending;
  auto q_s = st.q_row(n, s);
  if (st.decision_pending) {
    meta_policy(q_s, ws.omega, cfg.epsilon, ws.mu);
    st.option = sample_categorical(ws.mu, rng);
  }
  const OptionId opt = st.option;

  for (OptionId h = 0; h < H; ++h) {
    std::span<double> row(ws.pi.data() + h * A, A);
    if (h < k) {
      softmax(t.pi_row(s, h), row);
    } else {
      std::fill(row.begin(), row.end(), 0.0);
      row[h - k] = 1.0;
    }
  }
  const std::span<const double> pi_opt(ws.pi.data() + opt * A, A);
  const ActionId a = sample_categorical(pi_opt, rng);
  const StepOutcome out = step(mdp, n, s, a, rng);
  const StateId s2 = out.next_state;
  const bool z = out.terminated;

  for (OptionId x = 0; x < k; ++x) {
    ws.interest_next[x] = t.interests_pinned ? 1.0 : sigmoid(t.interest_pref(s2, x));
  }
  sample_initiation_set_into([&](OptionId x) { return ws.interest_next[x]; }, k, A, rng, ws.omega_next);
  const auto q_next = st.q_row(n, s2);
  const double v_next = estimate_v(q_next, ws.interest_next, ws.omega_next, cfg.epsilon, cfg.cbar);

  const double beta = opt < k ? sigmoid(t.beta_pref(s2, opt)) : 1.0;
  const bool fired = td_errors(out.reward, q_s, q_next, z, beta, v_next, cfg.gamma, rng, ws.delta);

  if (opt < k) {
    const double ent = entropy(pi_opt);
    auto prefs = t.pi_row(s, opt);
    for (ActionId b = 0; b < A; ++b) {
      const double p = pi_opt[b];
      const double score = (b == a ? 1.0 : 0.0) - p;
      prefs[b] += cfg.alpha * (score * ws.delta[opt] - cfg.eta * p * (std::log(clamp_prob(p)) + ent));
    }
    if (!z) {
      t.beta_pref(s2, opt) +=
          cfg.alpha * termination_increment(beta, q_next[opt], v_next, z, cfg.gamma, cfg.eta);
    }
  }

  if (learn_interest && k > 0) {
    estimate_m(q_s, ws.interest, ws.omega, cfg.epsilon, cfg.cbar, ws.m);
    for (OptionId x = 0; x < k; ++x) {
      const double i = ws.interest[x];
      const double ic = clamp_prob(i);
      const double reg = cfg.eta * i * (1.0 - i) * std::log((1.0 - ic) / ic);
      t.interest_pref(s, x) += cfg.alpha * cfg.gamma * st.beta_prev * (ws.m[x] + reg);
    }
  }

  const double base = pi_opt[a];
  for (OptionId h = 0; h < H; ++h) {
    const double ratio = ws.pi[h * A + a] / base;
    const double rho = cfg.is_clip == IsClip::Max ? std::max(1.0, ratio) : std::min(1.0, ratio);
    q_s[h] += cfg.alpha * rho * ws.delta[h];
  }

  st.beta_prev = beta;
  st.decision_pending = fired;
  ++st.step_count;

  info.option = opt;
  info.action = a;
  info.reward = out.reward;
  info.next_state = s2;
  info.terminated = z;
  info.fired = fired;
  info.v_next = v_next;

  if (z) {
    std::tie(st.task, st.state) = sample_start(mdp, rng);
    st.beta_prev = 1.0;
    st.decision_pending = true;
  } else {
    st.state = s2;
  }
  return info;
}

inline StepInfo fpoc_step(LearnerState& st, const LearnerConfig& cfg, const TabularMdp& mdp, Rng& rng) {
  StepScratch ws;
  return fpoc_step(st, cfg, mdp, rng, ws);
}

// ---------------------------------------------------------------------------
// Evaluation and training

struct EvalResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  double mean_return = 0.0;
  double mean_decisions = 0.0;
  std::size_t truncated = 0;
};

/// Greedy episodes with no updates; tasks uniform, starts from d0.
inline EvalResult evaluate(const LearnerState& st, const LearnerConfig& cfg, const TabularMdp& mdp,
                           Rng& rng) {
  EvalResult r;
  if (cfg.eval_episodes == 0) return r;
  const OptionSet options = OptionSet::from_params(st.tables);
  const std::size_t cap = cfg.eval_max_steps ? cfg.eval_max_steps : 10 * mdp.num_states();
  double sum = 0.0, sum_sq = 0.0, ret = 0.0, decisions = 0.0;
  for (std::size_t e = 0; e < cfg.eval_episodes; ++e) {
    const TaskId n = uniform_index(mdp.num_tasks(), rng);
    const EpisodeTrace trace =
        run_episode(mdp, n, options, st.q_task(n), 0.0, RunMode::Greedy, rng, cap, std::nullopt, false);
    const double g = compound_return(trace, cfg.eval_cost);
    sum += g;
    sum_sq += g * g;
    ret += trace.ret;
    decisions += static_cast<double>(trace.decisions());
    if (trace.step_limit_exceeded) ++r.truncated;
  }
  const double count = static_cast<double>(cfg.eval_episodes);
  r.mean = sum / count;
  r.mean_return = ret / count;
  r.mean_decisions = decisions / count;
  if (cfg.eval_episodes > 1) {
    const double var = std::max(0.0, (sum_sq - count * r.mean * r.mean) / (count - 1.0));
    r.stderr_ = std::sqrt(var / count);
  }
  return r;
}

struct CurveRow {
  std::uint64_t step = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct TrainResult {
  LearnerState state;
  std::vector<CurveRow> curve;
};

/// Runs total_steps learner steps, evaluating every eval_every steps on a
/// separate stream seeded once from `rng`.
inline TrainResult train(const LearnerConfig& cfg, const TabularMdp& mdp, Rng& rng,
                         const std::function<void(const CurveRow&)>& on_eval = {}) {
  cfg.validate();
  TrainResult result;
  Rng eval_rng(rng());
  result.state = make_learner_state(cfg, mdp, rng);
  StepScratch ws;
  for (std::uint64_t t = 1; t <= cfg.total_steps; ++t) {
    fpoc_step(result.state, cfg, mdp, rng, ws);
    if (t % cfg.eval_every == 0) {
      const EvalResult e = evaluate(result.state, cfg, mdp, eval_rng);
      result.curve.push_back({t, e.mean, e.stderr_});
      if (on_eval) on_eval(result.curve.back());
    }
  }
  return result;
}

/// Mean of the last `count` curve points (fewer if the curve is shorter).
inline double tail_mean(const std::vector<CurveRow>& curve, std::size_t count = 5) {
  if (curve.empty()) return std::nan("");
  const std::size_t take = std::min(count, curve.size());
  double total = 0.0;
  for (std::size_t i = curve.size() - take; i < curve.size(); ++i) total += curve[i].mean;
  return total / static_cast<double>(take);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json learner_config_to_json(const LearnerConfig& c) {
  return {{"k", c.k},
          {"alpha", c.alpha},
          {"epsilon", c.epsilon},
          {"cbar", c.cbar},
          {"eta", c.eta},
          {"gamma", c.gamma},
          {"algorithm", to_string(c.algorithm)},
          {"isClip", to_string(c.is_clip)},
          {"totalSteps", c.total_steps},
          {"evalEvery", c.eval_every},
          {"evalEpisodes", c.eval_episodes},
          {"evalCost", c.eval_cost},
          {"evalMaxSteps", c.eval_max_steps}};
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "maoc" || s == "MAOC") return Algorithm::MAOC;
  if (s == "fpoc" || s == "FPOC") return Algorithm::FPOC;
  throw Error(Errc::InvalidConfig, "unknown algorithm '" + s + "'");
}

inline IsClip parse_is_clip(const std::string& s) {
  if (s == "max") return IsClip::Max;
  if (s == "min") return IsClip::Min;
  throw Error(Errc::InvalidConfig, "unknown is-clip '" + s + "'");
}

inline LearnerConfig learner_config_from_json(const nlohmann::json& j) {
  LearnerConfig c;
  c.k = j.value("k", c.k);
  c.alpha = j.value("alpha", c.alpha);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.cbar = j.value("cbar", c.cbar);
  c.eta = j.value("eta", c.eta);
  c.gamma = j.value("gamma", c.gamma);
  c.algorithm = parse_algorithm(j.value("algorithm", to_string(c.algorithm)));
  c.is_clip = parse_is_clip(j.value("isClip", to_string(c.is_clip)));
  c.total_steps = j.value("totalSteps", c.total_steps);
  c.eval_every = j.value("evalEvery", c.eval_every);
  c.eval_episodes = j.value("evalEpisodes", c.eval_episodes);
  c.eval_cost = j.value("evalCost", c.eval_cost);
  c.eval_max_steps = j.value("evalMaxSteps", c.eval_max_steps);
  return c;
}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json learner_state_to_json(const LearnerState& st) {
  return {{"version", kCheckpointVersion},
          {"tasks", st.num_tasks},
          {"states", st.num_states},
          {"options", st.num_options},
          {"q", st.q},
          {"tables", params_to_json(st.tables)},
          {"betaPrev", st.beta_prev},
          {"task", st.task},
          {"state", st.state},
          {"option", st.option},
          {"decisionPending", st.decision_pending},
          {"stepCount", st.step_count}};
}

inline LearnerState learner_state_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(Errc::Format, "unsupported checkpoint version");
    }
    LearnerState st;
    st.num_tasks = j.at("tasks").get<std::size_t>();
    st.num_states = j.at("states").get<std::size_t>();
    st.num_options = j.at("options").get<std::size_t>();
    st.q = j.at("q").get<std::vector<double>>();
    st.tables = params_from_json(j.at("tables"));
    st.beta_prev = j.at("betaPrev").get<double>();
    st.task = j.at("task").get<TaskId>();
    st.state = j.at("state").get<StateId>();
    st.option = j.at("option").get<OptionId>();
    st.decision_pending = j.at("decisionPending").get<bool>();
    st.step_count = j.at("stepCount").get<std::uint64_t>();
    if (st.q.size() != st.num_tasks * st.num_states * st.num_options ||
        st.tables.num_states != st.num_states || st.tables.num_options() != st.num_options) {
      throw Error(Errc::Format, "checkpoint tables do not match their header");
    }
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad checkpoint: ") + e.what());
  }
}

}  // namespace optdisc
