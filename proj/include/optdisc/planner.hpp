#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/executor.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/option_model.hpp"
#include "optdisc/options.hpp"
#include "optdisc/oracle.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

/// Optimal state values per task, stored N x S.
struct FlatValues {
  std::size_t num_states = 0;
  std::vector<double> v;
  std::size_t iterations = 0;

  double at(TaskId n, StateId s) const { return v[n * num_states + s]; }
};

/// One synchronous Bellman optimality sweep for task n. Terminal states stay at 0.
inline void flat_bellman_sweep(const TabularMdp& mdp, TaskId n, std::span<const double> v,
                               std::span<double> out) {
  const std::size_t S = mdp.num_states();
  for (StateId s = 0; s < S; ++s) {
    if (mdp.is_terminal(n, s)) {
      out[s] = 0.0;
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      double value = 0.0;
      for (const auto& o : mdp.outcomes(n, s, a)) {
        value += o.prob * (o.reward + (mdp.is_terminal(n, o.next) ? 0.0 : mdp.gamma() * v[o.next]));
      }
      best = std::max(best, value);
    }
    out[s] = best;
  }
}

inline FlatValues flat_value_iteration(const TabularMdp& mdp, double tol,
                                       std::size_t max_iters = 1000000) {
  if (!(tol > 0.0)) throw Error(Errc::InvalidArgument, "tolerance must be positive");
  const std::size_t S = mdp.num_states();
  FlatValues out;
  out.num_states = S;
  out.v.assign(mdp.num_tasks() * S, 0.0);
  std::vector<double> next(S);
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    std::span<double> v(out.v.data() + n * S, S);
    std::size_t it = 0;
    for (;;) {
      if (it == max_iters) throw Error(Errc::NonConvergent, "flat value iteration hit the iteration cap");
      flat_bellman_sweep(mdp, n, v, next);
      ++it;
      double change = 0.0;
      for (StateId s = 0; s < S; ++s) change = std::max(change, std::abs(next[s] - v[s]));
      std::copy(next.begin(), next.end(), v.begin());
      if (change < tol) break;
    }
    out.iterations = std::max(out.iterations, it);
  }
  return out;
}

/// Intra-option model learning from a uniformly random behaviour policy.
/// Episodes follow the usual protocol: task uniform, start state from d0,
/// reset on termination. Every option whose policy could have produced the
/// action is updated with importance ratio pi(A|S,h) / (1/|A|).
inline OptionModel learn_option_model(const TabularMdp& mdp, const OptionSet& options,
                                      std::size_t steps, Rng& rng, double alpha = 0.1) {
  const std::size_t S = mdp.num_states();
  const std::size_t H = options.num_options();
  const std::size_t A = mdp.num_actions();
  const double gamma = mdp.gamma();
  OptionModel model(mdp.num_tasks(), S, H, ModelSource::Learned);
  if (steps == 0) return model;
  auto [n, s] = sample_start(mdp, rng);
  std::vector<double> target(S);
  for (std::size_t t = 0; t < steps; ++t) {
    const ActionId a = uniform_index(A, rng);
    const StepOutcome out = step(mdp, n, s, a, rng);
    for (OptionId h = 0; h < H; ++h) {
      const double pa = options.policy(s, h)[a];
      if (pa == 0.0) continue;
      const double rho = pa * static_cast<double>(A);
      const double stop = out.terminated ? 1.0 : options.termination(out.next_state, h);
      const double cont = gamma * (1.0 - stop);
      double& r = model.reward(n, s, h);
      r += alpha * rho * (out.reward + cont * model.reward(n, out.next_state, h) - r);
      auto row = model.transition(n, s, h);
      const auto next_row = model.transition(n, out.next_state, h);
      for (StateId x = 0; x < S; ++x) target[x] = cont * next_row[x];
      target[out.next_state] += gamma * stop;
      for (StateId x = 0; x < S; ++x) row[x] += alpha * rho * (target[x] - row[x]);
    }
    if (out.terminated) {
      std::tie(n, s) = sample_start(mdp, rng);
    } else {
      s = out.next_state;
    }
  }
  return model;
}

/// One frozen initiation-set sample per state.
inline std::vector<InitiationSet> sample_plan_sets(const OptionSet& options, Rng& rng) {
  std::vector<InitiationSet> sets(options.num_states());
  for (StateId s = 0; s < options.num_states(); ++s) sets[s] = sample_initiation_set(options, s, rng);
  return sets;
}

inline std::vector<InitiationSet> sample_plan_sets(const ParamTables& t, Rng& rng) {
  std::vector<InitiationSet> sets(t.num_states);
  for (StateId s = 0; s < t.num_states; ++s) sets[s] = sample_initiation_set(t, s, rng);
  return sets;
}

inline std::uint64_t operation_count(std::uint64_t iterations, std::span<const std::size_t> omega_sizes,
                                     std::uint64_t num_states, std::uint64_t num_tasks) {
  std::uint64_t total = 0;
  for (std::size_t k : omega_sizes) total += k;
  return iterations * total * num_states * num_tasks;
}

struct PlanReport {
  std::size_t iterations = 0;
  std::vector<std::size_t> omega_sizes;
  std::uint64_t total_operations = 0;
  std::vector<double> error_trace;
  bool converged = false;
  std::size_t num_states = 0;
  std::size_t num_tasks = 0;
  ModelSource model_source = ModelSource::Exact;

  double mean_omega_size() const {
    double total = 0.0;
    for (std::size_t k : omega_sizes) total += static_cast<double>(k);
    return omega_sizes.empty() ? 0.0 : total / static_cast<double>(omega_sizes.size());
  }
};

struct PlanResult {
  std::vector<double> q;  // N x S x H
  PlanReport report;
};

struct PlanSettings {
  double err_tol = 0.1;
  std::size_t max_iters = 100;
  /// Initial Q for non-terminal states; NaN selects -(|S| * max|r|).
  double init = std::numeric_limits<double>::quiet_NaN();
};

/// Observer called after every sweep with the full N x S x H table.
using SweepObserver = std::function<void(std::size_t sweep, const std::vector<double>& q)>;

/// Synchronous option-value iteration over frozen initiation sets. Stops after
/// the first sweep whose mean value error against v* drops below err_tol.
inline PlanResult option_value_iteration(const OptionModel& model, const std::vector<InitiationSet>& sets,
                                         const TabularMdp& mdp, const FlatValues& vstar,
                                         const PlanSettings& settings, const SweepObserver& observer = {}) {
  const std::size_t N = mdp.num_tasks();
  const std::size_t S = mdp.num_states();
  const std::size_t H = model.num_options;
  if (model.num_tasks != N || model.num_states != S || sets.size() != S) {
    throw Error(Errc::InvalidArgument, "model, initiation sets and MDP disagree in shape");
  }
  for (const auto& omega : sets) {
    if (omega.count == 0 || omega.member.size() != H) {
      throw Error(Errc::EmptyInitiationSet, "every state needs a non-empty initiation set over H");
    }
  }
  const double init =
      std::isnan(settings.init) ? -static_cast<double>(S) * mdp.max_abs_reward() : settings.init;

  // Sparse copy of the model rows that planning touches.
  struct Entry {
    StateId x;
    double p;
  };
  std::vector<std::vector<Entry>> rows(N * S * H);
  for (TaskId n = 0; n < N; ++n) {
    for (StateId s = 0; s < S; ++s) {
      if (mdp.is_terminal(n, s)) continue;
      for (OptionId h = 0; h < H; ++h) {
        if (!sets[s].member[h]) continue;
        auto& row = rows[(n * S + s) * H + h];
        const auto p = model.transition(n, s, h);
        for (StateId x = 0; x < S; ++x) {
          if (p[x] != 0.0) row.push_back({x, p[x]});
        }
      }
    }
  }

  PlanResult result;
  result.q.assign(N * S * H, init);
  for (TaskId n = 0; n < N; ++n) {
    for (StateId s = 0; s < S; ++s) {
      if (mdp.is_terminal(n, s)) std::fill_n(result.q.begin() + (n * S + s) * H, H, 0.0);
    }
  }
  auto& report = result.report;
  report.num_states = S;
  report.num_tasks = N;
  report.model_source = model.source;
  for (const auto& omega : sets) report.omega_sizes.push_back(omega.count);

  std::vector<double> v(N * S);
  auto refresh_values = [&]() {
    for (TaskId n = 0; n < N; ++n) {
      for (StateId s = 0; s < S; ++s) {
        if (mdp.is_terminal(n, s)) {
          v[n * S + s] = 0.0;
          continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        for (OptionId h = 0; h < H; ++h) {
          if (sets[s].member[h]) best = std::max(best, result.q[(n * S + s) * H + h]);
        }
        v[n * S + s] = best;
      }
    }
  };

  refresh_values();
  for (std::size_t sweep = 1; sweep <= settings.max_iters; ++sweep) {
    for (TaskId n = 0; n < N; ++n) {
      for (StateId s = 0; s < S; ++s) {
        if (mdp.is_terminal(n, s)) continue;
        for (OptionId h = 0; h < H; ++h) {
          if (!sets[s].member[h]) continue;
          double value = model.reward(n, s, h);
          for (const auto& e : rows[(n * S + s) * H + h]) value += e.p * v[n * S + e.x];
          result.q[(n * S + s) * H + h] = value;
        }
      }
    }
    refresh_values();
    if (observer) observer(sweep, result.q);
    double error = 0.0;
    for (TaskId n = 0; n < N; ++n) {
      for (StateId s = 0; s < S; ++s) error += vstar.at(n, s) - v[n * S + s];
    }
    error /= static_cast<double>(N * S);
    report.error_trace.push_back(error);
    report.iterations = sweep;
    if (error < settings.err_tol) {
      report.converged = true;
      break;
    }
  }
  report.total_operations = operation_count(report.iterations, report.omega_sizes, S, N);
  return result;
}

/// Full testing-phase pipeline: model (exact or learned), frozen initiation
/// sets, option-value iteration against per-task optimal values.
struct PlanPipeline {
  ModelSource source = ModelSource::Exact;
  std::size_t model_steps = 1000000;
  double model_alpha = 0.1;
  PlanSettings settings;
};

inline PlanReport plan_with_options(const TabularMdp& mdp, const OptionSet& options,
                                    const PlanPipeline& pipeline, Rng& rng) {
  const OptionModel model = pipeline.source == ModelSource::Exact
                                ? exact_option_model(mdp, options)
                                : learn_option_model(mdp, options, pipeline.model_steps, rng,
                                                     pipeline.model_alpha);
  const FlatValues vstar = flat_value_iteration(mdp, 1e-10);
  const auto sets = sample_plan_sets(options, rng);
  return option_value_iteration(model, sets, mdp, vstar, pipeline.settings).report;
}

inline nlohmann::json plan_report_to_json(const PlanReport& r) {
  return {{"iterations", r.iterations},
          {"omegaSizes", r.omega_sizes},
          {"meanOmegaSize", r.mean_omega_size()},
          {"totalOperations", r.total_operations},
          {"errorTrace", r.error_trace},
          {"converged", r.converged},
          {"states", r.num_states},
          {"tasks", r.num_tasks},
          {"modelSource", to_string(r.model_source)}};
}

}  // namespace optdisc
