#pragma once

#include <vector>

#include "optdisc/mdp.hpp"
#include "optdisc/option_model.hpp"
#include "optdisc/options.hpp"
#include "optdisc/oracle.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

/// Four-node example: a left state whose best option reaches either middle
/// state with equal probability, two middle states and a terminal square.
/// Options are modelled as primitive actions of a small MDP; action 0 is the
/// depicted option everywhere.
struct Fig1Fixture {
  static constexpr StateId kLeft = 0;
  static constexpr StateId kNear = 1;  // one option away from the terminal
  static constexpr StateId kFar = 2;   // two options away
  static constexpr StateId kTerminal = 3;

  TabularMdp mdp;
  OptionSet options;
  OptionModel model;
  std::vector<ActionId> depicted;
};

inline Fig1Fixture fig1_smdp() {
  constexpr std::size_t S = 4, A = 2;
  std::vector<std::vector<Outcome>> out(S * A);
  auto at = [](StateId s, ActionId a) { return s * A + a; };
  out[at(Fig1Fixture::kLeft, 0)] = {{Fig1Fixture::kNear, -1.0, 0.5}, {Fig1Fixture::kFar, -1.0, 0.5}};
  out[at(Fig1Fixture::kLeft, 1)] = {{Fig1Fixture::kFar, -1.0, 1.0}};
  out[at(Fig1Fixture::kNear, 0)] = {{Fig1Fixture::kTerminal, -1.0, 1.0}};
  out[at(Fig1Fixture::kNear, 1)] = {{Fig1Fixture::kFar, -1.0, 1.0}};
  out[at(Fig1Fixture::kFar, 0)] = {{Fig1Fixture::kNear, -1.0, 1.0}};
  out[at(Fig1Fixture::kFar, 1)] = {{Fig1Fixture::kFar, -1.0, 1.0}};
  out[at(Fig1Fixture::kTerminal, 0)] = {{Fig1Fixture::kTerminal, 0.0, 1.0}};
  out[at(Fig1Fixture::kTerminal, 1)] = {{Fig1Fixture::kTerminal, 0.0, 1.0}};
  std::vector<double> d0(S, 0.0);
  d0[Fig1Fixture::kLeft] = 1.0;
  Fig1Fixture f;
  f.mdp = TabularMdp(S, A, 1, std::move(out), {{Fig1Fixture::kTerminal}}, std::move(d0), 1.0);
  f.options = OptionSet::primitives_only(S, A);
  f.model = exact_option_model(f.mdp, f.options);
  f.depicted.assign(S, 0);
  return f;
}

/// Small random episodic MDP for oracle checks. State S-1-n is terminal for
/// task n; every non-terminal (state, action) keeps at least 10% mass on
/// reaching the task's terminal, so any policy terminates.
inline TabularMdp random_fixture(std::size_t S, std::size_t A, std::size_t N, double gamma, Rng& rng) {
  if (S < N + 1) throw Error(Errc::InvalidArgument, "need more states than tasks");
  std::vector<std::vector<Outcome>> outcomes(N * S * A);
  std::vector<std::vector<StateId>> terminals(N);
  for (TaskId n = 0; n < N; ++n) {
    const StateId goal = S - 1 - n;
    terminals[n] = {goal};
    for (StateId s = 0; s < S; ++s) {
      for (ActionId a = 0; a < A; ++a) {
        auto& row = outcomes[(n * S + s) * A + a];
        const double to_goal = 0.1 + 0.3 * uniform01(rng);
        const StateId x = uniform_index(S, rng);
        const StateId y = uniform_index(S, rng);
        const double split = uniform01(rng);
        row.push_back({goal, -1.0 + 2.0 * uniform01(rng), to_goal});
        row.push_back({x, -1.0 + 2.0 * uniform01(rng), (1.0 - to_goal) * split});
        row.push_back({y, -1.0 + 2.0 * uniform01(rng), (1.0 - to_goal) * (1.0 - split)});
      }
    }
  }
  std::vector<double> d0(S);
  double total = 0.0;
  for (double& p : d0) {
    p = 0.2 + uniform01(rng);
    total += p;
  }
  for (double& p : d0) p /= total;
  return TabularMdp(S, A, N, std::move(outcomes), std::move(terminals), std::move(d0), gamma);
}

/// Fills every preference table uniformly in [lo, hi].
inline void randomize_params(ParamTables& t, double lo, double hi, Rng& rng) {
  for (double& x : t.w_pi) x = lo + (hi - lo) * uniform01(rng);
  for (double& x : t.w_beta) x = lo + (hi - lo) * uniform01(rng);
  for (double& x : t.w_interest) x = lo + (hi - lo) * uniform01(rng);
}

inline void randomize_meta(MetaParams& m, double lo, double hi, Rng& rng) {
  for (double& x : m.theta) x = lo + (hi - lo) * uniform01(rng);
}

}  // namespace optdisc
