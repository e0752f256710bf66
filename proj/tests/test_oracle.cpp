#include <gtest/gtest.h>

#include <cmath>

#include "optdisc/executor.hpp"
#include "optdisc/fixtures.hpp"
#include "optdisc/oracle.hpp"

using namespace optdisc;

namespace {

OptionSet random_options(std::size_t S, std::size_t k, std::size_t A, Rng& rng) {
  ParamTables t(S, k, A);
  randomize_params(t, -1.5, 1.5, rng);
  return OptionSet::from_params(t);
}

}  // namespace

TEST(OptionModel, PrimitiveIsOneStepModel) {
  Rng rng(1);
  const TabularMdp mdp = random_fixture(5, 2, 2, 0.9, rng);
  const OptionSet o = OptionSet::primitives_only(5, 2);
  const OptionModel m = exact_option_model(mdp, o);
  for (TaskId n = 0; n < 2; ++n) {
    for (StateId s = 0; s < 5; ++s) {
      for (ActionId a = 0; a < 2; ++a) {
        double r = 0.0;
        std::vector<double> p(5, 0.0);
        for (const auto& out : mdp.outcomes(n, s, a)) {
          r += out.prob * out.reward;
          p[out.next] += 0.9 * out.prob;
        }
        EXPECT_NEAR(m.reward(n, s, a), r, 1e-12);
        for (StateId x = 0; x < 5; ++x) EXPECT_NEAR(m.transition(n, s, a)[x], p[x], 1e-12);
      }
    }
  }
}

// Monte Carlo rollouts of the option give the same discounted reward and
// discounted end-state distribution as the closed form.
TEST(OptionModel, MatchesRollouts) {
  Rng rng(2);
  const TabularMdp mdp = random_fixture(4, 2, 1, 0.9, rng);
  const OptionSet o = random_options(4, 1, 2, rng);
  const OptionModel m = exact_option_model(mdp, o);
  const int runs = 200000;
  for (StateId s0 = 0; s0 < 3; ++s0) {
    double r = 0.0;
    std::vector<double> p(4, 0.0);
    for (int i = 0; i < runs; ++i) {
      StateId s = s0;
      double disc = 1.0;
      for (;;) {
        const ActionId a = sample_categorical(o.policy(s, 0), rng);
        const StepOutcome out = step(mdp, 0, s, a, rng);
        r += disc * out.reward / runs;
        disc *= 0.9;
        if (out.terminated || bernoulli(o.termination(out.next_state, 0), rng)) {
          p[out.next_state] += disc / runs;
          break;
        }
        s = out.next_state;
      }
    }
    EXPECT_NEAR(m.reward(0, s0, 0), r, 0.01);
    for (StateId x = 0; x < 4; ++x) EXPECT_NEAR(m.transition(0, s0, 0)[x], p[x], 0.005);
  }
}

TEST(OptionModel, NeverTerminatingLoopIsSingular) {
  const Fig1Fixture f = fig1_smdp();
  OptionSet o(4, 1, 2);
  const std::vector<double> stay{0.0, 1.0};
  for (StateId s = 0; s < 4; ++s) {
    o.set_policy(s, 0, stay);
    o.set_termination(s, 0, 0.0);
  }
  try {
    exact_option_model(f.mdp, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularSystem);
  }
}

TEST(InitiationProbability, SumsToOneWithComplement) {
  const std::vector<double> i{0.2, 0.7, 0.5};
  double total = 0.0;
  for (unsigned mask = 0; mask < 8; ++mask) total += initiation_probability(i, mask);
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_NEAR(initiation_probability(i, 0b010), 0.8 * 0.7 * 0.5, 1e-15);
  const InitiationSet omega = initiation_from_mask(0b101, 3, 2);
  EXPECT_EQ(omega.count, 4u);
  EXPECT_FALSE(omega.contains(1));
}

TEST(InitiationProbability, PowerSetLimit) {
  EXPECT_NO_THROW(require_enumerable(12));
  try {
    require_enumerable(13);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PowerSetTooLarge);
  }
}

TEST(Objective, FourNodeDepictedPolicy) {
  const Fig1Fixture f = fig1_smdp();
  std::vector<double> q(8, 0.0);
  for (StateId s = 0; s < 4; ++s) q[s * 2] = 1.0;
  const auto meta = epsilon_greedy_meta_policy(q, 4, 2, 0.0);
  const ExactValues v0 = exact_objective(f.mdp, f.options, meta, 0.0);
  EXPECT_NEAR(v0.j, -2.5, 1e-12);
  // Each decision considers both primitives.
  const ExactValues v1 = exact_objective(f.mdp, f.options, meta, 1.0);
  EXPECT_NEAR(v1.j_tilde, -5.0, 1e-12);
  EXPECT_NEAR(v1.j, -7.5, 1e-12);
}

// J equals the expected compound return of call-and-return rollouts.
TEST(Objective, MatchesMonteCarloCompoundReturn) {
  Rng rng(6);
  const TabularMdp mdp = random_fixture(5, 2, 1, 1.0, rng);
  ParamTables t(5, 2, 2);
  randomize_params(t, -1.0, 1.0, rng);
  const OptionSet o = OptionSet::from_params(t);
  std::vector<double> q(5 * 4);
  for (double& x : q) x = uniform01(rng);
  const double eps = 0.2, c = 0.2;
  const ExactValues ex = exact_objective(mdp, o, epsilon_greedy_meta_policy(q, 5, 4, eps), c);
  const int episodes = 400000;
  double sum = 0.0, sum_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const EpisodeTrace tr = run_episode(mdp, 0, o, q, eps, RunMode::Learn, rng, 100000, std::nullopt, false);
    const double g = compound_return(tr, c);
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
  EXPECT_NEAR(mean, ex.j, 4 * se);
}

TEST(Objective, TasksAreSummed) {
  Rng rng(7);
  const TabularMdp mdp = random_fixture(4, 2, 2, 0.9, rng);
  const OptionSet o = random_options(4, 1, 2, rng);
  MetaPreference pref(2, 4, 3, 1.0);
  const ExactValues ex = exact_objective(mdp, o, pref, 0.5);
  double j = 0.0;
  for (TaskId n = 0; n < 2; ++n) {
    for (StateId s = 0; s < 4; ++s) {
      j += mdp.initial()[s] * (ex.tasks[n].v_bar[s] + 0.5 * ex.tasks[n].v_tilde[s]);
    }
  }
  EXPECT_NEAR(ex.j, j, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(10);
  for (int f = 0; f < 4; ++f) {
    const std::size_t S = 3 + f % 2, k = 1 + f % 2, N = 1 + f / 2;
    const TabularMdp mdp = random_fixture(S, 2, N, 0.9, rng);
    ParamTables t(S, k, 2);
    randomize_params(t, -1.0, 1.0, rng);
    MetaParams meta(N, S, t.num_options());
    randomize_meta(meta, -1.0, 1.0, rng);
    const double c = f * 0.3;
    const auto g = exact_gradient(mdp, t, meta, c).flat();
    const auto fd = finite_diff_gradient(mdp, t, meta, c, 1e-5).flat();
    ASSERT_EQ(g.size(), fd.size());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-7) << "component " << i;
  }
}

TEST(Gradient, UndiscountedEpisodicFixture) {
  Rng rng(12);
  const TabularMdp mdp = random_fixture(4, 2, 1, 1.0, rng);
  ParamTables t(4, 2, 2);
  randomize_params(t, -1.0, 1.0, rng);
  MetaParams meta(1, 4, 4);
  randomize_meta(meta, -1.0, 1.0, rng);
  const auto g = exact_gradient(mdp, t, meta, 0.2).flat();
  const auto fd = finite_diff_gradient(mdp, t, meta, 0.2, 1e-5).flat();
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-7);
}

TEST(Gradient, ShapeMismatchRejected) {
  Rng rng(3);
  const TabularMdp mdp = random_fixture(4, 2, 1, 0.9, rng);
  ParamTables t(4, 1, 2);
  MetaParams meta(2, 4, 3);
  EXPECT_THROW(exact_gradient(mdp, t, meta, 0.0), Error);
}

TEST(Estimators, ExactRowsAgreeWithNaiveExpectation) {
  // Enumerated E[naive_m] equals exact_m_row.
  const std::vector<double> q{-3.0, -2.5, -4.0, -3.5, -2.0, -5.0};
  const std::vector<double> i{0.3, 0.8};
  const auto exact = exact_m_row(q, i, 4, 0.1, 0.2);
  std::vector<double> expect(2, 0.0);
  for (unsigned mask = 0; mask < 4; ++mask) {
    const auto m = naive_m(q, i, initiation_from_mask(mask, 2, 4), 0.1, 0.2);
    for (int x = 0; x < 2; ++x) expect[x] += initiation_probability(i, mask) * m[x];
  }
  for (int x = 0; x < 2; ++x) EXPECT_NEAR(exact[x], expect[x], 1e-12);
}
