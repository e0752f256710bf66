#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "optdisc/fixtures.hpp"
#include "optdisc/learner.hpp"
#include "optdisc/oracle.hpp"
#include "optdisc/planner.hpp"

using namespace optdisc;

namespace {

double brute_value(std::span<const double> q, const InitiationSet& omega, double eps) {
  const auto mu = meta_policy(q, omega, eps);
  double v = 0.0;
  for (std::size_t h = 0; h < q.size(); ++h) v += mu[h] * q[h];
  return v;
}

LearnerConfig small_config(Algorithm alg, std::size_t k) {
  LearnerConfig c;
  c.algorithm = alg;
  c.k = k;
  c.alpha = 0.1;
  c.eta = 0.05;
  c.total_steps = 0;
  c.eval_every = 1000;
  c.eval_episodes = 20;
  return c;
}

}  // namespace

TEST(Estimators, GreedyValueMatchesMetaPolicy) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> q(7);
    for (auto& x : q) x = std::floor(uniform01(rng) * 5) - 4;  // ties are common
    InitiationSet omega;
    omega.member.assign(7, 1);
    omega.count = 7;
    for (OptionId h = 0; h < 3; ++h) {
      if (uniform01(rng) < 0.5) {
        omega.member[h] = 0;
        --omega.count;
      }
    }
    const double eps = uniform01(rng);
    const SetSummary sm = summarize(q, omega);
    EXPECT_NEAR(greedy_value(sm.top, sm.sum, sm.count, eps), brute_value(q, omega, eps), 1e-12);
    for (OptionId x = 0; x < 3; ++x) {
      const auto [plus, minus] = with_and_without(q, sm, omega, x, eps);
      InitiationSet in = omega, out = omega;
      if (!in.member[x]) ++in.count;
      in.member[x] = 1;
      if (out.member[x]) --out.count;
      out.member[x] = 0;
      EXPECT_NEAR(plus, brute_value(q, in, eps), 1e-12);
      EXPECT_NEAR(minus, brute_value(q, out, eps), 1e-12);
    }
  }
}

// Averaging the estimators over every initiation set, weighted by its
// probability, gives the enumerated targets exactly.
TEST(Estimators, UnbiasedByEnumeration) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 1 + t % 4, A = 4;
    std::vector<double> q(k + A), interest(k);
    for (auto& x : q) x = -10 * uniform01(rng);
    for (auto& x : interest) x = uniform01(rng);
    const double eps = 0.1, cbar = 0.2 * (t % 3);
    double v = 0.0;
    std::vector<double> m(k, 0.0);
    for (unsigned mask = 0; mask < (1U << k); ++mask) {
      const double pr = initiation_probability(interest, mask);
      const InitiationSet omega = initiation_from_mask(mask, k, A);
      v += pr * estimate_v(q, interest, omega, eps, cbar);
      const auto row = estimate_m(q, interest, omega, eps, cbar);
      for (std::size_t x = 0; x < k; ++x) m[x] += pr * row[x];
    }
    EXPECT_NEAR(v, exact_v_row(q, interest, A, eps, cbar), 1e-10);
    const auto exact = exact_m_row(q, interest, A, eps, cbar);
    for (std::size_t x = 0; x < k; ++x) EXPECT_NEAR(m[x], exact[x], 1e-10);
  }
}

TEST(Estimators, PrimitivesOnlyValue) {
  const std::vector<double> q{-3.0, -1.0, -2.0, -6.0};
  InitiationSet omega;
  omega.member.assign(4, 1);
  omega.count = 4;
  const std::vector<double> none;
  EXPECT_DOUBLE_EQ(estimate_v(q, none, omega, 0.1, 0.2), 0.9 * -1.0 + 0.1 * (-12.0 / 4));
}

TEST(Estimators, MVanishesAtPinnedInterest) {
  const std::vector<double> q{-3.0, -1.0, -2.0, -6.0, -4.0};
  const std::vector<double> ones{1.0};
  const InitiationSet omega = initiation_from_mask(1, 1, 4);
  EXPECT_EQ(estimate_m(q, ones, omega, 0.1, 0.2)[0], 0.0);
}

TEST(TdErrors, SharedBranchAndSingleDraw) {
  const std::vector<double> qs{-1.0, -2.0}, qn{-3.0, -5.0};
  std::vector<double> delta(2);
  Rng a(4), b(4);
  const bool fired = td_errors(-1.0, qs, qn, false, 0.5, -4.0, 0.9, a, delta);
  EXPECT_EQ(fired, uniform01(b) < 0.5);
  EXPECT_EQ(a(), b());
  for (int h = 0; h < 2; ++h) {
    const double boot = fired ? -4.0 : qn[h];
    EXPECT_DOUBLE_EQ(delta[h], -1.0 - qs[h] + 0.9 * boot);
  }
  td_errors(-1.0, qs, qn, true, 0.5, -4.0, 0.9, a, delta);
  EXPECT_DOUBLE_EQ(delta[0], 0.0);
  EXPECT_DOUBLE_EQ(delta[1], 1.0);
}

TEST(Termination, IncrementIdentity) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const double beta = 0.01 + 0.98 * uniform01(rng);
    const double q = -5 * uniform01(rng), v = -5 * uniform01(rng);
    const double gamma = 0.5 + 0.5 * uniform01(rng), eta = uniform01(rng);
    const double split = gamma * -1.0 * beta * (1 - beta) * (q - v) + gamma * eta * entropy_grad_binary(beta);
    EXPECT_NEAR(termination_increment(beta, q, v, false, gamma, eta), split, 1e-12);
    EXPECT_EQ(termination_increment(beta, q, v, true, gamma, eta), 0.0);
  }
}

TEST(Termination, PushesTowardStoppingWhenContinuingIsWorse) {
  EXPECT_GT(termination_increment(0.5, -10.0, -2.0, false, 1.0, 0.0), 0.0);
  EXPECT_LT(termination_increment(0.5, -1.0, -2.0, false, 1.0, 0.0), 0.0);
}

TEST(Step, DeterministicGivenSeed) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  const LearnerConfig cfg = small_config(Algorithm::FPOC, 3);
  Rng a(9), b(9);
  LearnerState x = make_learner_state(cfg, mdp, a), y = make_learner_state(cfg, mdp, b);
  for (int i = 0; i < 5000; ++i) {
    fpoc_step(x, cfg, mdp, a);
    fpoc_step(y, cfg, mdp, b);
  }
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.step_count, 5000u);
}

TEST(Step, FirstStepUpdatesByHand) {
  // Single state leading to a terminal; k = 1, two actions.
  const auto j = nlohmann::json::parse(R"({"states": 2, "actions": 2, "d0": [1, 0],
    "tasks": [{"terminals": [1], "outcomes": [
      {"s": 0, "a": 0, "next": 1, "reward": -1}, {"s": 0, "a": 1, "next": 0, "reward": -2}]}]})");
  const TabularMdp mdp = mdp_from_json(j);
  LearnerConfig cfg = small_config(Algorithm::FPOC, 1);
  cfg.eta = 0.0;
  cfg.epsilon = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    LearnerState st = make_learner_state(cfg, mdp, rng);
    const LearnerState before = st;
    const StepInfo info = fpoc_step(st, cfg, mdp, rng);
    ASSERT_TRUE(info.decision);
    const OptionId h = info.option;
    const ActionId a = info.action;
    // Zero tables: Q(S',.) = 0 and V(S') = -cbar * i = -0.1, used when the branch fires.
    const double delta = info.reward + (info.terminated ? 0.0 : (info.fired ? -cfg.cbar * 0.5 : 0.0));
    // pi(a|0,opt) = 0.5 for the adjustable option, 1 for the primitive.
    const double pa = h == 0 ? 0.5 : 1.0;
    for (OptionId g = 0; g < 3; ++g) {
      const double pg = g == 0 ? 0.5 : (g - 1 == a ? 1.0 : 0.0);
      const double rho = std::max(1.0, pg / pa);
      EXPECT_DOUBLE_EQ(st.q[g], cfg.alpha * rho * delta) << "seed " << seed << " option " << g;
    }
    if (h == 0) {
      EXPECT_DOUBLE_EQ(st.tables.pi_pref(0, 0, a), cfg.alpha * 0.5 * delta);
      EXPECT_DOUBLE_EQ(st.tables.pi_pref(0, 0, 1 - a), -cfg.alpha * 0.5 * delta);
    } else {
      EXPECT_EQ(st.tables.w_pi, before.tables.w_pi);
    }
    // Zero Q at S: M = i(1-i)(0 - 0 - cbar) for the adjustable option, beta_prev = 1.
    EXPECT_DOUBLE_EQ(st.tables.interest_pref(0, 0), cfg.alpha * 0.25 * -cfg.cbar);
  }
}

TEST(Step, MaocLeavesInterestsAlone) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  const LearnerConfig cfg = small_config(Algorithm::MAOC, 2);
  Rng rng(3);
  LearnerState st = make_learner_state(cfg, mdp, rng);
  for (int i = 0; i < 20000; ++i) fpoc_step(st, cfg, mdp, rng);
  for (double w : st.tables.w_interest) EXPECT_EQ(w, 0.0);
  EXPECT_NE(st.tables.w_beta, std::vector<double>(st.tables.w_beta.size(), 0.0));
}

TEST(Step, MaocEqualsFpocWithPinnedInterests) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  LearnerConfig maoc = small_config(Algorithm::MAOC, 2);
  LearnerConfig fpoc = maoc;
  fpoc.algorithm = Algorithm::FPOC;
  Rng a(21), b(21);
  LearnerState x = make_learner_state(maoc, mdp, a);
  LearnerState y = make_learner_state(fpoc, mdp, b);
  y.tables.interests_pinned = true;
  for (int i = 0; i < 5000; ++i) {
    fpoc_step(x, maoc, mdp, a);
    fpoc_step(y, fpoc, mdp, b);
  }
  EXPECT_EQ(x, y);
}

// With min clipping and k = 0 only the executed primitive moves; with the
// max clip every primitive is updated with rho = 1.
TEST(Step, PrimitiveOnlyClipping) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  for (IsClip clip : {IsClip::Min, IsClip::Max}) {
    LearnerConfig cfg = small_config(Algorithm::FPOC, 0);
    cfg.is_clip = clip;
    Rng rng(4);
    LearnerState st = make_learner_state(cfg, mdp, rng);
    const TaskId n = st.task;
    const StateId s = st.state;
    const StepInfo info = fpoc_step(st, cfg, mdp, rng);
    for (OptionId h = 0; h < 4; ++h) {
      if (h == info.action || clip == IsClip::Max) {
        EXPECT_NE(st.q_row(n, s)[h], 0.0);
      } else {
        EXPECT_EQ(st.q_row(n, s)[h], 0.0);
      }
    }
  }
}

TEST(Step, CallAndReturnHoldsOptionUntilBranchFires) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  LearnerConfig cfg = small_config(Algorithm::FPOC, 2);
  Rng rng(8);
  LearnerState st = make_learner_state(cfg, mdp, rng);
  StepInfo prev = fpoc_step(st, cfg, mdp, rng);
  for (int i = 0; i < 20000; ++i) {
    const StepInfo info = fpoc_step(st, cfg, mdp, rng);
    EXPECT_EQ(info.decision, prev.fired || prev.terminated);
    if (!info.decision) {
      EXPECT_EQ(info.option, prev.option);
    }
    prev = info;
  }
}

TEST(Train, ZeroStepsLeavesStateUntouched) {
  const TabularMdp mdp = build_mdp(two_room(), TaskMode::TrainTasks);
  LearnerConfig cfg = small_config(Algorithm::FPOC, 2);
  Rng a(1), b(1);
  const TrainResult r = train(cfg, mdp, a);
  EXPECT_TRUE(r.curve.empty());
  Rng skip(b());
  (void)skip;
  EXPECT_EQ(r.state, make_learner_state(cfg, mdp, b));
}

TEST(Train, CurveRowAccounting) {
  const TabularMdp mdp = build_mdp(two_room(), TaskMode::TrainTasks);
  LearnerConfig cfg = small_config(Algorithm::MAOC, 2);
  cfg.total_steps = 10000;
  cfg.eval_every = 2500;
  Rng rng(2);
  std::size_t seen = 0;
  const TrainResult r = train(cfg, mdp, rng, [&](const CurveRow&) { ++seen; });
  ASSERT_EQ(r.curve.size(), 4u);
  EXPECT_EQ(seen, 4u);
  EXPECT_EQ(r.curve.back().step, 10000u);
  EXPECT_EQ(r.state.step_count, 10000u);
}

TEST(Train, LearnsOnSmallMap) {
  const TabularMdp mdp = build_mdp(two_room(), TaskMode::TrainTasks);
  LearnerConfig cfg = small_config(Algorithm::FPOC, 2);
  cfg.is_clip = IsClip::Min;
  cfg.total_steps = 200000;
  cfg.eval_every = 20000;
  cfg.eval_episodes = 200;
  Rng rng(3);
  const TrainResult r = train(cfg, mdp, rng);
  const FlatValues v = flat_value_iteration(mdp, 1e-9);
  double optimal = 0.0;
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    for (StateId s = 0; s < mdp.num_states(); ++s) optimal += v.at(n, s) * mdp.initial()[s] / mdp.num_tasks();
  }
  EXPECT_GT(r.curve.back().mean, r.curve.front().mean);
  // Greedy return cannot beat the optimum, compound cost only lowers it.
  EXPECT_LT(r.curve.back().mean, optimal);
  EXPECT_GT(tail_mean(r.curve, 3), 3.0 * optimal - 10.0);
}

TEST(Train, TailMean) {
  std::vector<CurveRow> c{{1, -10, 0}, {2, -8, 0}, {3, -6, 0}};
  EXPECT_DOUBLE_EQ(tail_mean(c, 2), -7.0);
  EXPECT_DOUBLE_EQ(tail_mean(c, 5), -8.0);
  EXPECT_TRUE(std::isnan(tail_mean({}, 5)));
}

TEST(Config, ValidationAndJson) {
  LearnerConfig c;
  EXPECT_EQ(c.alpha, 0.01);
  EXPECT_EQ(c.epsilon, 0.1);
  EXPECT_EQ(c.gamma, 1.0);
  EXPECT_EQ(c.is_clip, IsClip::Max);
  c.validate();
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), Error);
  LearnerConfig d;
  d.k = 8;
  d.algorithm = Algorithm::MAOC;
  d.is_clip = IsClip::Min;
  const LearnerConfig back = learner_config_from_json(learner_config_to_json(d));
  EXPECT_EQ(learner_config_to_json(back), learner_config_to_json(d));
  EXPECT_EQ(parse_is_clip("max"), IsClip::Max);
  EXPECT_THROW(parse_algorithm("dqn"), Error);
}

TEST(Checkpoint, StateRoundTrip) {
  const TabularMdp mdp = build_mdp(two_room(), TaskMode::TrainTasks);
  LearnerConfig cfg = small_config(Algorithm::FPOC, 2);
  Rng rng(6);
  LearnerState st = make_learner_state(cfg, mdp, rng);
  for (int i = 0; i < 3000; ++i) fpoc_step(st, cfg, mdp, rng);
  const LearnerState back = learner_state_from_json(nlohmann::json::parse(learner_state_to_json(st).dump()));
  EXPECT_EQ(back, st);
  auto bad = learner_state_to_json(st);
  bad["version"] = 99;
  EXPECT_THROW(learner_state_from_json(bad), Error);
}
