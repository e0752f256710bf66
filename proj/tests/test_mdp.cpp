#include <gtest/gtest.h>

#include <cmath>

#include "optdisc/fixtures.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/planner.hpp"

using namespace optdisc;

TEST(Mdp, FourRoomTasks) {
  const GridSpec g = four_room();
  const TabularMdp train = build_mdp(g, TaskMode::TrainTasks);
  const TabularMdp test = build_mdp(g, TaskMode::TestTasks);
  EXPECT_EQ(train.num_tasks(), 20u);
  EXPECT_EQ(test.num_tasks(), 16u);
  EXPECT_EQ(train.num_states(), 104u);
  EXPECT_EQ(train.num_actions(), 4u);
  EXPECT_DOUBLE_EQ(train.gamma(), 1.0);
  const auto goals = g.goals(TaskMode::TrainTasks);
  for (TaskId n = 0; n < train.num_tasks(); ++n) {
    ASSERT_EQ(train.terminals(n).size(), 1u);
    EXPECT_EQ(train.terminals(n)[0], goals[n]);
  }
  EXPECT_TRUE(terminal_reachable_everywhere(train));
  EXPECT_TRUE(terminal_reachable_everywhere(test));
}

TEST(Mdp, StepCostsMinusOneIncludingGoalEntry) {
  const GridSpec g = parse_grid("####/#.G#/####");
  const TabularMdp mdp = build_mdp(g, TaskMode::TrainTasks);
  Rng rng(3);
  const StepOutcome out = step(mdp, 0, 0, kRight, rng);
  EXPECT_EQ(out.next_state, 1u);
  EXPECT_DOUBLE_EQ(out.reward, -1.0);
  EXPECT_TRUE(out.terminated);
  const StepOutcome wall = step(mdp, 0, 0, kLeft, rng);
  EXPECT_EQ(wall.next_state, 0u);
  EXPECT_FALSE(wall.terminated);
}

TEST(Mdp, NoGoalsForMode) {
  try {
    build_mdp(parse_grid("###/#.#/###"), TaskMode::TestTasks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoGoalsForMode);
  }
}

TEST(Mdp, RejectsBadTables) {
  std::vector<std::vector<Outcome>> out(2, {Outcome{0, -1.0, 0.7}});
  EXPECT_THROW(TabularMdp(1, 2, 1, out, {{}}, {1.0}, 1.0), Error);
  std::vector<std::vector<Outcome>> ok(2, {Outcome{0, -1.0, 1.0}});
  EXPECT_THROW(TabularMdp(1, 2, 1, ok, {{}}, {0.5}, 1.0), Error);
  EXPECT_THROW(TabularMdp(1, 2, 1, ok, {{}}, {1.0}, 1.5), Error);
  EXPECT_THROW(TabularMdp(1, 2, 1, ok, {{3}}, {1.0}, 1.0), Error);
}

TEST(Mdp, StepSamplesOutcomeFrequencies) {
  Rng rng(11);
  const TabularMdp mdp = random_fixture(5, 2, 1, 0.9, rng);
  const auto outs = mdp.outcomes(0, 0, 1);
  std::vector<double> expect(5, 0.0), seen(5, 0.0);
  for (const auto& o : outs) expect[o.next] += o.prob;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) seen[step(mdp, 0, 0, 1, rng).next_state] += 1.0 / draws;
  for (StateId s = 0; s < 5; ++s) EXPECT_NEAR(seen[s], expect[s], 0.01);
}

TEST(Mdp, SampleStartIsUniformOverTasks) {
  const TabularMdp mdp = build_mdp(four_room(), TaskMode::TrainTasks);
  Rng rng(5);
  std::vector<int> count(mdp.num_tasks(), 0);
  for (int i = 0; i < 100000; ++i) ++count[sample_start(mdp, rng).first];
  for (int c : count) EXPECT_NEAR(c / 100000.0, 0.05, 0.005);
}

TEST(Mdp, OptimalValuesAreNegativeGridDistances) {
  const GridSpec g = four_room();
  const TabularMdp mdp = build_mdp(g, TaskMode::TrainTasks);
  const FlatValues v = flat_value_iteration(mdp, 1e-12);
  const auto goals = g.goals(TaskMode::TrainTasks);
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    const auto dist = grid_distances(g, goals[n]);
    for (StateId s = 0; s < g.num_states(); ++s) {
      ASSERT_GE(dist[s], 0);
      EXPECT_DOUBLE_EQ(v.at(n, s), -static_cast<double>(dist[s]));
    }
  }
}

TEST(Mdp, JsonRoundTrip) {
  Rng rng(2);
  const TabularMdp mdp = random_fixture(4, 2, 2, 0.95, rng);
  const TabularMdp back = mdp_from_json(mdp_to_json(mdp));
  EXPECT_EQ(mdp_to_json(back), mdp_to_json(mdp));
}

TEST(Mdp, JsonDefaultsSelfLoop) {
  const auto j = nlohmann::json::parse(R"({"states": 2, "actions": 1,
    "tasks": [{"terminals": [1], "outcomes": []}]})");
  const TabularMdp mdp = mdp_from_json(j);
  EXPECT_EQ(mdp.outcomes(0, 0, 0)[0].next, 0u);
  EXPECT_DOUBLE_EQ(mdp.initial()[0], 0.5);
  EXPECT_THROW(mdp_from_json(nlohmann::json::parse(R"({"states": 2})")), Error);
}
