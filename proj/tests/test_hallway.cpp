#include <gtest/gtest.h>

#include <algorithm>

#include "optdisc/hallway.hpp"
#include "optdisc/random.hpp"

using namespace optdisc;

TEST(Hallway, FourRoomLayout) {
  const GridSpec g = four_room();
  const RoomLayout layout = analyse_rooms(g);
  EXPECT_EQ(layout.num_rooms, 4u);
  ASSERT_EQ(layout.hallways.size(), 4u);
  for (const auto& rooms : layout.hallway_rooms) {
    EXPECT_GE(rooms[0], 0);
    EXPECT_GE(rooms[1], 0);
    EXPECT_NE(rooms[0], rooms[1]);
  }
}

TEST(Hallway, ClockwiseOrderOnScreen) {
  const GridSpec g = four_room();
  const RoomLayout layout = analyse_rooms(g);
  auto room_at = [&](std::size_t r, std::size_t c) { return layout.room_of[*g.state_at(r, c)]; };
  const int top_left = room_at(1, 1), top_right = room_at(1, 7);
  const int bottom_right = room_at(11, 11), bottom_left = room_at(11, 1);
  const auto& order = layout.clockwise_order;
  const auto pos = [&](int room) { return std::find(order.begin(), order.end(), room) - order.begin(); };
  EXPECT_EQ((pos(top_right) - pos(top_left) + 4) % 4, 1);
  EXPECT_EQ((pos(bottom_right) - pos(top_right) + 4) % 4, 1);
  EXPECT_EQ((pos(bottom_left) - pos(bottom_right) + 4) % 4, 1);
}

// Following option h from any cell reaches one of its entrance cells, where
// it terminates, and the path moves into the next room in its direction.
TEST(Hallway, OptionsReachEntrancesAndTerminate) {
  const GridSpec g = four_room();
  const HallwayOptions opts = make_hallway_options(g);
  for (int h = 0; h < 2; ++h) {
    ASSERT_EQ(opts.entrances[h].size(), 4u);
    for (StateId s = 0; s < g.num_states(); ++s) {
      const double beta = opts.termination[h][s];
      const bool entrance = std::count(opts.entrances[h].begin(), opts.entrances[h].end(), s) > 0;
      EXPECT_DOUBLE_EQ(beta, entrance ? 1.0 : 0.0);
      StateId x = g.move(s, opts.action[h][s]);
      std::size_t steps = 1;
      while (opts.termination[h][x] < 1.0 && steps < 40) {
        x = g.move(x, opts.action[h][x]);
        ++steps;
      }
      EXPECT_LT(steps, 40u) << "option " << h << " from state " << s;
      EXPECT_EQ(x, opts.target[h][s]);
    }
  }
}

TEST(Hallway, OptionSetHasFullInterest) {
  const GridSpec g = four_room();
  const OptionSet o = make_hallway_options(g).to_option_set(kGridActions);
  EXPECT_EQ(o.k(), 2u);
  EXPECT_EQ(o.num_options(), 6u);
  for (StateId s = 0; s < g.num_states(); ++s) {
    EXPECT_DOUBLE_EQ(o.interest(s, 0), 1.0);
    EXPECT_DOUBLE_EQ(o.interest(s, 1), 1.0);
    EXPECT_DOUBLE_EQ(o.expected_set_size(s), 6.0);
  }
}

TEST(Hallway, UnsupportedGrid) {
  try {
    make_hallway_options(two_room());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedGrid);
  }
}
