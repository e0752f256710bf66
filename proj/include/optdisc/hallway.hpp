#pragma once

#include <array>
#include <cmath>
#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include "optdisc/error.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/options.hpp"

namespace optdisc {

/// Room/hallway decomposition of a four-room style map.
struct RoomLayout {
  std::vector<int> room_of;                      // per state, -1 for hallway cells
  std::vector<StateId> hallways;                 // hallway states
  std::vector<std::array<int, 2>> hallway_rooms; // the two rooms each hallway joins
  std::vector<int> clockwise_order;              // room ids in clockwise order
  std::size_t num_rooms = 0;
};

/// Hallway cells are open cells squeezed between two walls on opposite sides,
/// with open cells on the other two sides.
inline RoomLayout analyse_rooms(const GridSpec& grid) {
  RoomLayout layout;
  const std::size_t S = grid.num_states();
  layout.room_of.assign(S, -1);
  std::vector<char> is_hallway(S, 0);
  for (StateId s = 0; s < S; ++s) {
    const Coord c = grid.coord(s);
    const bool up = !grid.is_wall(c.row - 1, c.col);
    const bool down = !grid.is_wall(c.row + 1, c.col);
    const bool left = !grid.is_wall(c.row, c.col - 1);
    const bool right = !grid.is_wall(c.row, c.col + 1);
    if ((left && right && !up && !down) || (up && down && !left && !right)) {
      is_hallway[s] = 1;
      layout.hallways.push_back(s);
    }
  }
  int next_room = 0;
  for (StateId s = 0; s < S; ++s) {
    if (is_hallway[s] || layout.room_of[s] >= 0) continue;
    std::deque<StateId> queue{s};
    layout.room_of[s] = next_room;
    while (!queue.empty()) {
      const StateId x = queue.front();
      queue.pop_front();
      for (ActionId a = 0; a < kGridActions; ++a) {
        const StateId y = grid.move(x, a);
        if (!is_hallway[y] && layout.room_of[y] < 0) {
          layout.room_of[y] = next_room;
          queue.push_back(y);
        }
      }
    }
    ++next_room;
  }
  layout.num_rooms = static_cast<std::size_t>(next_room);
  for (StateId h : layout.hallways) {
    std::array<int, 2> rooms{-1, -1};
    int found = 0;
    for (ActionId a = 0; a < kGridActions; ++a) {
      const StateId y = grid.move(h, a);
      if (y == h || layout.room_of[y] < 0) continue;
      if (found < 2) rooms[found] = layout.room_of[y];
      ++found;
    }
    layout.hallway_rooms.push_back(rooms);
  }

  // Clockwise on screen (rows grow downwards) is increasing atan2(row, col).
  std::vector<double> angle(layout.num_rooms, 0.0);
  std::vector<double> cr(layout.num_rooms, 0.0), cc(layout.num_rooms, 0.0), count(layout.num_rooms, 0.0);
  for (StateId s = 0; s < S; ++s) {
    if (layout.room_of[s] < 0) continue;
    const auto r = static_cast<std::size_t>(layout.room_of[s]);
    cr[r] += static_cast<double>(grid.coord(s).row);
    cc[r] += static_cast<double>(grid.coord(s).col);
    count[r] += 1.0;
  }
  const double mid_r = (static_cast<double>(grid.height()) - 1.0) / 2.0;
  const double mid_c = (static_cast<double>(grid.width()) - 1.0) / 2.0;
  for (std::size_t r = 0; r < layout.num_rooms; ++r) {
    angle[r] = std::atan2(cr[r] / count[r] - mid_r, cc[r] / count[r] - mid_c);
  }
  layout.clockwise_order.resize(layout.num_rooms);
  std::iota(layout.clockwise_order.begin(), layout.clockwise_order.end(), 0);
  std::sort(layout.clockwise_order.begin(), layout.clockwise_order.end(),
            [&](int a, int b) { return angle[a] < angle[b]; });
  return layout;
}

/// Two circulating options: index 0 travels clockwise, index 1 counter-clockwise.
/// Each moves along shortest paths to the entrance cell of the next room and
/// terminates exactly on the entrance cells of its direction. Interest is 1.
struct HallwayOptions {
  std::array<std::vector<ActionId>, 2> action;
  std::array<std::vector<double>, 2> termination;
  std::array<std::vector<StateId>, 2> entrances;
  std::array<std::vector<StateId>, 2> target;  // entrance cell each state heads for

  OptionSet to_option_set(std::size_t num_actions) const {
    const std::size_t S = action[0].size();
    OptionSet o(S, 2, num_actions);
    std::vector<double> dist(num_actions);
    for (OptionId h = 0; h < 2; ++h) {
      for (StateId s = 0; s < S; ++s) {
        std::fill(dist.begin(), dist.end(), 0.0);
        dist[action[h][s]] = 1.0;
        o.set_policy(s, h, dist);
        o.set_termination(s, h, termination[h][s]);
        o.set_interest(s, h, 1.0);
      }
    }
    return o;
  }
};

inline HallwayOptions make_hallway_options(const GridSpec& grid) {
  const RoomLayout layout = analyse_rooms(grid);
  if (layout.num_rooms != 4 || layout.hallways.size() != 4) {
    throw Error(Errc::UnsupportedGrid, "hallway options need exactly four rooms joined by four hallways");
  }
  const std::size_t S = grid.num_states();
  const auto& order = layout.clockwise_order;
  auto position = [&](int room) {
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), room) - order.begin());
  };

  HallwayOptions out;
  for (std::size_t dir = 0; dir < 2; ++dir) {
    const std::size_t step = dir == 0 ? 1 : 3;  // +1 or -1 modulo 4
    out.action[dir].assign(S, 0);
    out.termination[dir].assign(S, 0.0);
    out.target[dir].assign(S, 0);

    // Per room: the entrance cell reached when leaving it in this direction.
    std::vector<StateId> exit_target(4, 0);
    std::vector<char> assigned(4, 0);
    for (std::size_t i = 0; i < layout.hallways.size(); ++i) {
      const StateId h = layout.hallways[i];
      const auto [ra, rb] = layout.hallway_rooms[i];
      if (ra < 0 || rb < 0) throw Error(Errc::UnsupportedGrid, "hallway does not join two rooms");
      int from = -1, to = -1;
      if (order[(position(ra) + step) % 4] == rb) {
        from = ra;
        to = rb;
      } else if (order[(position(rb) + step) % 4] == ra) {
        from = rb;
        to = ra;
      } else {
        throw Error(Errc::UnsupportedGrid, "hallway joins rooms that are not neighbours");
      }
      StateId entrance = h;
      for (ActionId a = 0; a < kGridActions; ++a) {
        const StateId y = grid.move(h, a);
        if (y != h && layout.room_of[y] == to) entrance = y;
      }
      if (assigned[static_cast<std::size_t>(from)]) {
        throw Error(Errc::UnsupportedGrid, "room has two exits in one direction");
      }
      assigned[static_cast<std::size_t>(from)] = 1;
      exit_target[static_cast<std::size_t>(from)] = entrance;
      out.entrances[dir].push_back(entrance);
      out.target[dir][h] = entrance;
      out.termination[dir][entrance] = 1.0;
    }
    for (StateId s = 0; s < S; ++s) {
      if (layout.room_of[s] >= 0) out.target[dir][s] = exit_target[static_cast<std::size_t>(layout.room_of[s])];
    }

    // Greedy descent on BFS distance; among equally short moves avoid stepping
    // onto another entrance cell, which would end the option early.
    std::vector<std::vector<long>> dist_cache(S);
    for (StateId e : out.entrances[dir]) dist_cache[e] = grid_distances(grid, e);
    for (StateId s = 0; s < S; ++s) {
      const StateId goal = out.target[dir][s];
      const auto& dist = dist_cache[goal];
      long best_score = std::numeric_limits<long>::max();
      for (ActionId a = 0; a < kGridActions; ++a) {
        const StateId y = grid.move(s, a);
        if (y == s || dist[y] >= dist[s]) continue;
        const bool early_stop = y != goal && out.termination[dir][y] > 0.0;
        const long score = 2 * dist[y] + (early_stop ? 1 : 0);
        if (score < best_score) {
          best_score = score;
          out.action[dir][s] = a;
        }
      }
    }
  }
  return out;
}

}  // namespace optdisc
