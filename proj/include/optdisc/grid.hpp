#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "optdisc/error.hpp"

namespace optdisc {

using StateId = std::size_t;
using ActionId = std::size_t;
using TaskId = std::size_t;

enum class Cell : char { Wall = '#', Empty = '.', TrainGoal = 'G', TestGoal = 'B' };

enum class TaskMode { TrainTasks, TestTasks };

/// Grid actions in the fixed order used by every grid MDP.
enum GridAction : ActionId { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr std::size_t kGridActions = 4;
inline constexpr std::array<int, kGridActions> kRowDelta{-1, 1, 0, 0};
inline constexpr std::array<int, kGridActions> kColDelta{0, 0, -1, 1};

struct Coord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

/// Parsed map. Non-wall cells are numbered in row-major order.
class GridSpec {
 public:
  GridSpec() = default;
  GridSpec(std::string name, std::size_t width, std::size_t height, std::vector<Cell> cells)
      : name_(std::move(name)), width_(width), height_(height), cells_(std::move(cells)) {
    state_of_cell_.assign(cells_.size(), kNoState);
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (cells_[i] != Cell::Wall) {
        state_of_cell_[i] = coords_.size();
        coords_.push_back({i / width_, i % width_});
      }
    }
  }

  const std::string& name() const { return name_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t num_states() const { return coords_.size(); }

  Cell at(std::size_t row, std::size_t col) const { return cells_[row * width_ + col]; }
  bool is_wall(std::size_t row, std::size_t col) const { return at(row, col) == Cell::Wall; }

  Coord coord(StateId s) const {
    check_index(s, coords_.size(), "state");
    return coords_[s];
  }
  Cell cell_of(StateId s) const {
    const Coord c = coord(s);
    return at(c.row, c.col);
  }
  std::optional<StateId> state_at(std::size_t row, std::size_t col) const {
    if (row >= height_ || col >= width_) return std::nullopt;
    const StateId s = state_of_cell_[row * width_ + col];
    if (s == kNoState) return std::nullopt;
    return s;
  }

  /// Deterministic grid move; bumping into a wall leaves the agent in place.
  StateId move(StateId s, ActionId a) const {
    const Coord c = coord(s);
    const long r = static_cast<long>(c.row) + kRowDelta[a];
    const long q = static_cast<long>(c.col) + kColDelta[a];
    if (r < 0 || q < 0) return s;
    const auto next = state_at(static_cast<std::size_t>(r), static_cast<std::size_t>(q));
    return next ? *next : s;
  }

  std::vector<StateId> goals(TaskMode mode) const {
    const Cell want = mode == TaskMode::TrainTasks ? Cell::TrainGoal : Cell::TestGoal;
    std::vector<StateId> out;
    for (StateId s = 0; s < coords_.size(); ++s) {
      if (cell_of(s) == want) out.push_back(s);
    }
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (std::size_t r = 0; r < height_; ++r) {
      for (std::size_t c = 0; c < width_; ++c) out.push_back(static_cast<char>(at(r, c)));
      out.push_back('\n');
    }
    return out;
  }

 private:
  static constexpr StateId kNoState = static_cast<StateId>(-1);

  std::string name_;
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Cell> cells_;
  std::vector<StateId> state_of_cell_;
  std::vector<Coord> coords_;
};

/// Parses a block of {#, ., G, B} rows. '/' is accepted as a row separator so
/// one-line maps such as "###/#.#/###" work. Blank trailing lines are ignored.
inline GridSpec parse_grid(std::string_view text, std::string name = "grid") {
  std::vector<std::string> rows;
  std::string current;
  for (char ch : text) {
    if (ch == '\n' || ch == '/') {
      rows.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  rows.push_back(current);
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw Error(Errc::NoEmptyCells, "empty map");

  const std::size_t width = rows.front().size();
  std::vector<Cell> cells;
  cells.reserve(width * rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw Error(Errc::NonRectangular, "row " + std::to_string(r) + " has length " +
                                            std::to_string(rows[r].size()) + ", expected " +
                                            std::to_string(width));
    }
    for (char ch : rows[r]) {
      switch (ch) {
        case '#': cells.push_back(Cell::Wall); break;
        case '.': cells.push_back(Cell::Empty); break;
        case 'G': cells.push_back(Cell::TrainGoal); break;
        case 'B': cells.push_back(Cell::TestGoal); break;
        default:
          throw Error(Errc::UnknownCharacter,
                      std::string("'") + ch + "' in row " + std::to_string(r));
      }
    }
  }

  const std::size_t height = rows.size();
  bool any_open = false;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const Cell cell = cells[r * width + c];
      if (cell == Cell::Wall) continue;
      any_open = true;
      if (r == 0 || c == 0 || r + 1 == height || c + 1 == width) {
        throw Error(Errc::UnenclosedBoundary,
                    "open cell at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
      }
    }
  }
  if (!any_open) throw Error(Errc::NoEmptyCells, "map has no non-wall cell");
  return GridSpec(std::move(name), width, height, std::move(cells));
}

inline GridSpec load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open map file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_grid(buffer.str(), path);
}

inline constexpr std::string_view kFourRoomMap =
    "#############\n"
    "#G...G#G...G#\n"
    "#.B.B.#.B.B.#\n"
    "#..G.....G..#\n"
    "#.B.B.#.....#\n"
    "#G...G#.B.B.#\n"
    "##.####G...G#\n"
    "#G...G###.###\n"
    "#.B.B.#G...G#\n"
    "#..G..#.BGB.#\n"
    "#.B.B...B.B.#\n"
    "#G...G#G...G#\n"
    "#############\n";

inline constexpr std::string_view kTwoRoomMap =
    "###########\n"
    "#....#....#\n"
    "#....#.G.G#\n"
    "#.........#\n"
    "#....#.G.G#\n"
    "#....#....#\n"
    "###########\n";

inline GridSpec four_room() { return parse_grid(kFourRoomMap, "fourroom"); }
inline GridSpec two_room() { return parse_grid(kTwoRoomMap, "tworoom"); }

/// Accepts a bundled name ("fourroom", "tworoom"), a path, or inline map text.
inline GridSpec resolve_grid(const std::string& spec) {
  if (spec == "fourroom") return four_room();
  if (spec == "tworoom") return two_room();
  if (!spec.empty() && spec.front() == '#') return parse_grid(spec, "inline");
  return load_grid(spec);
}

}  // namespace optdisc
