#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "optdisc/error.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/options.hpp"

namespace optdisc {

enum class ModelSource { Learned, Exact };

inline std::string to_string(ModelSource m) { return m == ModelSource::Exact ? "exact" : "learned"; }

/// Per-task option models. `transition(n,s,h)` is the discounted distribution
/// over the state in which option h terminates when started in s; mass that
/// ends in a terminal state of task n stays on that terminal state.
struct OptionModel {
  std::size_t num_tasks = 0;
  std::size_t num_states = 0;
  std::size_t num_options = 0;
  ModelSource source = ModelSource::Exact;
  std::vector<double> rewards;      // N x S x H
  std::vector<double> transitions;  // N x S x H x S

  OptionModel() = default;
  OptionModel(std::size_t tasks, std::size_t states, std::size_t options, ModelSource src)
      : num_tasks(tasks),
        num_states(states),
        num_options(options),
        source(src),
        rewards(tasks * states * options, 0.0),
        transitions(tasks * states * options * states, 0.0) {}

  double& reward(TaskId n, StateId s, OptionId h) { return rewards[(n * num_states + s) * num_options + h]; }
  double reward(TaskId n, StateId s, OptionId h) const {
    return rewards[(n * num_states + s) * num_options + h];
  }
  std::span<double> transition(TaskId n, StateId s, OptionId h) {
    return {transitions.data() + ((n * num_states + s) * num_options + h) * num_states, num_states};
  }
  std::span<const double> transition(TaskId n, StateId s, OptionId h) const {
    return {transitions.data() + ((n * num_states + s) * num_options + h) * num_states, num_states};
  }
};

}  // namespace optdisc
