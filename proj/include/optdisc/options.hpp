#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/grid.hpp"

namespace optdisc {

/// Option index h in [0, k + |A|). Indices below k are adjustable, the rest are
/// the primitive actions in action order.
using OptionId = std::size_t;

inline constexpr double kProbFloor = 1e-12;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

inline void softmax(std::span<const double> prefs, std::span<double> out) {
  const double top = *std::max_element(prefs.begin(), prefs.end());
  double total = 0.0;
  for (std::size_t a = 0; a < prefs.size(); ++a) {
    out[a] = std::exp(prefs[a] - top);
    total += out[a];
  }
  for (double& p : out) p /= total;
}

/// Preference tables of the k adjustable options. All start at zero, i.e. uniform
/// policies with termination and interest 0.5.
struct ParamTables {
  std::size_t num_states = 0;
  std::size_t k = 0;
  std::size_t num_actions = 0;
  std::vector<double> w_pi;        // |S| x k x |A|
  std::vector<double> w_beta;      // |S| x k
  std::vector<double> w_interest;  // |S| x k
  /// When set, every interest reads as exactly 1 regardless of w_interest.
  bool interests_pinned = false;

  ParamTables() = default;
  ParamTables(std::size_t states, std::size_t adjustable, std::size_t actions)
      : num_states(states),
        k(adjustable),
        num_actions(actions),
        w_pi(states * adjustable * actions, 0.0),
        w_beta(states * adjustable, 0.0),
        w_interest(states * adjustable, 0.0) {}

  std::size_t num_options() const { return k + num_actions; }
  bool is_adjustable(OptionId h) const { return h < k; }

  double& pi_pref(StateId s, OptionId h, ActionId a) { return w_pi[(s * k + h) * num_actions + a]; }
  double pi_pref(StateId s, OptionId h, ActionId a) const {
    return w_pi[(s * k + h) * num_actions + a];
  }
  std::span<double> pi_row(StateId s, OptionId h) {
    return {w_pi.data() + (s * k + h) * num_actions, num_actions};
  }
  std::span<const double> pi_row(StateId s, OptionId h) const {
    return {w_pi.data() + (s * k + h) * num_actions, num_actions};
  }
  double& beta_pref(StateId s, OptionId h) { return w_beta[s * k + h]; }
  double beta_pref(StateId s, OptionId h) const { return w_beta[s * k + h]; }
  double& interest_pref(StateId s, OptionId h) { return w_interest[s * k + h]; }
  double interest_pref(StateId s, OptionId h) const { return w_interest[s * k + h]; }

  friend bool operator==(const ParamTables&, const ParamTables&) = default;
};

inline void check_option(const ParamTables& t, StateId s, OptionId h) {
  check_index(s, t.num_states, "state");
  check_index(h, t.num_options(), "option");
}

/// pi(.|s,h): softmax of the preferences, or the point mass for a primitive.
inline void policy_dist(const ParamTables& t, StateId s, OptionId h, std::span<double> out) {
  check_option(t, s, h);
  if (!t.is_adjustable(h)) {
    std::fill(out.begin(), out.end(), 0.0);
    out[h - t.k] = 1.0;
    return;
  }
  softmax(t.pi_row(s, h), out);
}

inline std::vector<double> policy_dist(const ParamTables& t, StateId s, OptionId h) {
  std::vector<double> out(t.num_actions);
  policy_dist(t, s, h, out);
  return out;
}

inline double termination_prob(const ParamTables& t, StateId s, OptionId h) {
  check_option(t, s, h);
  return t.is_adjustable(h) ? sigmoid(t.beta_pref(s, h)) : 1.0;
}

inline double interest_prob(const ParamTables& t, StateId s, OptionId h) {
  check_option(t, s, h);
  if (!t.is_adjustable(h) || t.interests_pinned) return 1.0;
  return sigmoid(t.interest_pref(s, h));
}

inline double entropy(std::span<const double> dist) {
  double ent = 0.0;
  for (double p : dist) {
    if (p > 0.0) ent -= p * std::log(p);
  }
  return ent;
}

/// d Ent(softmax(w)) / d w_a = -pi_a (log pi_a + Ent(pi)).
inline std::vector<double> entropy_grad_policy(std::span<const double> dist) {
  for (double p : dist) {
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(Errc::DegenerateDistribution, "entropy gradient needs probabilities in (0,1)");
    }
  }
  const double ent = entropy(dist);
  std::vector<double> grad(dist.size());
  for (std::size_t a = 0; a < dist.size(); ++a) grad[a] = -dist[a] * (std::log(dist[a]) + ent);
  return grad;
}

/// d Ent([p, 1-p]) / d w for p = sigmoid(w).
inline double entropy_grad_binary(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(Errc::DegenerateDistribution, "binary entropy gradient needs p in (0,1)");
  }
  return p * (1.0 - p) * std::log((1.0 - p) / p);
}

/// Probability-level description of a full option set: adjustable options
/// followed by primitives. Used by rollouts, models and planning, and able to
/// hold options that have no preference tables behind them (e.g. hallway options).
class OptionSet {
 public:
  OptionSet() = default;
  OptionSet(std::size_t num_states, std::size_t k, std::size_t num_actions)
      : num_states_(num_states),
        k_(k),
        num_actions_(num_actions),
        pi_(num_states * (k + num_actions) * num_actions, 0.0),
        beta_(num_states * (k + num_actions), 1.0),
        interest_(num_states * (k + num_actions), 1.0) {
    for (StateId s = 0; s < num_states_; ++s) {
      for (OptionId h = 0; h < k_; ++h) {
        for (ActionId a = 0; a < num_actions_; ++a) {
          pi_[(s * num_options() + h) * num_actions_ + a] = 1.0 / static_cast<double>(num_actions_);
        }
      }
      for (ActionId a = 0; a < num_actions_; ++a) {
        pi_[(s * num_options() + k_ + a) * num_actions_ + a] = 1.0;
      }
    }
  }

  static OptionSet primitives_only(std::size_t num_states, std::size_t num_actions) {
    return OptionSet(num_states, 0, num_actions);
  }

  static OptionSet from_params(const ParamTables& t) {
    OptionSet o(t.num_states, t.k, t.num_actions);
    for (StateId s = 0; s < t.num_states; ++s) {
      for (OptionId h = 0; h < t.k; ++h) {
        policy_dist(t, s, h, o.policy_mut(s, h));
        o.set_termination(s, h, termination_prob(t, s, h));
        o.set_interest(s, h, interest_prob(t, s, h));
      }
    }
    return o;
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t k() const { return k_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_options() const { return k_ + num_actions_; }
  bool is_adjustable(OptionId h) const { return h < k_; }

  std::span<const double> policy(StateId s, OptionId h) const {
    return {pi_.data() + (s * num_options() + h) * num_actions_, num_actions_};
  }
  std::span<double> policy_mut(StateId s, OptionId h) {
    return {pi_.data() + (s * num_options() + h) * num_actions_, num_actions_};
  }
  double termination(StateId s, OptionId h) const { return beta_[s * num_options() + h]; }
  double interest(StateId s, OptionId h) const { return interest_[s * num_options() + h]; }

  void set_termination(StateId s, OptionId h, double p) {
    require_adjustable(h);
    beta_[s * num_options() + h] = p;
  }
  void set_interest(StateId s, OptionId h, double p) {
    require_adjustable(h);
    interest_[s * num_options() + h] = p;
  }
  void set_policy(StateId s, OptionId h, std::span<const double> dist) {
    require_adjustable(h);
    std::copy(dist.begin(), dist.end(), policy_mut(s, h).begin());
  }

  /// Expected |Omega(s)|: primitives always count, adjustable options by interest.
  double expected_set_size(StateId s) const {
    double total = 0.0;
    for (OptionId h = 0; h < num_options(); ++h) total += interest(s, h);
    return total;
  }

  friend bool operator==(const OptionSet&, const OptionSet&) = default;

 private:
  void require_adjustable(OptionId h) const {
    if (h >= k_) throw Error(Errc::IndexOutOfRange, "primitive options are fixed");
  }

  std::size_t num_states_ = 0;
  std::size_t k_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> pi_;
  std::vector<double> beta_;
  std::vector<double> interest_;
};

inline ActionId greedy_action(std::span<const double> dist) {
  return static_cast<ActionId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
}

/// Adjustable options only; primitives are implied by "actions".
inline nlohmann::json option_set_to_json(const OptionSet& o) {
  nlohmann::json j;
  j["states"] = o.num_states();
  j["actions"] = o.num_actions();
  j["k"] = o.k();
  j["options"] = nlohmann::json::array();
  for (OptionId h = 0; h < o.k(); ++h) {
    nlohmann::json opt;
    opt["index"] = h;
    std::vector<std::vector<double>> policy;
    std::vector<ActionId> greedy;
    std::vector<double> term, interest;
    for (StateId s = 0; s < o.num_states(); ++s) {
      const auto dist = o.policy(s, h);
      policy.emplace_back(dist.begin(), dist.end());
      greedy.push_back(greedy_action(dist));
      term.push_back(o.termination(s, h));
      interest.push_back(o.interest(s, h));
    }
    opt["policy"] = policy;
    opt["greedy"] = greedy;
    opt["termination"] = term;
    opt["interest"] = interest;
    j["options"].push_back(std::move(opt));
  }
  return j;
}

inline OptionSet option_set_from_json(const nlohmann::json& j) {
  try {
    const std::size_t S = j.at("states").get<std::size_t>();
    const std::size_t A = j.at("actions").get<std::size_t>();
    const std::size_t k = j.at("k").get<std::size_t>();
    OptionSet o(S, k, A);
    const auto& options = j.at("options");
    if (options.size() != k) throw Error(Errc::Format, "option count does not match k");
    for (OptionId h = 0; h < k; ++h) {
      const auto& opt = options[h];
      const auto policy = opt.at("policy").get<std::vector<std::vector<double>>>();
      const auto term = opt.at("termination").get<std::vector<double>>();
      const auto interest = opt.at("interest").get<std::vector<double>>();
      if (policy.size() != S || term.size() != S || interest.size() != S) {
        throw Error(Errc::Format, "option tables must have one entry per state");
      }
      for (StateId s = 0; s < S; ++s) {
        if (policy[s].size() != A) throw Error(Errc::Format, "policy row has wrong width");
        o.set_policy(s, h, policy[s]);
        o.set_termination(s, h, term[s]);
        o.set_interest(s, h, interest[s]);
      }
    }
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad option set: ") + e.what());
  }
}

inline nlohmann::json params_to_json(const ParamTables& t) {
  return {{"states", t.num_states},     {"k", t.k},
          {"actions", t.num_actions},   {"w_pi", t.w_pi},
          {"w_beta", t.w_beta},         {"w_interest", t.w_interest},
          {"interests_pinned", t.interests_pinned}};
}

inline ParamTables params_from_json(const nlohmann::json& j) {
  try {
    ParamTables t(j.at("states").get<std::size_t>(), j.at("k").get<std::size_t>(),
                  j.at("actions").get<std::size_t>());
    t.w_pi = j.at("w_pi").get<std::vector<double>>();
    t.w_beta = j.at("w_beta").get<std::vector<double>>();
    t.w_interest = j.at("w_interest").get<std::vector<double>>();
    t.interests_pinned = j.value("interests_pinned", false);
    if (t.w_pi.size() != t.num_states * t.k * t.num_actions ||
        t.w_beta.size() != t.num_states * t.k || t.w_interest.size() != t.num_states * t.k) {
      throw Error(Errc::Format, "parameter table sizes do not match header");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad parameter tables: ") + e.what());
  }
}

}  // namespace optdisc
