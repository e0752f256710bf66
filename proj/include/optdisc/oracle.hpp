#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/error.hpp"
#include "optdisc/executor.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/option_model.hpp"
#include "optdisc/options.hpp"

namespace optdisc {

inline constexpr std::size_t kMaxEnumeratedOptions = 12;
inline constexpr std::size_t kMaxOracleUnknowns = 2000;

/// Solves A x = B by LU with partial pivoting; a near-singular A (non-episodic
/// chain at gamma = 1) raises SingularSystem.
inline Eigen::MatrixXd solve_dense(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-13)) throw Error(Errc::SingularSystem, "linear system is singular");
  Eigen::MatrixXd x = lu.solve(b);
  if (!x.allFinite()) throw Error(Errc::SingularSystem, "linear system produced non-finite values");
  return x;
}

// ---------------------------------------------------------------------------
// Option models

/// Closed-form model of option h in task n: r = (I - gamma Pc)^-1 r1 and
/// p = (I - gamma Pc)^-1 gamma Pt, where Pc continues the option and Pt stops it
/// (termination fired, or a terminal state of task n reached).
inline void exact_option_model_into(const TabularMdp& mdp, const OptionSet& options, OptionId h,
                                    TaskId n, OptionModel& model) {
  check_index(h, options.num_options(), "option");
  check_index(n, mdp.num_tasks(), "task");
  const std::size_t S = mdp.num_states();
  const std::size_t A = mdp.num_actions();
  const double gamma = mdp.gamma();
  Eigen::MatrixXd cont = Eigen::MatrixXd::Zero(S, S);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(S, S + 1);  // column S holds the one-step reward
  bool continues = false;
  for (StateId s = 0; s < S; ++s) {
    const auto pi = options.policy(s, h);
    for (ActionId a = 0; a < A; ++a) {
      if (pi[a] == 0.0) continue;
      for (const auto& o : mdp.outcomes(n, s, a)) {
        const double w = pi[a] * o.prob;
        rhs(s, S) += w * o.reward;
        const double stop = mdp.is_terminal(n, o.next) ? 1.0 : options.termination(o.next, h);
        rhs(s, o.next) += gamma * w * stop;
        if (stop < 1.0) {
          cont(s, o.next) += gamma * w * (1.0 - stop);
          continues = true;
        }
      }
    }
  }
  Eigen::MatrixXd sol;
  if (continues) {
    sol = solve_dense(Eigen::MatrixXd::Identity(S, S) - cont, rhs);
  } else {
    sol = rhs;
  }
  for (StateId s = 0; s < S; ++s) {
    model.reward(n, s, h) = sol(s, S);
    auto row = model.transition(n, s, h);
    for (StateId x = 0; x < S; ++x) row[x] = sol(s, x);
  }
}

inline OptionModel exact_option_model(const TabularMdp& mdp, const OptionSet& options) {
  if (options.num_states() != mdp.num_states() || options.num_actions() != mdp.num_actions()) {
    throw Error(Errc::InvalidArgument, "option set does not match the MDP");
  }
  OptionModel model(mdp.num_tasks(), mdp.num_states(), options.num_options(), ModelSource::Exact);
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    for (OptionId h = 0; h < options.num_options(); ++h) exact_option_model_into(mdp, options, h, n, model);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Power-set enumeration

/// Probability of an initiation set given as a bit mask over the adjustable
/// options: prod_{in} i * prod_{out} (1 - i).
inline double initiation_probability(std::span<const double> interest, unsigned mask) {
  double p = 1.0;
  for (std::size_t x = 0; x < interest.size(); ++x) {
    p *= (mask >> x) & 1U ? interest[x] : 1.0 - interest[x];
  }
  return p;
}

inline InitiationSet initiation_from_mask(unsigned mask, std::size_t k, std::size_t num_actions) {
  InitiationSet omega;
  omega.member.assign(k + num_actions, 1);
  omega.count = num_actions;
  for (std::size_t x = 0; x < k; ++x) {
    omega.member[x] = (mask >> x) & 1U ? 1 : 0;
    omega.count += omega.member[x];
  }
  return omega;
}

inline void require_enumerable(std::size_t k) {
  if (k > kMaxEnumeratedOptions) {
    throw Error(Errc::PowerSetTooLarge, "cannot enumerate initiation sets for k = " + std::to_string(k));
  }
}

/// Meta-preference table f(n,s,h) >= 0; mu_Omega(h|s) = f(h) / sum_{Omega} f.
struct MetaPreference {
  std::size_t num_tasks = 0;
  std::size_t num_states = 0;
  std::size_t num_options = 0;
  std::vector<double> f;

  MetaPreference() = default;
  MetaPreference(std::size_t tasks, std::size_t states, std::size_t options, double value = 1.0)
      : num_tasks(tasks), num_states(states), num_options(options), f(tasks * states * options, value) {}

  double& at(TaskId n, StateId s, OptionId h) { return f[(n * num_states + s) * num_options + h]; }
  double at(TaskId n, StateId s, OptionId h) const { return f[(n * num_states + s) * num_options + h]; }
};

/// Log-preferences theta with f = exp(theta).
struct MetaParams {
  std::size_t num_tasks = 0;
  std::size_t num_states = 0;
  std::size_t num_options = 0;
  std::vector<double> theta;

  MetaParams() = default;
  MetaParams(std::size_t tasks, std::size_t states, std::size_t options)
      : num_tasks(tasks), num_states(states), num_options(options), theta(tasks * states * options, 0.0) {}

  double& at(TaskId n, StateId s, OptionId h) { return theta[(n * num_states + s) * num_options + h]; }
  double at(TaskId n, StateId s, OptionId h) const { return theta[(n * num_states + s) * num_options + h]; }

  MetaPreference preference() const {
    MetaPreference p(num_tasks, num_states, num_options);
    for (std::size_t i = 0; i < theta.size(); ++i) p.f[i] = std::exp(theta[i]);
    return p;
  }
};

/// Fills mu(.|s) for task n given Omega.
using MetaPolicyFn = std::function<void(TaskId, StateId, const InitiationSet&, std::span<double>)>;

inline MetaPolicyFn preference_meta_policy(const MetaPreference& pref) {
  return [&pref](TaskId n, StateId s, const InitiationSet& omega, std::span<double> out) {
    double total = 0.0;
    for (OptionId h = 0; h < out.size(); ++h) {
      out[h] = omega.member[h] ? pref.at(n, s, h) : 0.0;
      total += out[h];
    }
    if (!(total > 0.0)) throw Error(Errc::DegenerateDistribution, "meta-preferences sum to zero on Omega");
    for (double& p : out) p /= total;
  };
}

/// Epsilon-greedy meta-policy on a per-task Q table (N x S x H).
inline MetaPolicyFn epsilon_greedy_meta_policy(const std::vector<double>& q, std::size_t num_states,
                                               std::size_t num_options, double eps) {
  return [&q, num_states, num_options, eps](TaskId n, StateId s, const InitiationSet& omega,
                                            std::span<double> out) {
    const std::span<const double> row(q.data() + (n * num_states + s) * num_options, num_options);
    meta_policy(row, omega, eps, out);
  };
}

// ---------------------------------------------------------------------------
// Objective

struct TaskValues {
  std::vector<double> q_bar;    // S x H
  std::vector<double> q_tilde;  // S x H
  std::vector<double> v_bar;    // S
  std::vector<double> v_tilde;  // S
};

struct ExactValues {
  std::vector<TaskValues> tasks;
  double c = 0.0;
  double j = 0.0;
  double j_bar = 0.0;    // sum_n sum_s d0 v_bar
  double j_tilde = 0.0;  // sum_n sum_s d0 v_tilde
};

namespace detail {

/// Per-state decision statistics: average meta-policy over Omega and E|Omega|.
struct DecisionStats {
  std::vector<double> mu_bar;    // S x H
  std::vector<double> set_size;  // S
};

inline DecisionStats decision_stats(const OptionSet& options, TaskId n, const MetaPolicyFn& meta) {
  const std::size_t S = options.num_states();
  const std::size_t H = options.num_options();
  const std::size_t k = options.k();
  DecisionStats out{std::vector<double>(S * H, 0.0), std::vector<double>(S, 0.0)};
  std::vector<double> interest(k), mu(H);
  for (StateId s = 0; s < S; ++s) {
    for (OptionId x = 0; x < k; ++x) interest[x] = options.interest(s, x);
    for (unsigned mask = 0; mask < (1U << k); ++mask) {
      const double pr = initiation_probability(interest, mask);
      if (pr == 0.0) continue;
      const InitiationSet omega = initiation_from_mask(mask, k, options.num_actions());
      meta(n, s, omega, mu);
      for (OptionId h = 0; h < H; ++h) out.mu_bar[s * H + h] += pr * mu[h];
      out.set_size[s] += pr * static_cast<double>(omega.count);
    }
  }
  return out;
}

/// Transition matrix of the augmented (s,h) chain and the two reward vectors.
struct AugmentedChain {
  Eigen::MatrixXd p;        // (S*H) x (S*H), already discounted
  Eigen::VectorXd r_bar;    // expected immediate reward
  Eigen::VectorXd r_tilde;  // minus expected option-consideration cost at the next decision
};

inline AugmentedChain augmented_chain(const TabularMdp& mdp, const OptionSet& options, TaskId n,
                                      const DecisionStats& stats) {
  const std::size_t S = mdp.num_states();
  const std::size_t H = options.num_options();
  const std::size_t A = mdp.num_actions();
  const double gamma = mdp.gamma();
  AugmentedChain chain{Eigen::MatrixXd::Zero(S * H, S * H), Eigen::VectorXd::Zero(S * H),
                       Eigen::VectorXd::Zero(S * H)};
  for (StateId s = 0; s < S; ++s) {
    for (OptionId h = 0; h < H; ++h) {
      const std::size_t row = s * H + h;
      const auto pi = options.policy(s, h);
      for (ActionId a = 0; a < A; ++a) {
        if (pi[a] == 0.0) continue;
        for (const auto& o : mdp.outcomes(n, s, a)) {
          const double w = pi[a] * o.prob;
          chain.r_bar(row) += w * o.reward;
          if (mdp.is_terminal(n, o.next)) continue;
          const double beta = options.termination(o.next, h);
          chain.p(row, o.next * H + h) += gamma * w * (1.0 - beta);
          for (OptionId g = 0; g < H; ++g) {
            chain.p(row, o.next * H + g) += gamma * w * beta * stats.mu_bar[o.next * H + g];
          }
          chain.r_tilde(row) -= gamma * w * beta * stats.set_size[o.next];
        }
      }
    }
  }
  return chain;
}

}  // namespace detail

/// Exact J for a generic meta-policy. Each decision point costs |Omega| once
/// (primitives included), matching the compound return.
inline ExactValues exact_objective(const TabularMdp& mdp, const OptionSet& options,
                                   const MetaPolicyFn& meta, double c) {
  require_enumerable(options.k());
  const std::size_t S = mdp.num_states();
  const std::size_t H = options.num_options();
  if (S * H > kMaxOracleUnknowns) throw Error(Errc::InvalidArgument, "oracle fixture too large");
  ExactValues out;
  out.c = c;
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    const auto stats = detail::decision_stats(options, n, meta);
    const auto chain = detail::augmented_chain(mdp, options, n, stats);
    Eigen::MatrixXd rhs(S * H, 2);
    rhs.col(0) = chain.r_bar;
    rhs.col(1) = chain.r_tilde;
    const Eigen::MatrixXd sol =
        solve_dense(Eigen::MatrixXd::Identity(S * H, S * H) - chain.p, rhs);
    TaskValues tv;
    tv.q_bar.assign(sol.col(0).data(), sol.col(0).data() + S * H);
    tv.q_tilde.assign(sol.col(1).data(), sol.col(1).data() + S * H);
    tv.v_bar.assign(S, 0.0);
    tv.v_tilde.assign(S, 0.0);
    for (StateId s = 0; s < S; ++s) {
      for (OptionId h = 0; h < H; ++h) {
        tv.v_bar[s] += stats.mu_bar[s * H + h] * tv.q_bar[s * H + h];
        tv.v_tilde[s] += stats.mu_bar[s * H + h] * tv.q_tilde[s * H + h];
      }
      tv.v_tilde[s] -= stats.set_size[s];
      out.j_bar += mdp.initial()[s] * tv.v_bar[s];
      out.j_tilde += mdp.initial()[s] * tv.v_tilde[s];
    }
    out.tasks.push_back(std::move(tv));
  }
  out.j = out.j_bar + c * out.j_tilde;
  return out;
}

inline ExactValues exact_objective(const TabularMdp& mdp, const OptionSet& options,
                                   const MetaPreference& pref, double c) {
  return exact_objective(mdp, options, preference_meta_policy(pref), c);
}

// ---------------------------------------------------------------------------
// Gradient

struct ParamGradient {
  std::vector<double> w_pi;
  std::vector<double> w_beta;
  std::vector<double> w_interest;
  std::vector<double> theta;

  /// Concatenation in the order w_pi, w_beta, w_interest, theta.
  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(w_pi.size() + w_beta.size() + w_interest.size() + theta.size());
    out.insert(out.end(), w_pi.begin(), w_pi.end());
    out.insert(out.end(), w_beta.begin(), w_beta.end());
    out.insert(out.end(), w_interest.begin(), w_interest.end());
    out.insert(out.end(), theta.begin(), theta.end());
    return out;
  }
};

inline void check_meta_shape(const TabularMdp& mdp, const ParamTables& t, const MetaParams& meta) {
  if (t.num_states != mdp.num_states() || t.num_actions != mdp.num_actions() ||
      meta.num_tasks != mdp.num_tasks() || meta.num_states != mdp.num_states() ||
      meta.num_options != t.num_options()) {
    throw Error(Errc::InvalidArgument, "parameter shapes do not match the MDP");
  }
}

inline double exact_objective_value(const TabularMdp& mdp, const ParamTables& t,
                                    const MetaParams& meta, double c) {
  check_meta_shape(mdp, t, meta);
  const MetaPreference pref = meta.preference();
  return exact_objective(mdp, OptionSet::from_params(t), pref, c).j;
}

/// Gradient of J with respect to every preference table, assembled from the
/// occupancy d(s,h) of the augmented chain and the per-decision term m(s).
inline ParamGradient exact_gradient(const TabularMdp& mdp, const ParamTables& t,
                                    const MetaParams& meta, double c) {
  check_meta_shape(mdp, t, meta);
  require_enumerable(t.k);
  const std::size_t S = mdp.num_states();
  const std::size_t A = mdp.num_actions();
  const std::size_t k = t.k;
  const std::size_t H = t.num_options();
  const double gamma = mdp.gamma();
  if (S * H > kMaxOracleUnknowns) throw Error(Errc::InvalidArgument, "oracle fixture too large");

  const OptionSet options = OptionSet::from_params(t);
  const MetaPreference pref = meta.preference();
  const MetaPolicyFn mu_fn = preference_meta_policy(pref);

  ParamGradient g;
  g.w_pi.assign(t.w_pi.size(), 0.0);
  g.w_beta.assign(t.w_beta.size(), 0.0);
  g.w_interest.assign(t.w_interest.size(), 0.0);
  g.theta.assign(meta.theta.size(), 0.0);

  std::vector<double> interest(k), mu(H), qa(A);
  for (TaskId n = 0; n < mdp.num_tasks(); ++n) {
    const auto stats = detail::decision_stats(options, n, mu_fn);
    const auto chain = detail::augmented_chain(mdp, options, n, stats);
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(S * H, S * H) - chain.p;
    const Eigen::VectorXd q = solve_dense(lhs, chain.r_bar + c * chain.r_tilde);

    std::vector<double> v(S, 0.0);
    for (StateId s = 0; s < S; ++s) {
      for (OptionId h = 0; h < H; ++h) v[s] += stats.mu_bar[s * H + h] * q(s * H + h);
      v[s] -= c * stats.set_size[s];
    }

    Eigen::VectorXd alpha(S * H);
    for (StateId s = 0; s < S; ++s) {
      for (OptionId h = 0; h < H; ++h) alpha(s * H + h) = mdp.initial()[s] * stats.mu_bar[s * H + h];
    }
    const Eigen::VectorXd d = solve_dense(lhs.transpose(), alpha);

    // Decision occupancy: start plus every termination into a non-terminal state.
    std::vector<double> w(mdp.initial().begin(), mdp.initial().end());

    for (StateId s = 0; s < S; ++s) {
      for (OptionId h = 0; h < H; ++h) {
        const double occ = d(s * H + h);
        const auto pi = options.policy(s, h);
        for (ActionId a = 0; a < A; ++a) {
          qa[a] = 0.0;
          for (const auto& o : mdp.outcomes(n, s, a)) {
            double value = o.reward;
            if (!mdp.is_terminal(n, o.next)) {
              const double beta = options.termination(o.next, h);
              value += gamma * (beta * v[o.next] + (1.0 - beta) * q(o.next * H + h));
              const double flow = occ * gamma * pi[a] * o.prob;
              w[o.next] += flow * beta;
              if (h < k) {
                g.w_beta[o.next * k + h] -= flow * beta * (1.0 - beta) * (q(o.next * H + h) - v[o.next]);
              }
            }
            qa[a] += o.prob * value;
          }
        }
        if (h < k) {
          double mean = 0.0;
          for (ActionId a = 0; a < A; ++a) mean += pi[a] * qa[a];
          for (ActionId b = 0; b < A; ++b) g.w_pi[(s * k + h) * A + b] += occ * pi[b] * (qa[b] - mean);
        }
      }
    }

    for (StateId s = 0; s < S; ++s) {
      for (OptionId x = 0; x < k; ++x) interest[x] = options.interest(s, x);
      for (unsigned mask = 0; mask < (1U << k); ++mask) {
        const double pr = initiation_probability(interest, mask);
        if (pr == 0.0) continue;
        const InitiationSet omega = initiation_from_mask(mask, k, t.num_actions);
        mu_fn(n, s, omega, mu);
        double value = 0.0;
        for (OptionId h = 0; h < H; ++h) value += mu[h] * q(s * H + h);
        if (!t.interests_pinned) {
          for (OptionId x = 0; x < k; ++x) {
            const double score = (omega.member[x] ? 1.0 : 0.0) - interest[x];
            g.w_interest[s * k + x] += w[s] * pr * score * value;
          }
        }
        for (OptionId h = 0; h < H; ++h) {
          if (!omega.member[h]) continue;
          g.theta[(n * S + s) * H + h] += w[s] * pr * mu[h] * (q(s * H + h) - value);
        }
      }
      if (!t.interests_pinned) {
        for (OptionId x = 0; x < k; ++x) {
          g.w_interest[s * k + x] -= w[s] * c * interest[x] * (1.0 - interest[x]);
        }
      }
    }
  }
  return g;
}

/// Central differences of J over every parameter, same layout as ParamGradient.
inline ParamGradient finite_diff_gradient(const TabularMdp& mdp, const ParamTables& t,
                                          const MetaParams& meta, double c, double step) {
  if (!(step > 0.0)) throw Error(Errc::InvalidArgument, "step size must be positive");
  ParamTables tp = t;
  MetaParams mp = meta;
  auto diff = [&](double& slot) {
    const double keep = slot;
    slot = keep + step;
    const double up = exact_objective_value(mdp, tp, mp, c);
    slot = keep - step;
    const double down = exact_objective_value(mdp, tp, mp, c);
    slot = keep;
    return (up - down) / (2.0 * step);
  };
  ParamGradient g;
  for (double& x : tp.w_pi) g.w_pi.push_back(diff(x));
  for (double& x : tp.w_beta) g.w_beta.push_back(diff(x));
  for (double& x : tp.w_interest) g.w_interest.push_back(diff(x));
  for (double& x : mp.theta) g.theta.push_back(diff(x));
  return g;
}

// ---------------------------------------------------------------------------
// Interest-gradient and value targets for the epsilon-greedy meta-policy

/// Expectation over Omega of sum_h mu_Omega(h) Q(h), minus cbar times the
/// expected number of adjustable options in Omega.
inline double exact_v_row(std::span<const double> q_row, std::span<const double> interest,
                          std::size_t num_actions, double eps, double cbar) {
  const std::size_t k = interest.size();
  require_enumerable(k);
  double total = 0.0;
  std::vector<double> mu(q_row.size());
  for (unsigned mask = 0; mask < (1U << k); ++mask) {
    const double pr = initiation_probability(interest, mask);
    if (pr == 0.0) continue;
    const InitiationSet omega = initiation_from_mask(mask, k, num_actions);
    meta_policy(q_row, omega, eps, mu);
    double value = 0.0;
    for (std::size_t h = 0; h < mu.size(); ++h) value += mu[h] * q_row[h];
    total += pr * (value - cbar * static_cast<double>(omega.count - num_actions));
  }
  return total;
}

/// Expected interest-gradient term per adjustable option:
/// E_Omega[(1{x in Omega} - i_x) sum_h mu_Omega(h) Q(h)] - cbar i_x (1 - i_x).
inline std::vector<double> exact_m_row(std::span<const double> q_row, std::span<const double> interest,
                                       std::size_t num_actions, double eps, double cbar) {
  const std::size_t k = interest.size();
  require_enumerable(k);
  std::vector<double> m(k, 0.0), mu(q_row.size());
  for (unsigned mask = 0; mask < (1U << k); ++mask) {
    const double pr = initiation_probability(interest, mask);
    if (pr == 0.0) continue;
    const InitiationSet omega = initiation_from_mask(mask, k, num_actions);
    meta_policy(q_row, omega, eps, mu);
    double value = 0.0;
    for (std::size_t h = 0; h < mu.size(); ++h) value += mu[h] * q_row[h];
    for (std::size_t x = 0; x < k; ++x) m[x] += pr * (((mask >> x) & 1U ? 1.0 : 0.0) - interest[x]) * value;
  }
  for (std::size_t x = 0; x < k; ++x) m[x] -= cbar * interest[x] * (1.0 - interest[x]);
  return m;
}

/// Score-function estimate of m from a single sampled Omega.
inline std::vector<double> naive_m(std::span<const double> q_row, std::span<const double> interest,
                                   const InitiationSet& omega, double eps, double cbar) {
  const std::size_t k = interest.size();
  const std::vector<double> mu = meta_policy(q_row, omega, eps);
  double value = 0.0;
  for (std::size_t h = 0; h < mu.size(); ++h) value += mu[h] * q_row[h];
  std::vector<double> m(k);
  for (std::size_t x = 0; x < k; ++x) {
    m[x] = ((omega.member[x] ? 1.0 : 0.0) - interest[x]) * value - cbar * interest[x] * (1.0 - interest[x]);
  }
  return m;
}

inline std::vector<double> interest_row(const ParamTables& t, StateId s) {
  std::vector<double> out(t.k);
  for (OptionId x = 0; x < t.k; ++x) out[x] = interest_prob(t, s, x);
  return out;
}

}  // namespace optdisc
