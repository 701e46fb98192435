// Copyright 2026 The mechsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mechsim/core_model.hpp"
#include "mechsim/csv.hpp"
#include "mechsim/parallel.hpp"

namespace mechsim {

class SolverError : public std::runtime_error {
 public:
  SolverError(std::string mdp, const std::string& what) : std::runtime_error(what), mdp_(std::move(mdp)) {}
  const std::string& mdp() const { return mdp_; }

 private:
  std::string mdp_;
};

struct SolverOptions {
  /// Target sup-norm distance to the exact fixed point, in welfare units.
  double tol = 1e-9;
  std::size_t max_iterations = 1'000'000;
  unsigned threads = 0;
};

/// Absolute slack when comparing Q-values for ties.
inline constexpr double kTieTolerance = 1e-12;

struct SolveStats {
  std::size_t iterations = 0;
  /// Last successive sup-norm change of value iteration.
  double residual = 0.0;
  /// sup_theta |W(theta) - max_a Q(theta, a)| evaluated at the returned table.
  double bellman_residual = 0.0;
  double tolerance = 0.0;
  std::vector<double> residual_trace;
};

/// One solved welfare MDP: the full agent set, or the economy without one agent.
struct ValueTable {
  std::optional<AgentId> excluded;
  ProfileSpace space;
  std::vector<double> values;
  std::vector<Allocation> policy;
  SolveStats stats;

  /// Looks up a full-length profile; components of the excluded agent are ignored.
  double at(std::span<const TypeIndex> profile) const { return values[space.index(profile)]; }
  Allocation policy_at(std::span<const TypeIndex> profile) const { return policy[space.index(profile)]; }

  std::string name() const { return excluded ? "W_minus_" + std::to_string(*excluded) : std::string("W"); }
};

/// E[table(theta') | a, theta], summing over the table's member agents only and
/// multiplying their independent marginals. Order: member order, then type order.
inline double expected_next(const Scenario& s, const ProfileSpace& space, std::span<const double> table, Allocation a,
                            std::span<const TypeIndex> theta) {
  const auto& members = space.members();
  const std::size_t m = members.size();
  if (m == 0) return table[0];
  auto rec = [&](auto&& self, std::size_t k, std::size_t offset) -> double {
    const AgentId j = members[k];
    const auto row = s.transitions[j].row(a, theta[j]);
    double sum = 0.0;
    for (TypeIndex t = 0; t < row.size(); ++t) {
      if (row[t] == 0.0) continue;
      const std::size_t idx = offset + t * space.stride(k);
      sum += row[t] * (k + 1 == m ? table[idx] : self(self, k + 1, idx));
    }
    return sum;
  };
  return rec(rec, 0, 0);
}

inline double expected_next(const Scenario& s, const ValueTable& vt, Allocation a, std::span<const TypeIndex> theta) {
  return expected_next(s, vt.space, vt.values, a, theta);
}

/// Stage welfare sum_j v_j(a, theta) over the given agents, in agent order.
inline double stage_welfare(const Scenario& s, std::span<const AgentId> agents, Allocation a,
                            std::span<const TypeIndex> theta) {
  double sum = 0.0;
  for (AgentId j : agents) sum += expected_value(s, j, a, theta);
  return sum;
}

namespace detail {

/// Applies one agent's transition matrix along its axis of a tensor laid out by
/// `space`: out[.., t, ..] = sum_t' F_j(t' | a, t) in[.., t', ..].
inline void contract_axis(const Scenario& s, const ProfileSpace& space, std::size_t k, Allocation a,
                          std::span<const double> in, std::span<double> out) {
  const AgentId j = space.members()[k];
  const std::size_t types = space.type_count(j);
  const std::size_t stride = space.stride(k);
  const std::size_t block = stride * types;
  const auto& rows = s.transitions[j].rows[a.mask()];
  for (std::size_t base = 0; base < space.size(); base += block) {
    for (std::size_t inner = 0; inner < stride; ++inner) {
      for (TypeIndex t = 0; t < types; ++t) {
        const auto& row = rows[t];
        double sum = 0.0;
        for (TypeIndex u = 0; u < types; ++u) sum += row[u] * in[base + u * stride + inner];
        out[base + t * stride + inner] = sum;
      }
    }
  }
}

struct MdpModel {
  ProfileSpace space;
  std::vector<AgentId> members;
  std::vector<Allocation> actions;
  std::vector<std::vector<double>> rewards;  // [action][state]

  /// E[W(theta') | a, theta] for every theta, one mode product per member.
  void expected(const Scenario& s, std::size_t action, std::span<const double> w, std::vector<double>& out,
                std::vector<double>& scratch) const {
    out.assign(w.begin(), w.end());
    scratch.resize(w.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      contract_axis(s, space, k, actions[action], out, scratch);
      out.swap(scratch);
    }
  }
};

inline MdpModel build_mdp(const Scenario& s, std::optional<AgentId> excluded) {
  MdpModel m;
  for (AgentId i = 0; i < s.agent_count(); ++i)
    if (!excluded || *excluded != i) m.members.push_back(i);
  m.space = ProfileSpace(s.type_counts(), m.members);
  std::uint32_t allowed = 0;
  for (AgentId i : m.members) allowed |= (1u << i);
  for (Allocation a : s.allocations())
    if (a.subset_of(Allocation(allowed))) m.actions.push_back(a);
  if (m.actions.empty()) m.actions.push_back(Allocation{});
  m.rewards.assign(m.actions.size(), std::vector<double>(m.space.size()));
  for (std::size_t k = 0; k < m.actions.size(); ++k)
    for (std::size_t x = 0; x < m.space.size(); ++x) {
      const auto theta = m.space.decode(x);
      m.rewards[k][x] = stage_welfare(s, m.members, m.actions[k], theta);
    }
  return m;
}

/// One Bellman backup: returns T(w) and, when requested, the tie-broken argmax.
inline std::vector<double> backup(const Scenario& s, const MdpModel& m, std::span<const double> w,
                                  std::vector<Allocation>* policy) {
  const std::size_t n = m.space.size();
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> q(m.actions.size(), std::vector<double>(n));
  std::vector<double> ew, scratch;
  for (std::size_t k = 0; k < m.actions.size(); ++k) {
    m.expected(s, k, w, ew, scratch);
    for (std::size_t x = 0; x < n; ++x) {
      q[k][x] = m.rewards[k][x] + s.discount * ew[x];
      best[x] = std::max(best[x], q[k][x]);
    }
  }
  if (policy) {
    policy->assign(n, Allocation{});
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t k = 0; k < m.actions.size(); ++k)
        if (q[k][x] >= best[x] - kTieTolerance) {
          (*policy)[x] = m.actions[k];
          break;
        }
  }
  return best;
}

}  // namespace detail

/// Value iteration for the welfare MDP over all agents, or without `excluded`.
/// Starts from W = 0 and stops once the successive change falls below
/// tol * (1 - delta) / (2 * delta), which bounds the distance to the fixed
/// point by tol / 2. A zero discount takes exactly one backup.
inline ValueTable solve_welfare(const Scenario& s, std::optional<AgentId> excluded, const SolverOptions& opts = {}) {
  if (!(s.discount >= 0.0 && s.discount < 1.0))
    throw std::invalid_argument("discount must lie in [0, 1) for value iteration");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");

  const auto model = detail::build_mdp(s, excluded);
  ValueTable vt;
  vt.excluded = excluded;
  vt.space = model.space;
  vt.stats.tolerance = opts.tol;

  std::vector<double> w(model.space.size(), 0.0);
  if (s.discount == 0.0) {
    w = detail::backup(s, model, w, nullptr);
    vt.stats.iterations = 1;
    vt.stats.residual_trace.push_back(0.0);
  } else {
    const double threshold = opts.tol * (1.0 - s.discount) / (2.0 * s.discount);
    for (;;) {
      if (vt.stats.iterations >= opts.max_iterations)
        throw SolverError(vt.name(), "value iteration for " + vt.name() + " hit the iteration cap (" +
                                         std::to_string(opts.max_iterations) + ") with residual " +
                                         csv::num(vt.stats.residual));
      auto next = detail::backup(s, model, w, nullptr);
      double diff = 0.0;
      for (std::size_t x = 0; x < w.size(); ++x) diff = std::max(diff, std::abs(next[x] - w[x]));
      w.swap(next);
      ++vt.stats.iterations;
      vt.stats.residual = diff;
      vt.stats.residual_trace.push_back(diff);
      if (diff <= threshold) break;
    }
  }

  const auto tw = detail::backup(s, model, w, &vt.policy);
  for (std::size_t x = 0; x < w.size(); ++x)
    vt.stats.bellman_residual = std::max(vt.stats.bellman_residual, std::abs(tw[x] - w[x]));
  vt.values = std::move(w);
  return vt;
}

/// W over the full agent set plus one W_{-i} per agent.
struct WelfareSolution {
  ValueTable full;
  std::vector<ValueTable> without;

  double welfare(std::span<const TypeIndex> theta) const { return full.at(theta); }
  /// W_{-i} at the reduced profile theta_{-i}; theta_i is never read.
  double welfare_without(AgentId i, std::span<const TypeIndex> theta) const { return without[i].at(theta); }
  std::size_t mdp_count() const { return 1 + without.size(); }
};

/// a*(theta): the stored greedy policy, ties resolved toward the smallest bitmask.
inline Allocation efficient_allocation(const WelfareSolution& sol, std::span<const TypeIndex> theta) {
  return sol.full.policy_at(theta);
}

/// Q(theta, a) = sum_i v_i(a, theta) + delta * E[W(theta') | a, theta].
inline double bellman_q(const Scenario& s, const WelfareSolution& sol, Allocation a, std::span<const TypeIndex> theta) {
  return stage_welfare(s, sol.full.space.members(), a, theta) + s.discount * expected_next(s, sol.full, a, theta);
}

/// Solves all n + 1 MDPs. They are independent and run concurrently.
inline WelfareSolution solve_all(const Scenario& s, const SolverOptions& opts = {}) {
  const std::size_t n = s.agent_count();
  std::vector<ValueTable> tables(n + 1);
  parallel_for(
      n + 1,
      [&](std::size_t k) {
        tables[k] = k == 0 ? solve_welfare(s, std::nullopt, opts) : solve_welfare(s, k - 1, opts);
      },
      opts.threads);
  WelfareSolution sol;
  sol.full = std::move(tables[0]);
  for (std::size_t k = 1; k <= n; ++k) sol.without.push_back(std::move(tables[k]));
  return sol;
}

inline std::string profile_labels(const Scenario& s, std::span<const TypeIndex> theta) {
  std::vector<std::string> parts;
  for (AgentId i = 0; i < s.agent_count(); ++i) parts.push_back(csv::num(s.agents[i].labels[theta[i]]));
  return csv::join(parts, '|');
}

/// CSV dump: profile_index, profile_labels, W, W_minus_0..W_minus_n, allocation_bitmask.
inline void write_solution_csv(std::ostream& os, const Scenario& s, const WelfareSolution& sol) {
  std::vector<std::string> header{"profile_index", "profile_labels", "W"};
  for (AgentId i = 0; i < s.agent_count(); ++i) header.push_back("W_minus_" + std::to_string(i));
  header.push_back("allocation_bitmask");
  csv::row(os, header);
  const auto space = s.profile_space();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto theta = space.decode(k);
    std::vector<std::string> cells{std::to_string(k), profile_labels(s, theta), csv::num(sol.welfare(theta))};
    for (AgentId i = 0; i < s.agent_count(); ++i) cells.push_back(csv::num(sol.welfare_without(i, theta)));
    cells.push_back(std::to_string(efficient_allocation(sol, theta).mask()));
    csv::row(os, cells);
  }
}

}  // namespace mechsim
