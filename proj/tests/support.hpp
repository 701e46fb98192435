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

// Test scenarios and independent oracles shared by the unit and acceptance suites.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "mechsim/mechsim.hpp"

namespace mechsim::testing {

/// Uniform kernel row for `types` types.
inline std::vector<double> uniform_row(std::size_t types) { return std::vector<double>(types, 1.0 / types); }

/// Same matrix for every allocation.
inline AgentKernel constant_kernel(std::size_t masks, const std::vector<std::vector<double>>& m) {
  AgentKernel k;
  k.rows.assign(masks, m);
  return k;
}

inline std::vector<std::vector<double>> identity_matrix(std::size_t types) {
  std::vector<std::vector<double>> m(types, std::vector<double>(types, 0.0));
  for (std::size_t t = 0; t < types; ++t) m[t][t] = 1.0;
  return m;
}

/// Agent 0 is the buyer, the rest are sellers; labels 1, 0.75, 0.5, ...
inline std::vector<AgentSpec> market_agents(const std::vector<std::size_t>& types) {
  std::vector<AgentSpec> agents;
  for (std::size_t i = 0; i < types.size(); ++i) {
    AgentSpec a;
    a.role = i == 0 ? Role::buyer : Role::seller;
    for (std::size_t t = 0; t < types[i]; ++t) a.labels.push_back(1.0 - 0.25 * static_cast<double>(t));
    agents.push_back(a);
  }
  return agents;
}

/// Value tables filled by f(i, a, theta) for every a containing i.
template <class F>
TableValues make_tables(const Scenario& s, F&& f) {
  TableValues t;
  const auto profiles = enumerate_profiles(s);
  for (AgentId i = 0; i < s.agent_count(); ++i) {
    std::vector<std::vector<double>> rows(s.allocation_count());
    for (std::uint32_t m = 0; m < s.allocation_count(); ++m) {
      const Allocation a(m);
      if (!a.contains(i)) continue;
      for (const auto& theta : profiles) rows[m].push_back(f(i, a, theta));
    }
    t.tables.push_back(std::move(rows));
  }
  return t;
}

/// Random scenario with `types[i]` types per agent. Values depend only on the
/// types of allocated agents; kernels are random per (allocation, type).
inline Scenario random_scenario(std::mt19937_64& rng, const std::vector<std::size_t>& types, double discount) {
  Scenario s;
  s.agents = market_agents(types);
  s.discount = discount;
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::uniform_real_distribution<double> mass(0.05, 1.0);

  // Draw one value per (agent, allocation, allocated agents' types).
  std::map<std::tuple<AgentId, std::uint32_t, TypeProfile>, double> drawn;
  s.values = make_tables(s, [&](AgentId i, Allocation a, const TypeProfile& theta) {
    TypeProfile local(theta.size(), 0);
    for (AgentId j = 0; j < theta.size(); ++j)
      if (a.contains(j)) local[j] = theta[j];
    const auto key = std::make_tuple(i, a.mask(), local);
    auto it = drawn.find(key);
    if (it == drawn.end()) it = drawn.emplace(key, value(rng)).first;
    return it->second;
  });

  for (AgentId i = 0; i < s.agent_count(); ++i) {
    AgentKernel k;
    k.rows.resize(s.allocation_count());
    for (auto& matrix : k.rows) {
      matrix.resize(types[i]);
      for (auto& row : matrix) {
        row.resize(types[i]);
        double sum = 0.0;
        for (auto& x : row) sum += (x = mass(rng));
        for (auto& x : row) x /= sum;
      }
    }
    s.transitions.push_back(std::move(k));
  }
  return s;
}

/// Optimal values of the welfare MDP over agents not equal to `excluded`,
/// by enumerating every stationary deterministic policy and solving
/// (I - delta P_pi) w = r_pi for each. The optimum is the pointwise maximum.
inline std::vector<double> exhaustive_policy_values(const Scenario& s, std::optional<AgentId> excluded) {
  std::vector<AgentId> members;
  for (AgentId i = 0; i < s.agent_count(); ++i)
    if (i != excluded) members.push_back(i);
  const ProfileSpace space(s.type_counts(), members);
  const std::size_t states = space.size();

  std::vector<Allocation> actions;
  for (Allocation a : s.allocations())
    if (!excluded || !a.contains(*excluded)) actions.push_back(a);

  // Per-(state, action) reward and transition row.
  std::vector<std::vector<double>> reward(states, std::vector<double>(actions.size(), 0.0));
  std::vector<std::vector<Eigen::VectorXd>> trans(states, std::vector<Eigen::VectorXd>(actions.size()));
  for (std::size_t x = 0; x < states; ++x) {
    const auto theta = space.decode(x);
    for (std::size_t k = 0; k < actions.size(); ++k) {
      for (AgentId i : members) reward[x][k] += expected_value(s, i, actions[k], theta);
      Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states));
      for (std::size_t y = 0; y < states; ++y) {
        const auto next = space.decode(y);
        double p = 1.0;
        for (AgentId i : members) p *= s.transitions[i].row(actions[k], theta[i])[next[i]];
        row[static_cast<Eigen::Index>(y)] = p;
      }
      trans[x][k] = row;
    }
  }

  std::vector<double> best(states, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> choice(states, 0);
  const auto n = static_cast<Eigen::Index>(states);
  while (true) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd r(n);
    for (std::size_t x = 0; x < states; ++x) {
      a.row(static_cast<Eigen::Index>(x)) -= s.discount * trans[x][choice[x]].transpose();
      r[static_cast<Eigen::Index>(x)] = reward[x][choice[x]];
    }
    const Eigen::VectorXd w = a.fullPivLu().solve(r);
    for (std::size_t x = 0; x < states; ++x) best[x] = std::max(best[x], w[static_cast<Eigen::Index>(x)]);
    // Next policy in mixed-radix order.
    std::size_t x = 0;
    while (x < states && ++choice[x] == actions.size()) choice[x++] = 0;
    if (x == states) break;
  }
  return best;
}

/// Static generalized VCG by direct enumeration of every allocation mask:
///   p_i = sum_{j != i} v_j(a*) - max_{a not containing i} sum_{j != i} v_j(a).
inline PaymentVector static_vcg(const Scenario& s, const TypeProfile& theta, Allocation* chosen = nullptr) {
  const std::size_t n = s.agent_count();
  auto total = [&](std::uint32_t m, std::optional<AgentId> skip) {
    double sum = 0.0;
    for (AgentId j = 0; j < n; ++j)
      if (j != skip) sum += expected_value(s, j, Allocation(m), theta);
    return sum;
  };
  std::uint32_t best = 0;
  for (std::uint32_t m = 1; m < (1u << n); ++m)
    if (total(m, std::nullopt) > total(best, std::nullopt) + kTieTolerance) best = m;
  if (chosen) *chosen = Allocation(best);

  PaymentVector p(n);
  for (AgentId i = 0; i < n; ++i) {
    double without = 0.0;
    for (std::uint32_t m = 0; m < (1u << n); ++m)
      if (!(m >> i & 1u)) without = std::max(without, total(m, i));
    p[i] = total(best, i) - without;
  }
  return p;
}

}  // namespace mechsim::testing
