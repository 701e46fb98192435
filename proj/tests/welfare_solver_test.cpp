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

#include <gtest/gtest.h>

#include <random>

#include "mechsim/mechsim.hpp"
#include "support.hpp"

namespace mechsim {
namespace {

using testing::constant_kernel;
using testing::market_agents;
using testing::uniform_row;

Scenario zero_scenario(double discount) {
  Scenario s;
  s.agents = market_agents({2, 3});
  s.discount = discount;
  s.values = TableValues{{{}, {}}};
  std::get<TableValues>(s.values).tables.assign(2, std::vector<std::vector<double>>(4));
  s.transitions = {constant_kernel(4, {uniform_row(2), uniform_row(2)}),
                   constant_kernel(4, {uniform_row(3), uniform_row(3), uniform_row(3)})};
  return s;
}

// 1 buyer + 1 seller, two types each, small explicit tables.
Scenario explicit_pair() {
  Scenario s;
  s.agents = market_agents({2, 2});
  s.discount = 0.5;
  TableValues t;
  t.tables.assign(2, std::vector<std::vector<double>>(4));
  t.tables[0][1] = {-0.2, -0.2, -0.4, -0.4};
  t.tables[0][3] = {1.5, 1.1, 0.9, 0.6};
  t.tables[1][2] = {-0.3, -0.5, -0.3, -0.5};
  t.tables[1][3] = {-0.4, -0.9, -0.4, -0.9};
  s.values = t;
  s.transitions.resize(2);
  s.transitions[0].rows = {{{0.7, 0.3}, {0.4, 0.6}}, {{0.2, 0.8}, {0.1, 0.9}}, {{0.7, 0.3}, {0.4, 0.6}},
                           {{0.2, 0.8}, {0.1, 0.9}}};
  s.transitions[1].rows = {{{0.9, 0.1}, {0.6, 0.4}}, {{0.9, 0.1}, {0.6, 0.4}}, {{0.3, 0.7}, {0.2, 0.8}},
                           {{0.3, 0.7}, {0.2, 0.8}}};
  return s;
}

void expect_matches_oracle(const Scenario& s, double tol) {
  if (s.discount > 0.0) {
    ASSERT_TRUE(validate_scenario(s).empty());
  }
  const auto sol = solve_all(s);
  const auto full = testing::exhaustive_policy_values(s, std::nullopt);
  for (std::size_t k = 0; k < full.size(); ++k) EXPECT_NEAR(sol.full.values[k], full[k], tol);
  for (AgentId i = 0; i < s.agent_count(); ++i) {
    const auto reduced = testing::exhaustive_policy_values(s, i);
    ASSERT_EQ(reduced.size(), sol.without[i].values.size());
    for (std::size_t k = 0; k < reduced.size(); ++k) EXPECT_NEAR(sol.without[i].values[k], reduced[k], tol);
  }
}

TEST(Solver, ZeroValuesGiveZeroWelfare) {
  for (double d : {0.0, 0.3, 0.9}) {
    const auto sol = solve_all(zero_scenario(d));
    for (double w : sol.full.values) EXPECT_EQ(w, 0.0);
    for (const auto& t : sol.without)
      for (double w : t.values) EXPECT_EQ(w, 0.0);
  }
}

TEST(Solver, MyopicAtZeroDiscount) {
  auto s = golden_scenario();
  s.discount = 0.0;
  const auto sol = solve_all(s);
  EXPECT_EQ(sol.full.stats.iterations, 1u);
  for (const auto& theta : enumerate_profiles(s)) {
    double best = -1e300;
    for (Allocation a : s.allocations()) {
      double sum = 0.0;
      for (AgentId i = 0; i < 3; ++i) sum += expected_value(s, i, a, theta);
      best = std::max(best, sum);
    }
    EXPECT_EQ(sol.welfare(theta), best);
  }
}

TEST(Solver, ExplicitPairMatchesPolicyEnumeration) { expect_matches_oracle(explicit_pair(), 2e-9); }

TEST(Solver, RandomSmallScenariosMatchPolicyEnumeration) {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<std::size_t>> shapes{{2}, {3}, {2, 2}, {2, 3}, {3, 3}};
  for (const auto& shape : shapes)
    for (double d : {0.0, 0.5, 0.9}) expect_matches_oracle(testing::random_scenario(rng, shape, d), 2e-9);
}

TEST(Solver, ResidualTraceContracts) {
  const auto s = golden_scenario();
  const auto sol = solve_all(s);
  for (const ValueTable* t : {&sol.full, &sol.without[0], &sol.without[1], &sol.without[2]}) {
    const auto& trace = t->stats.residual_trace;
    ASSERT_GE(trace.size(), 1u);
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], s.discount * trace[k - 1] + 1e-15);
    EXPECT_LE(t->stats.residual, t->stats.tolerance);
  }
}

TEST(Solver, HighDiscountContractsUpToRounding) {
  std::mt19937_64 rng(8);
  for (double d : {0.9, 0.95, 0.99}) {
    const auto s = testing::random_scenario(rng, {3, 3}, d);
    const auto t = solve_welfare(s, std::nullopt);
    double norm = 1.0;
    for (double w : t.values) norm = std::max(norm, std::abs(w));
    const auto& tr = t.stats.residual_trace;
    for (std::size_t k = 1; k < tr.size(); ++k)
      EXPECT_LE(tr[k], d * tr[k - 1] + 1e-15 + 16.0 * std::numeric_limits<double>::epsilon() * norm);
  }
}

TEST(Solver, IterationCapRaisesNamingTheMdp) {
  SolverOptions opts;
  opts.max_iterations = 3;
  try {
    solve_welfare(golden_scenario(), AgentId{1}, opts);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.mdp(), "W_minus_1");
  }
}

TEST(Solver, RejectsDiscountOutsideUnitInterval) {
  auto s = golden_scenario();
  s.discount = 1.0;
  EXPECT_THROW(solve_welfare(s, std::nullopt), std::invalid_argument);
}

TEST(Solver, WelfareDominatesReducedEconomies) {
  std::mt19937_64 rng(5);
  std::vector<Scenario> cases{golden_scenario()};
  for (int k = 0; k < 5; ++k) cases.push_back(testing::random_scenario(rng, {3, 2, 2}, 0.7));
  for (const auto& s : cases) {
    const auto sol = solve_all(s);
    for (const auto& theta : enumerate_profiles(s))
      for (AgentId i = 0; i < s.agent_count(); ++i) EXPECT_GE(sol.welfare(theta), sol.welfare_without(i, theta) - 1e-12);
  }
}

TEST(Solver, SolvesOneTablePerAgentPlusOne) {
  const auto sol = solve_all(golden_scenario());
  EXPECT_EQ(sol.mdp_count(), 4u);
  EXPECT_EQ(sol.full.values.size(), 27u);
  for (const auto& t : sol.without) EXPECT_EQ(t.values.size(), 9u);
}

TEST(Solver, LoneBuyerEconomyIsEmpty) {
  Scenario s;
  s.agents = market_agents({3});
  s.discount = 0.7;
  s.values = ParametricValues{1.0, 0.5, 0.6};
  s.transitions = {constant_kernel(2, testing::identity_matrix(3))};
  const auto sol = solve_all(s);
  for (double w : sol.full.values) EXPECT_EQ(w, 0.0);
  for (double w : sol.without[0].values) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(efficient_allocation(sol, TypeProfile{0}), Allocation(0));
}

TEST(Solver, ReducedTableIgnoresOwnType) {
  const auto sol = solve_all(golden_scenario());
  for (const auto& theta : enumerate_profiles(golden_scenario()))
    for (AgentId i = 0; i < 3; ++i)
      for (TypeIndex t = 0; t < 3; ++t) {
        auto other = theta;
        other[i] = t;
        EXPECT_EQ(sol.welfare_without(i, theta), sol.welfare_without(i, other));
      }
}

TEST(Solver, GreedyPolicyAttainsBellmanMaximum) {
  const auto s = golden_scenario();
  const auto sol = solve_all(s);
  const TypeProfile hll{0, 2, 2};
  double best = -1e300;
  Allocation arg;
  for (std::uint32_t m = 0; m < 8; ++m) {
    const double q = bellman_q(s, sol, Allocation(m), hll);
    if (q > best + kTieTolerance) {
      best = q;
      arg = Allocation(m);
    }
  }
  EXPECT_EQ(efficient_allocation(sol, hll), arg);
  EXPECT_NEAR(sol.welfare(hll), best, 2e-9);
}

TEST(Solver, DominantEmptyAllocation) {
  Scenario s;
  s.agents = market_agents({2, 2});
  s.discount = 0.5;
  s.values = testing::make_tables(s, [](AgentId, Allocation, const TypeProfile&) { return -1.0; });
  s.transitions = {constant_kernel(4, {uniform_row(2), uniform_row(2)}),
                   constant_kernel(4, {uniform_row(2), uniform_row(2)})};
  const auto sol = solve_all(s);
  for (const auto& theta : enumerate_profiles(s)) EXPECT_EQ(efficient_allocation(sol, theta), Allocation(0));
}

TEST(Solver, SymmetricSellersTieTowardLowerIndex) {
  Scenario s;
  s.agents = market_agents({1, 1, 1});
  s.discount = 0.0;
  // The buyer needs exactly one seller; both cost the same.
  s.values = testing::make_tables(s, [](AgentId i, Allocation a, const TypeProfile&) {
    if (i == 0) return a.size() == 2 ? 1.0 : -0.5;
    return -0.25;
  });
  s.transitions.assign(3, constant_kernel(8, {{1.0}}));
  const auto sol = solve_all(s);
  EXPECT_EQ(efficient_allocation(sol, TypeProfile{0, 0, 0}), Allocation::of({0, 1}));
}

TEST(Solver, ResultIndependentOfThreadCount) {
  const auto s = golden_scenario();
  SolverOptions one;
  one.threads = 1;
  SolverOptions many;
  many.threads = 4;
  const auto a = solve_all(s, one);
  const auto b = solve_all(s, many);
  EXPECT_EQ(a.full.values, b.full.values);
  for (AgentId i = 0; i < 3; ++i) EXPECT_EQ(a.without[i].values, b.without[i].values);
}

TEST(Solver, SolutionCsvShape) {
  const auto s = golden_scenario();
  std::ostringstream os;
  write_solution_csv(os, s, solve_all(s));
  const auto text = os.str();
  EXPECT_EQ(text.rfind("profile_index,profile_labels,W,W_minus_0,W_minus_1,W_minus_2,allocation_bitmask\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 28);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

}  // namespace
}  // namespace mechsim
