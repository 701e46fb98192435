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

#include <cmath>
#include <fstream>
#include <sstream>

#include "mechsim/mechsim.hpp"
#include "support.hpp"

namespace mechsim {
namespace {

using testing::constant_kernel;
using testing::market_agents;

std::string trace_text(const Scenario& s, const EpisodeTrace& t) {
  std::ostringstream os;
  write_trace_csv(os, s, t);
  return os.str();
}

class GoldenEpisodes : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    scenario_ = new Scenario(golden_scenario());
    solution_ = new WelfareSolution(solve_all(*scenario_));
  }
  static void TearDownTestSuite() {
    delete solution_;
    delete scenario_;
  }
  static Scenario* scenario_;
  static WelfareSolution* solution_;
};
Scenario* GoldenEpisodes::scenario_ = nullptr;
WelfareSolution* GoldenEpisodes::solution_ = nullptr;

TEST_F(GoldenEpisodes, SingleTruthfulRoundMatchesPayment) {
  EpisodeConfig cfg;
  cfg.horizon = 1;
  cfg.seed = 3;
  cfg.initial = {1, 2, 0};
  const auto trace = run_episode(*scenario_, *solution_, gdpm_rule(), cfg);
  ASSERT_EQ(trace.rounds.size(), 1u);
  const auto& r = trace.rounds[0];
  EXPECT_EQ(r.payments, gdpm_payment(*scenario_, *solution_, cfg.initial, r.allocation, r.reported_values));
  EXPECT_EQ(r.allocation, efficient_allocation(*solution_, cfg.initial));
}

TEST_F(GoldenEpisodes, SameSeedSameTrace) {
  EpisodeConfig cfg;
  cfg.seed = 123;
  cfg.initial = {0, 1, 2};
  cfg.misreports = {{2, 0, std::nullopt}};
  const auto a = run_episode(*scenario_, *solution_, const_rule(0.3), cfg);
  const auto b = run_episode(*scenario_, *solution_, const_rule(0.3), cfg);
  EXPECT_EQ(trace_text(*scenario_, a), trace_text(*scenario_, b));
  EXPECT_EQ(a.discounted_utility, b.discounted_utility);
  cfg.seed = 124;
  const auto c = run_episode(*scenario_, *solution_, const_rule(0.3), cfg);
  EXPECT_NE(trace_text(*scenario_, a), trace_text(*scenario_, c));
}

TEST_F(GoldenEpisodes, DiscountAccountingIsExact) {
  EpisodeConfig cfg;
  cfg.seed = 9;
  cfg.initial = {2, 2, 2};
  const auto trace = run_episode(*scenario_, *solution_, gdpm_rule(), cfg);
  ASSERT_EQ(trace.rounds.size(), 50u);
  for (AgentId i = 0; i < 3; ++i) {
    double sum = 0.0;
    double f = 1.0;
    for (const auto& r : trace.rounds) {
      sum += f * (r.realized[i] + r.payments[i]);
      f *= scenario_->discount;
    }
    EXPECT_EQ(trace.discounted_utility[i], sum);
  }
}

TEST_F(GoldenEpisodes, MisreportOnlyTouchesItsRoundAndAgent) {
  EpisodeConfig cfg;
  cfg.seed = 5;
  cfg.initial = {1, 1, 1};
  cfg.misreports = {{1, 0, std::size_t{0}}};
  const auto trace = run_episode(*scenario_, *solution_, gdpm_rule(), cfg);
  const auto& r0 = trace.rounds[0];
  EXPECT_EQ(r0.reported_types, (TypeProfile{1, 0, 1}));
  for (std::size_t t = 1; t < trace.rounds.size(); ++t)
    EXPECT_EQ(trace.rounds[t].reported_types, trace.rounds[t].true_types);
}

TEST_F(GoldenEpisodes, InvalidConfigsAreRejected) {
  EpisodeConfig cfg;
  cfg.initial = {0, 0, 0};
  cfg.horizon = 0;
  EXPECT_THROW(run_episode(*scenario_, *solution_, gdpm_rule(), cfg), std::invalid_argument);
  cfg.horizon = 5;
  cfg.misreports = {{3, 0, std::nullopt}};
  EXPECT_THROW(run_episode(*scenario_, *solution_, gdpm_rule(), cfg), std::invalid_argument);
  cfg.misreports = {{1, 3, std::nullopt}};
  EXPECT_THROW(run_episode(*scenario_, *solution_, gdpm_rule(), cfg), std::invalid_argument);
  cfg.misreports.clear();
  cfg.initial = {0, 0};
  EXPECT_THROW(run_episode(*scenario_, *solution_, gdpm_rule(), cfg), std::invalid_argument);
}

TEST_F(GoldenEpisodes, TraceMatchesFrozenFixture) {
  EpisodeConfig cfg;
  cfg.seed = 7;
  cfg.horizon = 20;
  cfg.initial = {0, 1, 2};
  cfg.misreports = {{1, 0, std::size_t{0}}};
  const auto trace = run_episode(*scenario_, *solution_, gdpm_rule(), cfg);
  std::ifstream in(MECHSIM_TEST_DATA "/golden_trace_seed7.csv", std::ios::binary);
  ASSERT_TRUE(in) << "missing fixture";
  std::stringstream expected;
  expected << in.rdbuf();
  EXPECT_EQ(trace_text(*scenario_, trace), expected.str());
}

TEST_F(GoldenEpisodes, TruncationBoundIsGeometricTail) {
  EpisodeConfig cfg;
  cfg.seed = 1;
  cfg.initial = {0, 0, 0};
  const auto trace = run_episode(*scenario_, *solution_, gdpm_rule(), cfg);
  for (AgentId i = 0; i < 3; ++i) {
    const double b = stage_utility_bound(*scenario_, *solution_, gdpm_rule(), i);
    EXPECT_DOUBLE_EQ(trace.truncation_bound[i], std::pow(0.7, 50) / 0.3 * b);
    EXPECT_GT(trace.truncation_bound[i], 0.0);
  }
}

TEST_F(GoldenEpisodes, MonteCarloIsReproducibleAcrossThreadCounts) {
  const auto a = monte_carlo_utility(*scenario_, *solution_, gdpm_rule(), 1, {1, 1, 1}, 0, 200, 30, 77, 1);
  const auto b = monte_carlo_utility(*scenario_, *solution_, gdpm_rule(), 1, {1, 1, 1}, 0, 200, 30, 77, 4);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.standard_error, b.standard_error);
}

TEST_F(GoldenEpisodes, MonteCarloAgreesWithClosedFormAtMMM) {
  const TypeProfile mmm{1, 1, 1};
  const auto est = monte_carlo_utility(*scenario_, *solution_, gdpm_rule(), 1, mmm, 0, 4000, 50, 2026);
  const double closed = deviation_utility(*scenario_, *solution_, 1, mmm, 0);
  EXPECT_LE(std::abs(est.mean - closed), 3.0 * est.standard_error + est.truncation_bound);
}

TEST(Episodes, IdentityKernelsRepeatTheSameRound) {
  Scenario s;
  s.agents = market_agents({3, 3, 3});
  s.discount = 0.7;
  s.values = ParametricValues{1.0, 0.5, 0.6};
  s.transitions.assign(3, constant_kernel(8, testing::identity_matrix(3)));
  const auto sol = solve_all(s);
  EpisodeConfig cfg;
  cfg.horizon = 3;
  cfg.initial = {0, 1, 1};
  const auto trace = run_episode(s, sol, gdpm_rule(), cfg);
  for (std::size_t t = 1; t < 3; ++t) {
    EXPECT_EQ(trace.rounds[t].true_types, trace.rounds[0].true_types);
    EXPECT_EQ(trace.rounds[t].allocation, trace.rounds[0].allocation);
    EXPECT_EQ(trace.rounds[t].utilities, trace.rounds[0].utilities);
  }
  for (AgentId i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(trace.discounted_utility[i], trace.rounds[0].utilities[i] * (1.0 + 0.7 + 0.49));
}

TEST(Episodes, DegenerateDynamicsGiveZeroStandardError) {
  Scenario s;
  s.agents = market_agents({3, 3, 3});
  s.discount = 0.7;
  s.values = ParametricValues{1.0, 0.5, 0.6};
  s.transitions.assign(3, constant_kernel(8, testing::identity_matrix(3)));
  const auto sol = solve_all(s);
  const TypeProfile theta{0, 1, 0};
  const auto est = monte_carlo_utility(s, sol, gdpm_rule(), 2, theta, 2, 50, 50, 4);
  EXPECT_EQ(est.standard_error, 0.0);
  EXPECT_NEAR(est.mean, deviation_utility(s, sol, 2, theta, 2), est.truncation_bound + 1e-12);
}

TEST(Episodes, GoldenScenarioPassesValidation) {
  const auto s = golden_scenario();
  EXPECT_TRUE(validate_scenario(s).empty());
  EXPECT_EQ(s.profile_space().size(), 27u);
}

TEST(Episodes, WorldDrawsFollowWeights) {
  Scenario s;
  s.agents = market_agents({2});
  s.world.weights = {0.25, 0.75};
  s.world.perturbation = {{0.1}, {-0.1}};
  const CounterRng rng(17);
  std::size_t first = 0;
  const std::size_t rounds = 40000;
  for (std::size_t t = 0; t < rounds; ++t) first += draw_omega(s, rng, t) == 0;
  EXPECT_NEAR(static_cast<double>(first) / rounds, 0.25, 0.01);
}

}  // namespace
}  // namespace mechsim
