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

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mechsim/core_model.hpp"
#include "mechsim/csv.hpp"
#include "mechsim/rng.hpp"
#include "mechsim/welfare_solver.hpp"

namespace mechsim {

/// Transfer to each agent; negative means the agent pays.
using PaymentVector = std::vector<double>;
using ReportedValues = std::vector<double>;

enum class MechanismKind { gdpm, constant, custom };

/// An allocation rule plus a payment rule. Both read reports only.
struct MechanismRule {
  std::string name;
  MechanismKind kind = MechanismKind::custom;
  std::function<Allocation(const Scenario&, const WelfareSolution&, std::span<const TypeIndex>)> allocate;
  std::function<PaymentVector(const Scenario&, const WelfareSolution&, std::span<const TypeIndex>, Allocation,
                              std::span<const double>)>
      pay;
};

/// GDPM transfer to every agent, allocated or not:
///   p_i = sum_{j != i} Vhat_j + delta * E[W_{-i}(theta'_{-i}) | a, thetahat] - W_{-i}(thetahat_{-i}).
inline PaymentVector gdpm_payment(const Scenario& s, const WelfareSolution& sol, std::span<const TypeIndex> reported,
                                  Allocation a, std::span<const double> reported_values) {
  const std::size_t n = s.agent_count();
  PaymentVector p(n, 0.0);
  for (AgentId i = 0; i < n; ++i) {
    double others = 0.0;
    for (AgentId j = 0; j < n; ++j)
      if (j != i) others += reported_values[j];
    const auto& wi = sol.without[i];
    p[i] = others + s.discount * expected_next(s, wi, a, reported) - wi.at(reported);
  }
  return p;
}

/// CONST: each selected seller receives `price`; the first buyer is charged
/// price times the number of selected sellers. Everyone else gets zero.
inline PaymentVector const_payment(Allocation a, double price, std::span<const Role> roles) {
  PaymentVector p(roles.size(), 0.0);
  std::size_t selected = 0;
  for (AgentId i = 0; i < roles.size(); ++i)
    if (roles[i] == Role::seller && a.contains(i)) {
      p[i] = price;
      ++selected;
    }
  for (AgentId i = 0; i < roles.size(); ++i)
    if (roles[i] == Role::buyer) {
      p[i] = selected == 0 ? 0.0 : -price * static_cast<double>(selected);
      break;
    }
  return p;
}

inline std::vector<Role> roles_of(const Scenario& s) {
  std::vector<Role> r;
  for (const auto& a : s.agents) r.push_back(a.role);
  return r;
}

inline MechanismRule gdpm_rule() {
  MechanismRule r;
  r.name = "GDPM";
  r.kind = MechanismKind::gdpm;
  r.allocate = [](const Scenario&, const WelfareSolution& sol, std::span<const TypeIndex> reported) {
    return efficient_allocation(sol, reported);
  };
  r.pay = [](const Scenario& s, const WelfareSolution& sol, std::span<const TypeIndex> reported, Allocation a,
             std::span<const double> values) { return gdpm_payment(s, sol, reported, a, values); };
  return r;
}

/// CONST reuses the efficient allocation applied to the reports.
inline MechanismRule const_rule(double price) {
  MechanismRule r;
  r.name = "CONST";
  r.kind = MechanismKind::constant;
  r.allocate = [](const Scenario&, const WelfareSolution& sol, std::span<const TypeIndex> reported) {
    return efficient_allocation(sol, reported);
  };
  r.pay = [price](const Scenario& s, const WelfareSolution&, std::span<const TypeIndex>, Allocation a,
                  std::span<const double>) {
    const auto roles = roles_of(s);
    return const_payment(a, price, roles);
  };
  return r;
}

/// What one agent reports in a round; unset fields mean "truthful".
struct AgentReport {
  std::optional<TypeIndex> type;
  std::optional<double> value;
};

struct RoundRecord {
  std::size_t t = 0;
  TypeProfile true_types;
  TypeProfile reported_types;
  Allocation allocation;
  std::size_t omega = 0;
  std::vector<double> realized;
  ReportedValues reported_values;
  PaymentVector payments;
  std::vector<double> utilities;
};

/// One round of the two-stage protocol. Stage A collects type reports and
/// allocates; the world state realizes; Stage B agents observe values at the
/// true types under the chosen allocation and report them; payments follow.
/// An empty `reports` span means every agent is truthful.
inline RoundRecord run_round(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule, std::size_t t,
                             std::span<const TypeIndex> truth, std::span<const AgentReport> reports,
                             std::size_t omega) {
  const std::size_t n = s.agent_count();
  RoundRecord rec;
  rec.t = t;
  rec.true_types.assign(truth.begin(), truth.end());
  rec.reported_types = rec.true_types;
  for (AgentId i = 0; i < reports.size() && i < n; ++i)
    if (reports[i].type) rec.reported_types[i] = *reports[i].type;

  rec.allocation = rule.allocate(s, sol, rec.reported_types);
  rec.omega = omega;

  rec.realized.resize(n);
  rec.reported_values.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    rec.realized[i] = realized_value(s, i, rec.allocation, rec.true_types, omega);
    const bool lies = i < reports.size() && reports[i].value.has_value();
    rec.reported_values[i] = lies ? *reports[i].value : rec.realized[i];
  }

  rec.payments = rule.pay(s, sol, rec.reported_types, rec.allocation, rec.reported_values);
  rec.utilities.resize(n);
  for (AgentId i = 0; i < n; ++i) rec.utilities[i] = rec.realized[i] + rec.payments[i];
  return rec;
}

/// Inverse-CDF draw from a finite distribution.
inline std::size_t sample_index(std::span<const double> weights, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return k;
  }
  // u landed in the rounding gap above the cumulative sum: take the last
  // outcome with positive mass.
  for (std::size_t k = weights.size(); k-- > 0;)
    if (weights[k] > 0.0) return k;
  return 0;
}

/// Samples theta_{t+1} one agent at a time from F_i(. | a, theta_i); draw for
/// agent i uses the (t, i) substream.
inline TypeProfile next_types(const Scenario& s, std::span<const TypeIndex> theta, Allocation a, const CounterRng& rng,
                              std::size_t t) {
  TypeProfile next(theta.size());
  for (AgentId i = 0; i < theta.size(); ++i)
    next[i] = static_cast<TypeIndex>(
        sample_index(s.transitions[i].row(a, theta[i]), rng.uniform(t, i, CounterRng::kTransition)));
  return next;
}

inline std::size_t draw_omega(const Scenario& s, const CounterRng& rng, std::size_t t) {
  if (s.world.size() == 1) return 0;
  return sample_index(s.world.weights, rng.uniform(t, s.agent_count(), CounterRng::kWorld));
}

inline std::string profile_string(std::span<const TypeIndex> theta) {
  std::string out;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (k) out += ':';
    out += std::to_string(theta[k]);
  }
  return out;
}

/// RoundRecord CSV: t, true_profile, reported_profile, allocation_bitmask,
/// omega_index, V_0..V_n, Vhat_0..Vhat_n, p_0..p_n, u_0..u_n.
inline void write_round_header(std::ostream& os, std::size_t n) {
  std::vector<std::string> h{"t", "true_profile", "reported_profile", "allocation_bitmask", "omega_index"};
  for (const char* prefix : {"V_", "Vhat_", "p_", "u_"})
    for (std::size_t i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
  csv::row(os, h);
}

inline void write_round(std::ostream& os, const RoundRecord& r) {
  std::vector<std::string> c{std::to_string(r.t), profile_string(r.true_types), profile_string(r.reported_types),
                             std::to_string(r.allocation.mask()), std::to_string(r.omega)};
  for (const auto* v : {&r.realized, &r.reported_values, &r.payments, &r.utilities})
    for (double x : *v) c.push_back(csv::num(x));
  csv::row(os, c);
}

}  // namespace mechsim
