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

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mechsim/core_model.hpp"
#include "mechsim/csv.hpp"
#include "mechsim/mechanisms.hpp"
#include "mechsim/welfare_solver.hpp"

namespace mechsim {

struct AuditOptions {
  double tol_audit = 1e-6;
  /// Tolerance the welfare MDPs were solved to; EFF allows 2x this.
  double solver_tol = 1e-9;
  /// Offsets added to an agent's own value report in the value-stage checks.
  std::vector<double> value_offsets{-1.0, -1e-3, 1e-3, 1.0, 1e3};
};

enum class Property { eff, epic, epir, pc, bb };

inline constexpr std::array<Property, 5> kProperties{Property::eff, Property::epic, Property::epir, Property::pc,
                                                     Property::bb};

inline const char* to_string(Property p) {
  switch (p) {
    case Property::eff: return "EFF";
    case Property::epic: return "EPIC";
    case Property::epir: return "EPIR";
    case Property::pc: return "PC";
    case Property::bb: return "BB";
  }
  return "?";
}

/// One comparison. margin >= -tolerance means the property holds there.
struct Check {
  Property property = Property::eff;
  std::size_t profile_index = 0;
  std::optional<AgentId> agent;
  std::string deviation;
  double margin = 0.0;
  bool pass = true;
};

struct PropertyVerdict {
  Property property = Property::eff;
  bool pass = true;
  std::size_t comparisons = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::vector<Check> counterexamples;
};

struct UtilityPoint {
  std::size_t profile_index = 0;
  AgentId agent = 0;
  bool truthful = true;
  TypeIndex report = 0;
  double utility = 0.0;
};

struct PaymentPoint {
  std::size_t profile_index = 0;
  PaymentVector payments;
  double sum = 0.0;
};

struct PropertyReport {
  std::string mechanism;
  std::array<PropertyVerdict, 5> verdicts;
  std::vector<Check> checks;
  std::vector<UtilityPoint> utilities;
  std::vector<PaymentPoint> payments;
  std::size_t type_comparisons = 0;
  std::size_t value_comparisons = 0;
  /// Value-report perturbations that moved the deviator's own payment at all.
  std::size_t value_report_changes = 0;

  const PropertyVerdict& verdict(Property p) const { return verdicts[static_cast<std::size_t>(p)]; }
  PropertyVerdict& verdict(Property p) { return verdicts[static_cast<std::size_t>(p)]; }

  void record(Check c, double tolerance) {
    c.pass = c.margin >= -tolerance;
    auto& v = verdict(c.property);
    ++v.comparisons;
    v.worst_margin = std::min(v.worst_margin, c.margin);
    if (!c.pass) {
      v.pass = false;
      v.counterexamples.push_back(c);
    }
    checks.push_back(std::move(c));
  }
};

/// Expected discounted utility of agent i when it reports `report` for one
/// round at true profile theta and everyone is truthful otherwise:
///   sum_j v_j(a*(thetahat), theta) + delta * E[W(theta') | a*(thetahat), theta] - W_{-i}(theta_{-i}).
inline double deviation_utility(const Scenario& s, const WelfareSolution& sol, AgentId i,
                                std::span<const TypeIndex> theta, TypeIndex report) {
  TypeProfile reported(theta.begin(), theta.end());
  reported[i] = report;
  const Allocation a = efficient_allocation(sol, reported);
  double welfare = 0.0;
  for (AgentId j = 0; j < s.agent_count(); ++j) welfare += expected_value(s, j, a, theta);
  return welfare + s.discount * expected_next(s, sol.full, a, theta) - sol.welfare_without(i, theta);
}

/// Per-agent utilities under an arbitrary rule. Continuation play is
/// truthful, so the continuation value solves
///   U_i(theta) = E_omega[V_i + p_i] + delta * E[U_i(theta') | a(theta), theta]
/// which is computed by fixed-point iteration to the solver tolerance.
class UtilityModel {
 public:
  UtilityModel(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule, double tol = 1e-9)
      : s_(s), sol_(sol), rule_(rule), space_(s.profile_space()) {
    if (rule_.kind == MechanismKind::gdpm) return;
    const std::size_t n = s.agent_count();
    const std::size_t size = space_.size();
    std::vector<std::vector<double>> stage(n, std::vector<double>(size));
    std::vector<Allocation> alloc(size);
    for (std::size_t k = 0; k < size; ++k) {
      const auto theta = space_.decode(k);
      alloc[k] = rule_.allocate(s_, sol_, theta);
      for (AgentId i = 0; i < n; ++i) stage[i][k] = stage_utility(i, theta, theta, alloc[k]);
    }
    continuation_.assign(n, std::vector<double>(size, 0.0));
    for (AgentId i = 0; i < n; ++i) {
      auto& u = continuation_[i];
      if (s.discount == 0.0) {
        u = stage[i];
        continue;
      }
      const double threshold = tol * (1.0 - s.discount) / (2.0 * s.discount);
      for (std::size_t it = 0; it < 10'000'000; ++it) {
        std::vector<double> next(size);
        double diff = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
          const auto theta = space_.decode(k);
          next[k] = stage[i][k] + s.discount * expected_next(s_, space_, u, alloc[k], theta);
          diff = std::max(diff, std::abs(next[k] - u[k]));
        }
        u.swap(next);
        if (diff <= threshold) break;
      }
    }
  }

  double truthful(AgentId i, std::span<const TypeIndex> theta) const { return deviation(i, theta, theta[i]); }

  double deviation(AgentId i, std::span<const TypeIndex> theta, TypeIndex report) const {
    if (rule_.kind == MechanismKind::gdpm) return deviation_utility(s_, sol_, i, theta, report);
    TypeProfile reported(theta.begin(), theta.end());
    reported[i] = report;
    const Allocation a = rule_.allocate(s_, sol_, reported);
    return stage_utility(i, theta, reported, a) + s_.discount * expected_next(s_, space_, continuation_[i], a, theta);
  }

  /// E_omega[V_i(a, theta, omega) + p_i(thetahat, a, V(a, theta, omega))] with truthful value reports.
  double stage_utility(AgentId i, std::span<const TypeIndex> theta, std::span<const TypeIndex> reported,
                       Allocation a) const {
    double sum = 0.0;
    std::vector<double> values(s_.agent_count());
    for (std::size_t w = 0; w < s_.world.size(); ++w) {
      for (AgentId j = 0; j < s_.agent_count(); ++j) values[j] = realized_value(s_, j, a, theta, w);
      const auto p = rule_.pay(s_, sol_, reported, a, values);
      sum += s_.world.weights[w] * (values[i] + p[i]);
    }
    return sum;
  }

  /// Truthful continuation table for generic rules (empty for GDPM).
  const std::vector<double>& continuation(AgentId i) const { return continuation_[i]; }

 private:
  const Scenario& s_;
  const WelfareSolution& sol_;
  const MechanismRule& rule_;
  ProfileSpace space_;
  std::vector<std::vector<double>> continuation_;
};

namespace detail {

inline std::string offset_label(double off) { return std::string("value") + (off >= 0 ? "+" : "") + csv::num(off); }

inline double max_q(const Scenario& s, const WelfareSolution& sol, std::span<const TypeIndex> theta) {
  double best = -std::numeric_limits<double>::infinity();
  for (Allocation a : s.allocations()) best = std::max(best, bellman_q(s, sol, a, theta));
  return best;
}

}  // namespace detail

/// EPIC: every one-shot own-type misreport and every own-value misreport.
inline void check_epic(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule,
                       const UtilityModel& um, const AuditOptions& opts, PropertyReport& rep) {
  const auto space = s.profile_space();
  const std::size_t n = s.agent_count();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto theta = space.decode(k);
    for (AgentId i = 0; i < n; ++i) {
      const double truth = um.truthful(i, theta);
      rep.utilities.push_back({k, i, true, theta[i], truth});
      for (TypeIndex r = 0; r < s.agents[i].type_count(); ++r) {
        if (r == theta[i]) continue;
        const double dev = um.deviation(i, theta, r);
        rep.utilities.push_back({k, i, false, r, dev});
        ++rep.type_comparisons;
        rep.record({Property::epic, k, i, s.agents[i].type_name(r), truth - dev, true}, opts.tol_audit);
      }
      // Value stage: agent i inflates or deflates its own report at each world state.
      TypeProfile reported = theta;
      for (TypeIndex r = 0; r < s.agents[i].type_count(); ++r) {
        reported[i] = r;
        const Allocation a = rule.allocate(s, sol, reported);
        for (std::size_t w = 0; w < s.world.size(); ++w) {
          std::vector<double> values(n);
          for (AgentId j = 0; j < n; ++j) values[j] = realized_value(s, j, a, theta, w);
          const double base = rule.pay(s, sol, reported, a, values)[i];
          for (double off : opts.value_offsets) {
            auto lied = values;
            lied[i] += off;
            const double gain = rule.pay(s, sol, reported, a, lied)[i] - base;
            ++rep.value_comparisons;
            if (gain != 0.0) ++rep.value_report_changes;
            rep.record({Property::epic, k, i, s.agents[i].type_name(r) + "/" + detail::offset_label(off), -gain, true},
                       opts.tol_audit);
          }
        }
      }
    }
  }
}

inline void check_epir(const Scenario& s, const UtilityModel& um, const AuditOptions& opts, PropertyReport& rep) {
  const auto space = s.profile_space();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto theta = space.decode(k);
    for (AgentId i = 0; i < s.agent_count(); ++i)
      rep.record({Property::epir, k, i, "-", um.truthful(i, theta), true}, opts.tol_audit);
  }
}

/// EFF at truthful reports, and at every strictly profitable unilateral
/// best-response report (the reports a strategic agent would actually send).
inline void check_eff(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule,
                      const UtilityModel& um, const AuditOptions& opts, PropertyReport& rep) {
  const auto space = s.profile_space();
  const double tol = 2.0 * opts.solver_tol;
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto theta = space.decode(k);
    const double best = detail::max_q(s, sol, theta);
    const Allocation a = rule.allocate(s, sol, theta);
    rep.record({Property::eff, k, std::nullopt, "-", bellman_q(s, sol, a, theta) - best, true}, tol);
    for (AgentId i = 0; i < s.agent_count(); ++i) {
      const double truth = um.truthful(i, theta);
      std::optional<TypeIndex> best_report;
      double best_gain = opts.tol_audit;
      for (TypeIndex r = 0; r < s.agents[i].type_count(); ++r) {
        if (r == theta[i]) continue;
        const double gain = um.deviation(i, theta, r) - truth;
        if (gain > best_gain) {
          best_gain = gain;
          best_report = r;
        }
      }
      if (!best_report) continue;
      TypeProfile reported = theta;
      reported[i] = *best_report;
      const Allocation induced = rule.allocate(s, sol, reported);
      rep.record({Property::eff, k, i, s.agents[i].type_name(*best_report), bellman_q(s, sol, induced, theta) - best,
                  true},
                 tol);
    }
  }
}

/// PC (buyers pay, allocated sellers receive) and BB (transfers sum to at
/// most zero) at truthful reports with expected values as value reports.
inline void check_pc_bb(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule,
                        const AuditOptions& opts, PropertyReport& rep) {
  const auto space = s.profile_space();
  const std::size_t n = s.agent_count();
  for (std::size_t k = 0; k < space.size(); ++k) {
    const auto theta = space.decode(k);
    const Allocation a = rule.allocate(s, sol, theta);
    std::vector<double> values(n);
    for (AgentId j = 0; j < n; ++j) values[j] = expected_value(s, j, a, theta);
    const auto p = rule.pay(s, sol, theta, a, values);
    double sum = 0.0;
    for (double x : p) sum += x;
    rep.payments.push_back({k, p, sum});
    for (AgentId i = 0; i < n; ++i) {
      if (s.agents[i].role == Role::buyer)
        rep.record({Property::pc, k, i, "buyer", -p[i], true}, opts.tol_audit);
      else if (a.contains(i))
        rep.record({Property::pc, k, i, "seller", p[i], true}, opts.tol_audit);
    }
    rep.record({Property::bb, k, std::nullopt, "-", -sum, true}, opts.tol_audit);
  }
}

inline PropertyReport audit_rule(const Scenario& s, const WelfareSolution& sol, const MechanismRule& rule,
                                 const AuditOptions& opts = {}) {
  PropertyReport rep;
  rep.mechanism = rule.name;
  for (std::size_t k = 0; k < kProperties.size(); ++k) rep.verdicts[k].property = kProperties[k];
  const UtilityModel um(s, sol, rule, opts.solver_tol);
  check_eff(s, sol, rule, um, opts, rep);
  check_epic(s, sol, rule, um, opts, rep);
  check_epir(s, um, opts, rep);
  check_pc_bb(s, sol, rule, opts, rep);
  return rep;
}

struct AuditResult {
  std::vector<PropertyReport> reports;

  const PropertyReport* find(const std::string& mechanism) const {
    for (const auto& r : reports)
      if (r.mechanism == mechanism) return &r;
    return nullptr;
  }
};

inline AuditResult audit(const Scenario& s, const WelfareSolution& sol, const std::vector<MechanismRule>& rules,
                         const AuditOptions& opts = {}) {
  AuditResult out;
  for (const auto& r : rules) out.reports.push_back(audit_rule(s, sol, r, opts));
  return out;
}

/// Verdict string in EFF, EPIC, EPIR, PC, BB order, e.g. "✓✓✓××".
inline std::string verdict_pattern(const PropertyReport& r) {
  std::string out;
  for (Property p : kProperties) out += r.verdict(p).pass ? "✓" : "×";
  return out;
}

inline std::string summary_matrix(const AuditResult& res) {
  std::ostringstream os;
  os << "mechanism";
  for (Property p : kProperties) os << '\t' << to_string(p);
  os << '\n';
  for (const auto& r : res.reports) {
    os << r.mechanism;
    for (Property p : kProperties) os << '\t' << (r.verdict(p).pass ? "✓" : "×");
    os << '\n';
  }
  return os.str();
}

/// property, profile_index, agent, deviation, margin, verdict
inline void write_verdicts_csv(std::ostream& os, const PropertyReport& r) {
  csv::row(os, {"property", "profile_index", "agent", "deviation", "margin", "verdict"});
  for (const auto& c : r.checks)
    csv::row(os, {to_string(c.property), std::to_string(c.profile_index), c.agent ? std::to_string(*c.agent) : "-",
                  c.deviation, csv::num(c.margin), c.pass ? "pass" : "fail"});
}

/// profile_index, agent, report_kind, deviation_type, utility
inline void write_utilities_csv(std::ostream& os, const Scenario& s, const PropertyReport& r) {
  csv::row(os, {"profile_index", "agent", "report_kind", "deviation_type", "utility"});
  for (const auto& u : r.utilities)
    csv::row(os, {std::to_string(u.profile_index), std::to_string(u.agent), u.truthful ? "truth" : "deviation",
                  s.agents[u.agent].type_name(u.report), csv::num(u.utility)});
}

/// profile_index, p_0..p_n, payment_sum
inline void write_payments_csv(std::ostream& os, std::size_t agents, const PropertyReport& r) {
  std::vector<std::string> h{"profile_index"};
  for (std::size_t i = 0; i < agents; ++i) h.push_back("p_" + std::to_string(i));
  h.push_back("payment_sum");
  csv::row(os, h);
  for (const auto& p : r.payments) {
    std::vector<std::string> c{std::to_string(p.profile_index)};
    for (double x : p.payments) c.push_back(csv::num(x));
    c.push_back(csv::num(p.sum));
    csv::row(os, c);
  }
}

}  // namespace mechsim
