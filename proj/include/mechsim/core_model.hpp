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

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mechsim {

using AgentId = std::size_t;
using TypeIndex = std::size_t;

/// A type profile holds one type index per agent, agent 0 first.
using TypeProfile = std::vector<TypeIndex>;

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr std::size_t kMaxAgents = 16;

/// A subset of agents, stored as a bitmask (bit i set iff agent i is selected).
class Allocation {
 public:
  constexpr Allocation() = default;
  constexpr explicit Allocation(std::uint32_t mask) : mask_(mask) {}

  static Allocation of(std::initializer_list<AgentId> agents) {
    std::uint32_t mask = 0;
    for (AgentId i : agents) mask |= (1u << i);
    return Allocation(mask);
  }

  constexpr std::uint32_t mask() const { return mask_; }
  constexpr bool contains(AgentId i) const { return i < 32 && ((mask_ >> i) & 1u) != 0; }
  constexpr bool empty() const { return mask_ == 0; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(mask_)); }
  constexpr bool subset_of(Allocation other) const { return (mask_ & ~other.mask_) == 0; }

  constexpr auto operator<=>(const Allocation&) const = default;

 private:
  std::uint32_t mask_ = 0;
};

enum class Role { buyer, seller };

inline const char* to_string(Role r) { return r == Role::buyer ? "buyer" : "seller"; }

struct AgentSpec {
  Role role = Role::seller;
  /// Numeric label per type (e.g. 1, 0.75, 0.5). Only value models read these.
  std::vector<double> labels;
  /// Optional short names per type ("H", "M", "L"); empty means unnamed.
  std::vector<std::string> names;

  std::size_t type_count() const { return labels.size(); }

  std::string type_name(TypeIndex t) const {
    if (t < names.size()) return names[t];
    return std::to_string(t);
  }
};

/// The parametric buyer/seller family:
///   v0 = (k1 / label(theta0) * sum_{j in a, j != 0} label(theta_j) - k2) * [0 in a]
///   vj = -k3 * label(theta_j)^2 * [j in a]
struct ParametricValues {
  double k1 = 1.0;
  double k2 = 0.5;
  double k3 = 0.6;
};

/// Explicit expected-value tables: tables[agent][mask] holds one value per
/// profile index. An empty row stands for all zeros.
struct TableValues {
  std::vector<std::vector<std::vector<double>>> tables;
};

using ValueModel = std::variant<ParametricValues, TableValues>;

/// Per-agent transition kernel F_i(next | a, type): rows[mask][type] is a
/// distribution over next types.
struct AgentKernel {
  std::vector<std::vector<std::vector<double>>> rows;

  std::span<const double> row(Allocation a, TypeIndex t) const { return rows[a.mask()][t]; }
};

/// Finite world states with additive, allocation-gated perturbations:
///   V_i(a, theta, omega) = v_i(a, theta) + [i in a] * perturbation[omega][i].
struct WorldModel {
  std::vector<double> weights{1.0};
  std::vector<std::vector<double>> perturbation{{}};

  std::size_t size() const { return weights.size(); }
  double offset(std::size_t omega, AgentId i) const {
    const auto& row = perturbation[omega];
    return i < row.size() ? row[i] : 0.0;
  }
};

/// Mixed-radix indexing over a subset of agents' type spaces. Members are
/// listed in increasing agent order; the first member varies slowest.
class ProfileSpace {
 public:
  ProfileSpace() = default;
  ProfileSpace(std::vector<std::size_t> type_counts, std::vector<AgentId> members)
      : type_counts_(std::move(type_counts)), members_(std::move(members)) {
    strides_.assign(members_.size(), 1);
    size_ = 1;
    for (std::size_t k = members_.size(); k-- > 0;) {
      strides_[k] = size_;
      size_ *= type_counts_[members_[k]];
    }
  }

  static ProfileSpace full(std::vector<std::size_t> type_counts) {
    std::vector<AgentId> members(type_counts.size());
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
    return ProfileSpace(std::move(type_counts), std::move(members));
  }

  std::size_t size() const { return size_; }
  std::size_t agent_count() const { return type_counts_.size(); }
  const std::vector<AgentId>& members() const { return members_; }
  std::size_t stride(std::size_t k) const { return strides_[k]; }
  std::size_t type_count(AgentId i) const { return type_counts_[i]; }

  /// Reads only member components of a full-length profile.
  std::size_t index(std::span<const TypeIndex> profile) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < members_.size(); ++k) idx += profile[members_[k]] * strides_[k];
    return idx;
  }

  /// Full-length profile; non-member components are set to 0.
  TypeProfile decode(std::size_t idx) const {
    TypeProfile p(type_counts_.size(), 0);
    for (std::size_t k = 0; k < members_.size(); ++k) {
      p[members_[k]] = idx / strides_[k];
      idx %= strides_[k];
    }
    return p;
  }

 private:
  std::vector<std::size_t> type_counts_;
  std::vector<AgentId> members_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

struct Scenario {
  std::vector<AgentSpec> agents;
  double discount = 0.7;
  ValueModel values = ParametricValues{};
  std::vector<AgentKernel> transitions;
  WorldModel world;
  /// Restriction of the allocation space; empty means all 2^N subsets.
  std::vector<Allocation> feasible;
  /// CONST payment per selected seller, when the scenario carries one.
  std::optional<double> const_payment;

  std::size_t agent_count() const { return agents.size(); }
  std::size_t allocation_count() const { return std::size_t{1} << agents.size(); }

  std::vector<std::size_t> type_counts() const {
    std::vector<std::size_t> c;
    c.reserve(agents.size());
    for (const auto& a : agents) c.push_back(a.type_count());
    return c;
  }

  ProfileSpace profile_space() const { return ProfileSpace::full(type_counts()); }

  /// Allocation space in increasing bitmask order.
  std::vector<Allocation> allocations() const {
    if (!feasible.empty()) {
      auto out = feasible;
      std::sort(out.begin(), out.end());
      return out;
    }
    std::vector<Allocation> out;
    out.reserve(allocation_count());
    for (std::uint32_t m = 0; m < allocation_count(); ++m) out.emplace_back(m);
    return out;
  }
};

/// Expected value of agent i before averaging over the world state.
inline double base_value(const Scenario& s, AgentId i, Allocation a, std::span<const TypeIndex> theta) {
  if (const auto* p = std::get_if<ParametricValues>(&s.values)) {
    if (!a.contains(i)) return 0.0;
    if (i == 0) {
      double supply = 0.0;
      for (AgentId j = 1; j < s.agent_count(); ++j)
        if (a.contains(j)) supply += s.agents[j].labels[theta[j]];
      return p->k1 / s.agents[0].labels[theta[0]] * supply - p->k2;
    }
    const double level = s.agents[i].labels[theta[i]];
    return -p->k3 * level * level;
  }
  const auto& table = std::get<TableValues>(s.values).tables[i][a.mask()];
  if (table.empty()) return 0.0;
  std::size_t idx = 0;
  for (AgentId j = 0; j < s.agent_count(); ++j) idx = idx * s.agents[j].type_count() + theta[j];
  return table[idx];
}

/// Realized value V_i(a, theta, omega).
inline double realized_value(const Scenario& s, AgentId i, Allocation a, std::span<const TypeIndex> theta,
                             std::size_t omega) {
  const double v = base_value(s, i, a, theta);
  return a.contains(i) ? v + s.world.offset(omega, i) : v;
}

/// v_i(a, theta) = sum_omega Pi(omega) V_i(a, theta, omega).
inline double expected_value(const Scenario& s, AgentId i, Allocation a, std::span<const TypeIndex> theta) {
  if (s.world.size() == 1) return s.world.weights[0] * realized_value(s, i, a, theta, 0);
  double sum = 0.0;
  for (std::size_t w = 0; w < s.world.size(); ++w) sum += s.world.weights[w] * realized_value(s, i, a, theta, w);
  return sum;
}

/// Lexicographic enumeration of all type profiles, agent 0 slowest.
inline std::vector<TypeProfile> enumerate_profiles(const Scenario& s) {
  const auto space = s.profile_space();
  std::vector<TypeProfile> out;
  out.reserve(space.size());
  for (std::size_t k = 0; k < space.size(); ++k) out.push_back(space.decode(k));
  return out;
}

struct Violation {
  std::string code;
  std::string message;
};

namespace detail {

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string locus(AgentId i, Allocation a, TypeIndex t) {
  return "agent " + std::to_string(i) + ", allocation " + std::to_string(a.mask()) + ", type " + std::to_string(t);
}

inline bool finite_all(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Collects every violated model assumption. An empty result means the
/// scenario is valid; violations are data, never exceptions.
inline std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> out;
  auto add = [&out](std::string code, std::string msg) { out.push_back({std::move(code), std::move(msg)}); };

  const std::size_t n = s.agent_count();
  if (n == 0) {
    add("agents", "scenario has no agents");
    return out;
  }
  if (n > kMaxAgents) {
    add("agents", "scenario has " + std::to_string(n) + " agents; at most " + std::to_string(kMaxAgents) +
                      " are supported");
    return out;
  }

  bool shapes_ok = true;
  for (AgentId i = 0; i < n; ++i) {
    const auto& ag = s.agents[i];
    if (ag.labels.empty()) {
      add("types", "agent " + std::to_string(i) + " has an empty type set");
      shapes_ok = false;
    }
    if (!detail::finite_all(ag.labels)) add("types", "agent " + std::to_string(i) + " has a non-finite type label");
    if (!ag.names.empty() && ag.names.size() != ag.labels.size())
      add("types", "agent " + std::to_string(i) + " has " + std::to_string(ag.names.size()) + " type names for " +
                       std::to_string(ag.labels.size()) + " types");
  }

  if (!(s.discount > 0.0 && s.discount < 1.0))
    add("discount", "discount " + detail::fmt_double(s.discount) + " is outside (0, 1)");

  if (s.const_payment && !(*s.const_payment > 0.0 && std::isfinite(*s.const_payment)))
    add("const_p", "CONST payment " + detail::fmt_double(*s.const_payment) + " must be a positive real");

  for (Allocation a : s.feasible)
    if (a.mask() >= s.allocation_count()) {
      shapes_ok = false;
      add("feasible", "feasible allocation " + std::to_string(a.mask()) + " names an agent that does not exist");
    }
  if (!s.feasible.empty()) {
    auto sorted = s.feasible;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      add("feasible", "feasible allocation list has duplicates");
    if (!std::binary_search(sorted.begin(), sorted.end(), Allocation{}))
      add("feasible", "feasible allocation list must contain the empty allocation");
  }

  // World model.
  {
    const auto& w = s.world;
    if (w.weights.empty() || w.perturbation.size() != w.weights.size()) {
      add("world", "world model has " + std::to_string(w.weights.size()) + " weights and " +
                       std::to_string(w.perturbation.size()) + " perturbation rows");
    } else {
      double sum = 0.0;
      for (std::size_t k = 0; k < w.weights.size(); ++k) {
        const double p = w.weights[k];
        if (!(p >= 0.0 && p <= 1.0)) add("world", "omega " + std::to_string(k) + " weight " + detail::fmt_double(p) + " is outside [0, 1]");
        sum += p;
        const auto& row = w.perturbation[k];
        if (!row.empty() && row.size() != n)
          add("world", "omega " + std::to_string(k) + " perturbation has " + std::to_string(row.size()) +
                           " entries for " + std::to_string(n) + " agents");
        if (!detail::finite_all(row)) add("world", "omega " + std::to_string(k) + " has a non-finite perturbation");
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance)
        add("world", "world weights sum to " + detail::fmt_double(sum) + ", not 1");
    }
  }

  // Transition kernels.
  if (s.transitions.size() != n) {
    add("transitions", "expected " + std::to_string(n) + " transition kernels, found " + std::to_string(s.transitions.size()));
    shapes_ok = false;
  } else if (shapes_ok) {
    const auto masks = s.allocations();
    for (AgentId i = 0; i < n; ++i) {
      const auto& k = s.transitions[i];
      const std::size_t types = s.agents[i].type_count();
      if (k.rows.size() != s.allocation_count()) {
        add("transitions", "agent " + std::to_string(i) + " kernel covers " + std::to_string(k.rows.size()) +
                               " allocations, expected " + std::to_string(s.allocation_count()));
        shapes_ok = false;
        continue;
      }
      for (Allocation a : masks) {
        if (a.mask() >= k.rows.size()) continue;
        if (k.rows[a.mask()].size() != types) {
          add("transitions", "agent " + std::to_string(i) + ", allocation " + std::to_string(a.mask()) + " has " +
                                 std::to_string(k.rows[a.mask()].size()) + " rows, expected " + std::to_string(types));
          shapes_ok = false;
          continue;
        }
        for (TypeIndex t = 0; t < types; ++t) {
          const auto& row = k.rows[a.mask()][t];
          if (row.size() != types) {
            add("transitions", "row has " + std::to_string(row.size()) + " entries, expected " +
                                   std::to_string(types) + " (" + detail::locus(i, a, t) + ")");
            shapes_ok = false;
            continue;
          }
          double sum = 0.0;
          bool in_range = true;
          for (double p : row) {
            if (!(p >= 0.0 && p <= 1.0)) in_range = false;
            sum += p;
          }
          if (!in_range) add("kernel_entry", "row has an entry outside [0, 1] (" + detail::locus(i, a, t) + ")");
          if (!(std::abs(sum - 1.0) <= kProbabilityTolerance))
            add("kernel_row_sum", "row sums to " + detail::fmt_double(sum) + ", not 1 (" + detail::locus(i, a, t) + ")");
        }
      }
    }
  }

  // Value model.
  if (const auto* p = std::get_if<ParametricValues>(&s.values)) {
    if (!(p->k1 > 0.0 && p->k2 > 0.0 && p->k3 > 0.0))
      add("values", "parametric constants k1, k2, k3 must all be positive");
    if (s.agents[0].role != Role::buyer) add("roles", "parametric values require agent 0 to be the buyer");
    for (AgentId j = 1; j < n; ++j)
      if (s.agents[j].role != Role::seller)
        add("roles", "parametric values require agent " + std::to_string(j) + " to be a seller");
    for (double l : s.agents[0].labels)
      if (l == 0.0) add("values", "parametric buyer labels must be nonzero");
  } else {
    const auto& t = std::get<TableValues>(s.values);
    if (t.tables.size() != n) {
      add("values", "expected " + std::to_string(n) + " value tables, found " + std::to_string(t.tables.size()));
      shapes_ok = false;
    } else if (shapes_ok) {
      const std::size_t profiles = s.profile_space().size();
      for (AgentId i = 0; i < n; ++i) {
        if (t.tables[i].size() != s.allocation_count()) {
          add("values", "agent " + std::to_string(i) + " value table covers " + std::to_string(t.tables[i].size()) +
                            " allocations, expected " + std::to_string(s.allocation_count()));
          shapes_ok = false;
          continue;
        }
        for (std::size_t m = 0; m < t.tables[i].size(); ++m) {
          const auto& row = t.tables[i][m];
          if (!row.empty() && row.size() != profiles) {
            add("values", "agent " + std::to_string(i) + ", allocation " + std::to_string(m) + " lists " +
                              std::to_string(row.size()) + " values, expected " + std::to_string(profiles));
            shapes_ok = false;
          }
          if (!detail::finite_all(row))
            add("values", "agent " + std::to_string(i) + ", allocation " + std::to_string(m) + " has a non-finite value");
        }
      }
    }
  }

  if (!shapes_ok) return out;

  // Zero-off-allocation and locality, checked exhaustively on the expected values.
  const auto space = s.profile_space();
  for (AgentId i = 0; i < n; ++i) {
    for (Allocation a : s.allocations()) {
      std::size_t zero_hits = 0;
      std::size_t local_hits = 0;
      std::string first_zero;
      std::string first_local;
      for (std::size_t k = 0; k < space.size(); ++k) {
        const auto theta = space.decode(k);
        const double v = expected_value(s, i, a, theta);
        if (!std::isfinite(v)) {
          add("values", "non-finite expected value (agent " + std::to_string(i) + ", allocation " +
                            std::to_string(a.mask()) + ", profile " + std::to_string(k) + ")");
          continue;
        }
        if (!a.contains(i) && v != 0.0) {
          if (zero_hits++ == 0) first_zero = std::to_string(k);
        }
        // Canonical representative: components outside a reset to type 0.
        auto canon = theta;
        for (AgentId j = 0; j < n; ++j)
          if (!a.contains(j)) canon[j] = 0;
        if (std::abs(expected_value(s, i, a, canon) - v) > kProbabilityTolerance) {
          if (local_hits++ == 0) first_local = std::to_string(k);
        }
      }
      if (zero_hits > 0)
        add("zero_value", "agent " + std::to_string(i) + " has nonzero value while unallocated (allocation " +
                              std::to_string(a.mask()) + ", " + std::to_string(zero_hits) + " profiles, first " +
                              first_zero + ")");
      if (local_hits > 0)
        add("locality", "agent " + std::to_string(i) + " value depends on unallocated agents' types (allocation " +
                            std::to_string(a.mask()) + ", " + std::to_string(local_hits) + " profiles, first " +
                            first_local + ")");
    }
  }
  return out;
}

}  // namespace mechsim
