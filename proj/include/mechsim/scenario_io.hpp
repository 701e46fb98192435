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

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mechsim/core_model.hpp"

namespace mechsim {

/// Malformed scenario document. line/column are 1-based and zero when the
/// problem is structural rather than syntactic.
class ScenarioParseError : public std::runtime_error {
 public:
  ScenarioParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

namespace detail {

using json = nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ScenarioParseError(where + ": missing key '" + std::string(key) + "'");
  return obj.at(key);
}

inline std::vector<std::vector<double>> parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw ScenarioParseError(where + ": expected a list of probability rows");
  return j.get<std::vector<std::vector<double>>>();
}

inline std::uint32_t parse_mask(const std::string& key, const std::string& where) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(key, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != key.size() || key.empty())
    throw ScenarioParseError(where + ": '" + key + "' is not an allocation bitmask");
  return static_cast<std::uint32_t>(v);
}

inline AgentKernel parse_kernel(const json& j, std::size_t masks, AgentId i) {
  const std::string where = "transitions[" + std::to_string(i) + "]";
  if (!j.is_object()) throw ScenarioParseError(where + ": expected an object");
  AgentKernel k;
  k.rows.assign(masks, {});
  auto fill = [&](const json& m, auto pred) {
    const auto rows = parse_matrix(m, where);
    for (std::uint32_t a = 0; a < masks; ++a)
      if (pred(Allocation(a))) k.rows[a] = rows;
  };
  if (j.contains("default")) fill(j.at("default"), [](Allocation) { return true; });
  if (j.contains("allocated")) fill(j.at("allocated"), [i](Allocation a) { return a.contains(i); });
  if (j.contains("unallocated")) fill(j.at("unallocated"), [i](Allocation a) { return !a.contains(i); });
  for (const auto& [key, val] : j.items()) {
    if (key == "default" || key == "allocated" || key == "unallocated") continue;
    const auto mask = parse_mask(key, where);
    if (mask >= masks) throw ScenarioParseError(where + ": allocation " + key + " is out of range");
    k.rows[mask] = parse_matrix(val, where);
  }
  return k;
}

inline void throw_syntax(const nlohmann::json::parse_error& e, std::string_view text) {
  const std::size_t pos = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < pos; ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  throw ScenarioParseError("syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                               e.what(),
                           line, col);
}

}  // namespace detail

/// Parses the JSON scenario format:
///
///   agents       [{role: "buyer"|"seller", types: [labels], names?: [..]}]
///   discount     number in (0, 1)
///   values       {parametric: {k1, k2, k3}} or {tables: [per agent {"<mask>": [v per profile]}]}
///   transitions  per agent {default?, allocated?, unallocated?, "<mask>"?: [[row per type]]}
///   world?       {omegas: [{weight, perturbation?: [per agent]}]}
///   feasible_allocations?  [masks]
///   mechanisms?  {const_p}
///
/// Semantic checks (row sums, locality, ...) are left to validate_scenario.
inline Scenario parse_scenario(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    detail::throw_syntax(e, text);
  }
  if (!doc.is_object()) throw ScenarioParseError("scenario document must be a JSON object");

  try {
    Scenario s;
    for (const auto& a : detail::require(doc, "agents", "scenario")) {
      AgentSpec spec;
      const std::string role = detail::require(a, "role", "agent").get<std::string>();
      if (role == "buyer")
        spec.role = Role::buyer;
      else if (role == "seller")
        spec.role = Role::seller;
      else
        throw ScenarioParseError("agent role must be 'buyer' or 'seller', got '" + role + "'");
      spec.labels = detail::require(a, "types", "agent").get<std::vector<double>>();
      if (a.contains("names")) spec.names = a.at("names").get<std::vector<std::string>>();
      s.agents.push_back(std::move(spec));
    }
    if (s.agents.empty() || s.agents.size() > kMaxAgents)
      throw ScenarioParseError("scenario must list between 1 and " + std::to_string(kMaxAgents) + " agents");
    s.discount = detail::require(doc, "discount", "scenario").get<double>();
    const std::size_t masks = s.allocation_count();

    const auto& values = detail::require(doc, "values", "scenario");
    if (values.contains("parametric")) {
      const auto& p = values.at("parametric");
      s.values = ParametricValues{detail::require(p, "k1", "values.parametric").get<double>(),
                                  detail::require(p, "k2", "values.parametric").get<double>(),
                                  detail::require(p, "k3", "values.parametric").get<double>()};
    } else if (values.contains("tables")) {
      TableValues t;
      for (const auto& agent_table : values.at("tables")) {
        std::vector<std::vector<double>> rows(masks);
        for (const auto& [key, val] : agent_table.items()) {
          const auto mask = detail::parse_mask(key, "values.tables");
          if (mask >= masks) throw ScenarioParseError("values.tables: allocation " + key + " is out of range");
          rows[mask] = val.get<std::vector<double>>();
        }
        t.tables.push_back(std::move(rows));
      }
      s.values = std::move(t);
    } else {
      throw ScenarioParseError("values: expected 'parametric' or 'tables'");
    }

    const auto& trans = detail::require(doc, "transitions", "scenario");
    if (!trans.is_array()) throw ScenarioParseError("transitions: expected a list with one entry per agent");
    for (std::size_t i = 0; i < trans.size(); ++i) s.transitions.push_back(detail::parse_kernel(trans[i], masks, i));

    if (doc.contains("world")) {
      WorldModel w;
      w.weights.clear();
      w.perturbation.clear();
      for (const auto& o : detail::require(doc.at("world"), "omegas", "world")) {
        w.weights.push_back(detail::require(o, "weight", "world.omegas").get<double>());
        w.perturbation.push_back(o.contains("perturbation") ? o.at("perturbation").get<std::vector<double>>()
                                                            : std::vector<double>{});
      }
      s.world = std::move(w);
    }
    if (doc.contains("feasible_allocations"))
      for (const auto m : doc.at("feasible_allocations").get<std::vector<std::uint32_t>>()) s.feasible.emplace_back(m);
    if (doc.contains("mechanisms") && doc.at("mechanisms").contains("const_p"))
      s.const_payment = doc.at("mechanisms").at("const_p").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioParseError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

/// Serializes a scenario in the format parse_scenario reads. Kernels are
/// written per allocation mask.
inline nlohmann::json to_json(const Scenario& s) {
  using detail::json;
  json doc;
  doc["agents"] = json::array();
  for (const auto& a : s.agents) {
    json j{{"role", to_string(a.role)}, {"types", a.labels}};
    if (!a.names.empty()) j["names"] = a.names;
    doc["agents"].push_back(j);
  }
  doc["discount"] = s.discount;
  if (const auto* p = std::get_if<ParametricValues>(&s.values)) {
    doc["values"] = {{"parametric", {{"k1", p->k1}, {"k2", p->k2}, {"k3", p->k3}}}};
  } else {
    json tables = json::array();
    for (const auto& agent : std::get<TableValues>(s.values).tables) {
      json t = json::object();
      for (std::size_t m = 0; m < agent.size(); ++m)
        if (!agent[m].empty()) t[std::to_string(m)] = agent[m];
      tables.push_back(t);
    }
    doc["values"] = {{"tables", tables}};
  }
  doc["transitions"] = json::array();
  for (const auto& k : s.transitions) {
    json t = json::object();
    for (std::size_t m = 0; m < k.rows.size(); ++m)
      if (!k.rows[m].empty()) t[std::to_string(m)] = k.rows[m];
    doc["transitions"].push_back(t);
  }
  json omegas = json::array();
  for (std::size_t w = 0; w < s.world.size(); ++w) {
    json o{{"weight", s.world.weights[w]}};
    if (!s.world.perturbation[w].empty()) o["perturbation"] = s.world.perturbation[w];
    omegas.push_back(o);
  }
  doc["world"] = {{"omegas", omegas}};
  if (!s.feasible.empty()) {
    std::vector<std::uint32_t> masks;
    for (Allocation a : s.feasible) masks.push_back(a.mask());
    doc["feasible_allocations"] = masks;
  }
  if (s.const_payment) doc["mechanisms"] = {{"const_p", *s.const_payment}};
  return doc;
}

}  // namespace mechsim
