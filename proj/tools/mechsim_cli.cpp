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

// mechsim: validate, solve, audit and simulate mechanism scenarios.
//
// Exit codes: 0 success, 1 validation violations, 2 usage or parse error,
// 3 solver failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mechsim/mechsim.hpp"

namespace fs = std::filesystem;
using namespace mechsim;

namespace {

constexpr int kOk = 0;
constexpr int kViolations = 1;
constexpr int kUsage = 2;
constexpr int kSolverFailure = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string scenario;
  std::string out = "mechsim-out";
  double tol = 1e-9;
  std::size_t max_iterations = 1'000'000;
  double audit_tol = 1e-6;
  std::uint64_t seed = 0;
  std::size_t horizon = 50;
  std::size_t episodes = 0;
  std::string mechanism = "all";
  std::optional<double> const_p;
  std::vector<std::string> deviations;
  std::string profile;
};

TypeIndex parse_type(const AgentSpec& agent, const std::string& text) {
  for (TypeIndex t = 0; t < agent.names.size(); ++t)
    if (agent.names[t] == text) return t;
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || v >= agent.type_count())
    throw UsageError("unknown type '" + text + "'");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

// "agent=1,round=0,type=H"; round omitted means every round.
Misreport parse_deviation(const Scenario& s, const std::string& text) {
  std::map<std::string, std::string> kv;
  for (const auto& part : split(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw UsageError("--deviate expects key=value pairs, got '" + part + "'");
    kv[part.substr(0, eq)] = part.substr(eq + 1);
  }
  if (!kv.count("agent") || !kv.count("type")) throw UsageError("--deviate needs agent= and type=");
  Misreport m;
  try {
    m.agent = std::stoul(kv["agent"]);
    if (kv.count("round")) m.round = std::stoul(kv["round"]);
  } catch (const std::exception&) {
    throw UsageError("--deviate: agent and round must be non-negative integers");
  }
  if (m.agent >= s.agent_count()) throw UsageError("--deviate: agent " + kv["agent"] + " does not exist");
  m.type = parse_type(s.agents[m.agent], kv["type"]);
  return m;
}

TypeProfile parse_profile(const Scenario& s, const std::string& text) {
  if (text.empty()) return TypeProfile(s.agent_count(), 0);
  const auto parts = split(text, ',');
  if (parts.size() != s.agent_count())
    throw UsageError("--profile lists " + std::to_string(parts.size()) + " types for " +
                     std::to_string(s.agent_count()) + " agents");
  TypeProfile p;
  for (AgentId i = 0; i < parts.size(); ++i) p.push_back(parse_type(s.agents[i], parts[i]));
  return p;
}

std::vector<MechanismRule> select_rules(const Scenario& s, const Flags& f) {
  std::vector<MechanismRule> rules;
  if (f.mechanism == "gdpm" || f.mechanism == "all") rules.push_back(gdpm_rule());
  if (f.mechanism == "const" || f.mechanism == "all") {
    const auto price = f.const_p ? f.const_p : s.const_payment;
    if (!price) throw UsageError("CONST needs a price: set mechanisms.const_p in the scenario or pass --const-p");
    if (!(*price > 0.0)) throw UsageError("--const-p must be positive");
    rules.push_back(const_rule(*price));
  }
  return rules;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw UsageError("cannot write " + (dir / name).string());
  return os;
}

// Loads and validates; prints violations. Returns false when invalid.
bool load_valid(const Flags& f, Scenario& s) {
  s = load_scenario(f.scenario);
  const auto violations = validate_scenario(s);
  for (const auto& v : violations) std::cout << "VIOLATION: " << v.code << ": " << v.message << '\n';
  return violations.empty();
}

WelfareSolution solve(const Scenario& s, const Flags& f) {
  SolverOptions opts;
  opts.tol = f.tol;
  opts.max_iterations = f.max_iterations;
  return solve_all(s, opts);
}

int cmd_validate(const Flags& f) {
  Scenario s;
  if (!load_valid(f, s)) return kViolations;
  std::cout << "ok: " << s.agent_count() << " agents, " << s.profile_space().size() << " profiles, "
            << s.allocations().size() << " allocations\n";
  return kOk;
}

void print_stats(const WelfareSolution& sol) {
  auto line = [](const ValueTable& t) {
    std::cout << t.name() << ": iterations=" << t.stats.iterations << " residual=" << csv::num(t.stats.residual)
              << " bellman_residual=" << csv::num(t.stats.bellman_residual) << '\n';
  };
  line(sol.full);
  for (const auto& t : sol.without) line(t);
}

int cmd_solve(const Flags& f, bool out_given) {
  Scenario s;
  if (!load_valid(f, s)) return kViolations;
  const auto sol = solve(s, f);
  if (out_given) {
    auto os = open_out(f.out, "solution.csv");
    write_solution_csv(os, s, sol);
    print_stats(sol);
  } else {
    write_solution_csv(std::cout, s, sol);
  }
  return kOk;
}

void write_audit_files(const fs::path& dir, const Scenario& s, const AuditResult& res) {
  for (const auto& r : res.reports) {
    const auto tag = lower(r.mechanism);
    auto v = open_out(dir, "verdicts_" + tag + ".csv");
    write_verdicts_csv(v, r);
    auto u = open_out(dir, "utilities_" + tag + ".csv");
    write_utilities_csv(u, s, r);
    auto p = open_out(dir, "payments_" + tag + ".csv");
    write_payments_csv(p, s.agent_count(), r);
  }
}

int cmd_audit(const Flags& f, bool full_report) {
  Scenario s;
  if (!load_valid(f, s)) return kViolations;
  const auto rules = select_rules(s, f);
  const auto sol = solve(s, f);
  AuditOptions opts;
  opts.tol_audit = f.audit_tol;
  opts.solver_tol = f.tol;
  const auto res = audit(s, sol, rules, opts);
  const auto matrix = summary_matrix(res);
  std::cout << matrix;
  for (const auto& r : res.reports)
    std::cout << r.mechanism << ": " << r.type_comparisons << " type-report comparisons, " << r.value_comparisons
              << " value-report comparisons (" << r.value_report_changes << " moved the deviator's payment)\n";
  write_audit_files(f.out, s, res);
  if (full_report) {
    auto sol_os = open_out(f.out, "solution.csv");
    write_solution_csv(sol_os, s, sol);
    auto sum_os = open_out(f.out, "summary.txt");
    sum_os << matrix;
    for (const auto& r : res.reports)
      for (Property p : kProperties) {
        const auto& v = r.verdict(p);
        sum_os << r.mechanism << ' ' << to_string(p) << ": " << (v.pass ? "pass" : "fail") << ", "
               << v.counterexamples.size() << " counterexamples of " << v.comparisons
               << ", worst margin " << csv::num(v.worst_margin) << '\n';
      }
  }
  return kOk;
}

int cmd_simulate(const Flags& f) {
  Scenario s;
  if (!load_valid(f, s)) return kViolations;
  if (f.horizon < 1) throw UsageError("--horizon must be at least 1");
  EpisodeConfig cfg;
  cfg.horizon = f.horizon;
  cfg.seed = f.seed;
  cfg.initial = parse_profile(s, f.profile);
  for (const auto& d : f.deviations) cfg.misreports.push_back(parse_deviation(s, d));
  if (f.episodes > 0 && (cfg.misreports.size() > 1 || (cfg.misreports.size() == 1 && cfg.misreports[0].round != 0)))
    throw UsageError("--episodes estimates a round-0 one-shot deviation: pass at most one --deviate with round=0");
  if (f.episodes == 1) throw UsageError("--episodes needs at least 2 episodes");

  const auto rules = select_rules(s, f);
  const auto sol = solve(s, f);
  for (const auto& rule : rules) {
    const auto trace = run_episode(s, sol, rule, cfg);
    auto os = open_out(f.out, "trace_" + lower(rule.name) + ".csv");
    write_trace_csv(os, s, trace);
    for (AgentId i = 0; i < s.agent_count(); ++i)
      std::cout << rule.name << " agent " << i << ": discounted_utility=" << csv::num(trace.discounted_utility[i])
                << " truncation_bound=" << csv::num(trace.truncation_bound[i]) << '\n';
    if (f.episodes > 0) {
      const AgentId agent = cfg.misreports.empty() ? 0 : cfg.misreports[0].agent;
      const TypeIndex report = cfg.misreports.empty() ? cfg.initial[0] : cfg.misreports[0].type;
      const auto est = monte_carlo_utility(s, sol, rule, agent, cfg.initial, report, f.episodes, f.horizon, f.seed);
      const UtilityModel um(s, sol, rule, f.tol);
      std::cout << rule.name << " monte_carlo agent " << agent << ": mean=" << csv::num(est.mean)
                << " standard_error=" << csv::num(est.standard_error)
                << " truncation_bound=" << csv::num(est.truncation_bound)
                << " closed_form=" << csv::num(um.deviation(agent, cfg.initial, report)) << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mechsim: dynamic pivot mechanism solver, auditor and simulator"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("scenario", f.scenario, "Scenario file (JSON)")->required();
    sub->add_option("--tol", f.tol, "Welfare solver tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iterations", f.max_iterations, "Value iteration cap per MDP")->check(CLI::PositiveNumber);
  };
  auto add_mechanism = [&f](CLI::App* sub) {
    sub->add_option("--mechanism", f.mechanism, "Mechanisms to run")
        ->check(CLI::IsMember({"gdpm", "const", "all"}));
    sub->add_option("--const-p", f.const_p, "CONST payment per selected seller");
  };

  auto* validate = app.add_subcommand("validate", "Check a scenario against the model assumptions");
  validate->add_option("scenario", f.scenario, "Scenario file (JSON)")->required();

  auto* solve_cmd = app.add_subcommand("solve", "Solve W and every W_-i; dump the value tables");
  add_common(solve_cmd);
  auto* solve_out = solve_cmd->add_option("--out", f.out, "Output directory (default: CSV on stdout)");

  auto* audit_cmd = app.add_subcommand("audit", "Audit EFF, EPIC, EPIR, PC and BB");
  auto* report_cmd = app.add_subcommand("report", "Audit and write every CSV plus a summary");
  for (auto* sub : {audit_cmd, report_cmd}) {
    add_common(sub);
    add_mechanism(sub);
    sub->add_option("--audit-tol", f.audit_tol, "Audit tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--out", f.out, "Output directory");
  }

  auto* simulate = app.add_subcommand("simulate", "Run a seeded episode and write its trace");
  add_common(simulate);
  add_mechanism(simulate);
  simulate->add_option("--seed", f.seed, "RNG seed");
  simulate->add_option("--horizon", f.horizon, "Rounds per episode");
  simulate->add_option("--episodes", f.episodes, "Also estimate the deviator's utility over this many episodes");
  simulate->add_option("--deviate", f.deviations, "agent=I,round=T,type=X (round omitted: every round)");
  simulate->add_option("--profile", f.profile, "Initial profile, e.g. H,M,L (default: type 0 for everyone)");
  simulate->add_option("--out", f.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(f);
    if (solve_cmd->parsed()) return cmd_solve(f, solve_out->count() > 0);
    if (audit_cmd->parsed()) return cmd_audit(f, false);
    if (report_cmd->parsed()) return cmd_audit(f, true);
    if (simulate->parsed()) return cmd_simulate(f);
  } catch (const ScenarioParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return kUsage;
  } catch (const SolverError& e) {
    std::cerr << "solver failure in " << e.mdp() << ": " << e.what() << '\n';
    return kSolverFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
