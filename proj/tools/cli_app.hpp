#pragma once

// `cascom` command-line interface. Kept in a header so the test suite can
// drive it in-process with string streams.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cascom/cascom.hpp"
#include "cascom/service.hpp"

namespace cascom::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

struct Streams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline std::string join_labels(const KindList& kinds) {
  std::string out;
  for (const auto& k : kinds) out += (out.empty() ? "" : ", ") + k.label;
  return out;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

// "label" (known to the KB) or "label:type:unit".
inline DataItemKind resolve_kind(const KnowledgeBase& kb, const std::string& spec) {
  auto parts = split_list(spec, ':');
  if (parts.size() == 3) {
    auto type = parse_value_type(parts[1]);
    if (!type) throw Error(ErrorCode::invalid_argument, "unknown value type in '" + spec + "'");
    return {parts[0], *type, parts[2]};
  }
  auto shared = shared_kinds(kb);
  auto it = shared.find(trim(spec));
  if (it == shared.end()) throw Error(ErrorCode::unknown_kind, "unknown kind '" + spec + "'");
  return it->second;
}

inline void print_report(std::ostream& out, const RecommendationReport& report) {
  if (!report.unsatisfiable_kinds.empty())
    out << "unsatisfiable kinds: " << join_labels(report.unsatisfiable_kinds) << "\n";
  if (report.missing_sets.empty()) return;
  out << "recommendation: make one of these sets sensable\n";
  for (const auto& m : report.missing_sets) {
    out << "  {" << join_labels(m.kinds) << "}";
    std::vector<std::string> notes;
    if (!m.inactive_sensors.empty()) {
      std::string s = "activate";
      for (const auto& id : m.inactive_sensors) s += " " + id;
      notes.push_back(s);
    }
    if (!m.unlocks.empty()) {
      std::string s = "unlocks";
      for (const auto& u : m.unlocks) s += " " + u.dpc + "#" + std::to_string(u.signature);
      notes.push_back(s);
    }
    for (std::size_t i = 0; i < notes.size(); ++i) out << (i == 0 ? "  (" : "; ") << notes[i];
    if (!notes.empty()) out << ")";
    out << "\n";
  }
  if (report.truncated) out << "(recommendation search truncated)\n";
}

class Prompter {
 public:
  explicit Prompter(Streams io) : io_(io) {}

  std::string ask(const std::string& question) {
    io_.err << question << ": " << std::flush;
    std::string line;
    if (!std::getline(io_.in, line)) throw Error(ErrorCode::invalid_argument, "input ended at '" + question + "'");
    return trim(line);
  }

  ContextValues ask_context(const std::string& question) {
    ContextValues out;
    for (const auto& item : split_list(ask(question))) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::invalid_argument, "expected name=value, got '" + item + "'");
      out[trim(item.substr(0, eq))] = std::stod(item.substr(eq + 1));
    }
    return out;
  }

 private:
  Streams io_;
};

inline Entity prompt_entity(const KnowledgeBase& kb, const std::string& type, Streams io) {
  Prompter p(io);
  auto kinds = [&](const std::string& question) {
    KindList out;
    for (const auto& spec : split_list(p.ask(question))) out.push_back(resolve_kind(kb, spec));
    return out;
  };
  if (type == "sensor") {
    SensorDescription s;
    s.id = p.ask("sensor id");
    s.name = p.ask("name");
    s.outputs = kinds("outputs (label or label:type:unit, comma separated)");
    auto active = p.ask("active [y/n]");
    s.active = active.empty() || active[0] == 'y' || active[0] == 'Y';
    s.context = p.ask_context("context (name=value, comma separated)");
    s.domains = split_list(p.ask("domains (comma separated)"));
    return s;
  }
  if (type == "dpc") {
    DpcDescription d;
    d.id = p.ask("dpc id");
    d.name = p.ask("name");
    int count = std::stoi(p.ask("number of signatures"));
    for (int i = 0; i < count; ++i) {
      Signature sig;
      sig.inputs = kinds("signature " + std::to_string(i) + " inputs");
      auto out = kinds("signature " + std::to_string(i) + " output");
      if (out.size() != 1) throw Error(ErrorCode::invalid_argument, "a signature has exactly one output");
      sig.output = out.front();
      d.signatures.push_back(std::move(sig));
    }
    d.context = p.ask_context("context (name=value, comma separated)");
    return d;
  }
  if (type == "task") {
    TaskDescription t;
    t.id = p.ask("task id");
    t.name = p.ask("name");
    t.required_stream = kinds("required stream (ordered, comma separated)");
    for (const auto& item : split_list(p.ask("concepts (concept=value, comma separated)"))) {
      auto eq = item.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::invalid_argument, "expected concept=value, got '" + item + "'");
      t.concept_bindings.push_back({trim(item.substr(0, eq)), trim(item.substr(eq + 1))});
    }
    return t;
  }
  Question q;
  q.id = p.ask("question id");
  q.text = p.ask("question text");
  q.concept_name = p.ask("concept");
  return q;
}

inline void print_json(std::ostream& out, const Json& j) { out << j.dump(2) << "\n"; }

}  // namespace detail

inline int run(const std::vector<std::string>& args, Streams io) {
  CLI::App app{"Knowledge-driven sensor and processing-component composition", "cascom"};
  app.require_subcommand(1);

  std::string kb_path;
  bool json = false;
  ComposeLimits limits;
  bool no_share = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("kb", kb_path, "knowledge base file")->required();
    sub->add_flag("--json", json, "machine-readable output");
  };
  auto add_limits = [&](CLI::App* sub) {
    sub->add_option("--max-solutions", limits.max_solutions, "cap on enumerated solutions")->check(CLI::PositiveNumber);
    sub->add_option("--max-depth", limits.max_depth, "cap on chained processing components")->check(CLI::PositiveNumber);
    sub->add_flag("--no-share", no_share, "give every consumer its own producer subtree");
  };

  auto* validate = app.add_subcommand("validate", "validate a knowledge base");
  add_common(validate);

  std::vector<std::string> answers;
  auto* tasks = app.add_subcommand("tasks", "filter tasks by answers");
  add_common(tasks);
  tasks->add_option("--answer", answers, "question=answer (repeatable)");

  std::string task_id;
  auto* compose_cmd = app.add_subcommand("compose", "enumerate solutions for a task");
  add_common(compose_cmd);
  compose_cmd->add_option("--task", task_id, "task id")->required();
  add_limits(compose_cmd);

  auto* context_cmd = app.add_subcommand("context", "list available context by tier");
  add_common(context_cmd);

  std::string weights_text;
  auto* rank_cmd = app.add_subcommand("rank", "rank a task's solutions by weighted cost");
  add_common(rank_cmd);
  rank_cmd->add_option("--task", task_id, "task id")->required();
  rank_cmd->add_option("--weights", weights_text, "name=weight,... (default: equal)");
  add_limits(rank_cmd);

  std::string solution_hash, out_path;
  std::vector<std::string> extras;
  auto* plan_cmd = app.add_subcommand("plan", "emit a deployment plan");
  plan_cmd->add_option("kb", kb_path, "knowledge base file")->required();
  plan_cmd->add_option("--task", task_id, "task id")->required();
  plan_cmd->add_option("--solution", solution_hash, "solution hash (from compose)")->required();
  plan_cmd->add_option("--extra", extras, "extra context kind label (repeatable)");
  plan_cmd->add_option("--out", out_path, "write the plan here instead of stdout");
  add_limits(plan_cmd);

  auto* describe_cmd = app.add_subcommand("describe", "add a description by answering prompts");
  describe_cmd->add_option("kb", kb_path, "knowledge base file")->required();
  describe_cmd->add_option("--out", out_path, "write the updated KB here (default: in place)");
  auto* kind_group = describe_cmd->add_option_group("entity", "entity type");
  bool d_sensor = false, d_dpc = false, d_task = false, d_question = false;
  kind_group->add_flag("--sensor", d_sensor);
  kind_group->add_flag("--dpc", d_dpc);
  kind_group->add_flag("--task", d_task);
  kind_group->add_flag("--question", d_question);
  kind_group->require_option(1);

  std::string listen = "127.0.0.1:8080";
  ServiceOptions service_options;
  int ttl_seconds = 3600;
  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  serve->add_option("kb", kb_path, "knowledge base file")->required();
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--ttl", ttl_seconds, "session expiry in seconds")->check(CLI::PositiveNumber);
  serve->add_option("--static", service_options.static_dir, "web UI bundle directory");
  serve->add_option("--token", service_options.api_token, "shared API token")->envname("CASCOM_API_TOKEN");
  add_limits(serve);

  std::vector<std::string> argv_copy(args.rbegin(), args.rend());
  try {
    app.parse(argv_copy);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      io.out << app.help();
      return kOk;
    }
    io.err << "error: " << e.what() << "\n" << "run 'cascom --help' for usage\n";
    return kUsageError;
  }
  limits.allow_shared_subtrees = !no_share;

  try {
    if (*validate) {
      auto kb = kb_from_json(parse_json_text(read_file(kb_path)));
      auto report = validate_kb(kb);
      auto warnings = attribute_warnings(kb);
      if (json) {
        detail::print_json(io.out, Json{{"valid", report.empty()},
                                        {"violations", violations_json(report)},
                                        {"warnings", violations_json(warnings)}});
      } else {
        if (report.empty()) {
          io.out << "ok: " << kb.sensors().size() << " sensors, " << kb.dpcs().size() << " dpcs, "
                 << kb.tasks().size() << " tasks, " << kb.questions().size() << " questions\n";
        } else {
          io.out << report.size() << " violation(s)\n";
          for (const auto& v : report) io.out << "  " << describe(v) << "\n";
        }
        for (const auto& w : warnings) io.out << "warning: " << describe(w) << "\n";
      }
      return report.empty() ? kOk : kDomainError;
    }

    auto kb = load_kb(kb_path);

    if (*tasks) {
      ConstraintSet constraints;
      for (const auto& a : answers) {
        auto eq = a.find('=');
        if (eq == std::string::npos) {
          io.err << "error: --answer expects question=answer, got '" << a << "'\n";
          return kUsageError;
        }
        constraints.push_back({a.substr(0, eq), a.substr(eq + 1)});
      }
      auto matching = matching_tasks(kb, constraints);
      auto questions = question_options(kb, constraints);
      if (json) {
        Json ts = Json::array();
        auto shared = shared_kinds(kb);
        for (const auto& t : matching) ts.push_back(task_json(t, shared));
        Json qs = Json::array();
        for (const auto& q : questions) qs.push_back(question_option_json(q));
        detail::print_json(io.out, Json{{"tasks", ts}, {"questions", qs}});
      } else {
        io.out << matching.size() << " matching task(s)\n";
        for (const auto& t : matching) io.out << "  " << t.id << "  " << t.name << "\n";
        if (!questions.empty()) {
          io.out << "next questions:\n";
          for (const auto& q : questions)
            io.out << "  " << q.question.id << "  " << q.question.text << " (" << q.distinct_answers << " answers)\n";
        }
      }
      return kOk;
    }

    if (*compose_cmd) {
      auto result = compose(kb, task_id, limits);
      if (json) {
        detail::print_json(io.out, compose_json(result));
      } else {
        io.out << "task " << task_id << ": " << result.solutions.size() << " solution(s)"
               << (result.truncated ? " (truncated)" : "") << "\n";
        for (std::size_t i = 0; i < result.solutions.size(); ++i)
          io.out << "[" << i + 1 << "] " << canonical_hash(result.solutions[i]) << "  "
                 << solution_expression(result.solutions[i]) << "\n";
        detail::print_report(io.out, result.report);
      }
      return kOk;
    }

    if (*context_cmd) {
      auto table = discover(kb);
      if (json) {
        detail::print_json(io.out, context_json(kb, *table));
      } else {
        for (int tier = 0; tier <= table->max_tier(); ++tier) {
          io.out << "tier " << tier << ":";
          for (const auto& [kind, t] : table->tiers)
            if (t == tier) {
              io.out << " " << kind.label;
              if (auto it = table->derivations.find(kind); it != table->derivations.end())
                io.out << "<-" << kb.dpcs()[it->second.dpc].id;
            }
          io.out << "\n";
        }
      }
      return kOk;
    }

    if (*rank_cmd) {
      auto weights = parse_weights(weights_text);
      auto result = compose(kb, task_id, limits);
      if (result.solutions.empty()) {
        io.err << "task " << task_id << " has no solutions\n";
        detail::print_report(io.err, result.report);
        return kDomainError;
      }
      auto scores = rank(kb, result.solutions, weights);
      if (json) {
        detail::print_json(io.out, Json{{"weights", normalize_weights(kb, weights)}, {"scores", scores_json(scores)}});
      } else {
        std::map<std::string, const Solution*> by_hash;
        for (const auto& s : result.solutions) by_hash[canonical_hash(s)] = &s;
        for (std::size_t i = 0; i < scores.size(); ++i) {
          std::ostringstream total;
          total.precision(4);
          total << std::fixed << scores[i].total;
          io.out << i + 1 << ". " << total.str() << "  " << scores[i].solution_hash << "  "
                 << solution_expression(*by_hash.at(scores[i].solution_hash)) << "\n";
        }
      }
      return kOk;
    }

    if (*plan_cmd) {
      auto result = compose(kb, task_id, limits);
      const Solution* chosen = nullptr;
      for (const auto& s : result.solutions)
        if (canonical_hash(s) == solution_hash) chosen = &s;
      if (!chosen) throw Error(ErrorCode::unknown_solution, "no solution with hash '" + solution_hash + "'");
      KindList extra_kinds;
      for (const auto& e : extras) extra_kinds.push_back(detail::resolve_kind(kb, e));
      auto text = emit_plan(generate_plan(kb, *chosen, extra_kinds));
      if (out_path.empty()) io.out << text;
      else write_file(out_path, text);
      return kOk;
    }

    if (*describe_cmd) {
      std::string type = d_sensor ? "sensor" : d_dpc ? "dpc" : d_task ? "task" : "question";
      auto next = add_description(kb, detail::prompt_entity(kb, type, io));
      save_kb(next, out_path.empty() ? kb_path : out_path);
      io.out << "added " << type << "; kb version " << kb_version_hash(next) << "\n";
      return kOk;
    }

    if (*serve) {
      auto colon = listen.rfind(':');
      if (colon == std::string::npos) {
        io.err << "error: --listen expects host:port\n";
        return kUsageError;
      }
      service_options.kb_path = kb_path;
      service_options.session_ttl = std::chrono::seconds(ttl_seconds);
      service_options.limits = limits;
      Service service(std::move(kb), service_options);
      httplib::Server server;
      service.mount(server);
      io.err << "listening on " << listen << "\n";
      if (!server.listen(listen.substr(0, colon), std::stoi(listen.substr(colon + 1)))) {
        io.err << "error: cannot listen on " << listen << "\n";
        return kDomainError;
      }
      return kOk;
    }
  } catch (const ValidationError& e) {
    if (json) detail::print_json(io.out, Json{{"valid", false}, {"violations", violations_json(e.report())}});
    io.err << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const Error& e) {
    io.err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}

}  // namespace cascom::cli
