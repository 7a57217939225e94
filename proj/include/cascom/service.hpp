#pragma once

// HTTP/JSON session API over a file-backed knowledge base. Every endpoint is
// a thin mapping onto the engine operations; sessions pin the KB snapshot
// that was current when they were created.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cascom/composer.hpp"
#include "cascom/context.hpp"
#include "cascom/cost.hpp"
#include "cascom/deploy.hpp"
#include "cascom/kb.hpp"
#include "cascom/kb_json.hpp"
#include "cascom/qa.hpp"
#include "cascom/results_json.hpp"

namespace cascom {

struct ServiceOptions {
  std::filesystem::path kb_path;  // mutations are persisted here when set
  std::chrono::seconds session_ttl{3600};
  ComposeLimits limits;
  std::string api_token;   // empty: no token required
  std::string static_dir;  // built web UI bundle, optional
};

struct ApiResponse {
  int status = 200;
  Json body;
};

// Holds the current KB snapshot. Readers copy the pointer; writers are
// serialized and publish a new snapshot.
class KbStore {
 public:
  explicit KbStore(KnowledgeBase kb, std::filesystem::path path = {})
      : current_(std::make_shared<const KnowledgeBase>(std::move(kb))), path_(std::move(path)) {}

  KbSnapshot snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
  }

  template <class Mutation>
  KbSnapshot mutate(Mutation&& mutation) {
    std::lock_guard writer(write_mutex_);
    auto next = std::make_shared<const KnowledgeBase>(mutation(*snapshot()));
    if (!path_.empty()) save_kb(*next, path_);
    std::lock_guard lock(read_mutex_);
    current_ = next;
    return next;
  }

 private:
  mutable std::mutex read_mutex_;
  std::mutex write_mutex_;
  KbSnapshot current_;
  std::filesystem::path path_;
};

class Service {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  using IdGenerator = std::function<std::string()>;

  Service(KnowledgeBase kb, ServiceOptions options, IdGenerator ids = {}, Clock clock = {})
      : options_(std::move(options)),
        store_(std::move(kb), options_.kb_path),
        ids_(ids ? std::move(ids) : random_ids()),
        clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }) {}

  KbStore& store() { return store_; }

  std::size_t session_count() {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
  }

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      purge_expired();
      return route(method, split(path), body);
    } catch (const ValidationError& e) {
      return error(422, to_string(e.code()), e.what(), violations_json(e.report()));
    } catch (const Error& e) {
      return error(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const Json::exception& e) {
      return error(400, "bad_request", e.what());
    }
  }

  // Routes every request through handle(); serves the UI bundle if given.
  void mount(httplib::Server& server) {
    if (!options_.static_dir.empty()) server.set_mount_point("/", options_.static_dir);
    if (!options_.api_token.empty()) {
      server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("Authorization") == "Bearer " + options_.api_token)
          return httplib::Server::HandlerResponse::Unhandled;
        res.status = 401;
        res.set_content(error(401, "unauthorized", "missing or wrong API token").body.dump(), "application/json");
        return httplib::Server::HandlerResponse::Handled;
      });
    }
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      auto out = handle(req.method, req.path, req.body);
      res.status = out.status;
      res.set_content(out.body.dump(2) + "\n", "application/json");
    };
    const std::string api = R"(/(sessions|kb)(/.*)?)";
    server.Get(api, handler);
    server.Post(api, handler);
    server.Delete(api, handler);
  }

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    QaSession qa;
    std::optional<ComposeResult> composed;
    std::optional<std::string> chosen_solution;
    WeightVector weights;
    KindList extras;
    std::chrono::steady_clock::time_point expires_at;

    explicit Session(KbSnapshot kb) : qa(std::move(kb)) {}
  };

  static IdGenerator random_ids() {
    auto engine = std::make_shared<std::mt19937_64>(std::random_device{}());
    auto mutex = std::make_shared<std::mutex>();
    return [engine, mutex] {
      std::lock_guard lock(*mutex);
      return Fnv1a::to_hex((*engine)()) + Fnv1a::to_hex((*engine)());
    };
  }

  static int status_for(ErrorCode code) {
    switch (code) {
      case ErrorCode::unknown_session:
      case ErrorCode::unknown_task:
      case ErrorCode::unknown_question:
      case ErrorCode::unknown_solution:
      case ErrorCode::unknown_kind: return 404;
      case ErrorCode::duplicate_id: return 409;
      case ErrorCode::kb_validation_failed: return 422;
      case ErrorCode::io_error: return 500;
      default: return 400;
    }
  }

  static ApiResponse error(int status, std::string_view code, const std::string& message,
                           Json violations = nullptr) {
    Json body{{"error", {{"code", std::string(code)}, {"message", message}}}};
    if (!violations.is_null()) body["error"]["violations"] = std::move(violations);
    return {status, std::move(body)};
  }

  static std::vector<std::string> split(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos < path.size()) {
      auto next = path.find('/', pos);
      if (next == std::string::npos) next = path.size();
      if (next > pos) parts.push_back(path.substr(pos, next - pos));
      pos = next + 1;
    }
    return parts;
  }

  static Json parse_body(const std::string& body) {
    if (body.empty()) return Json::object();
    auto j = parse_json_text(body);
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
    return j;
  }

  ApiResponse route(const std::string& method, const std::vector<std::string>& p, const std::string& body) {
    auto is = [&](std::string_view m, std::size_t n) { return method == m && p.size() == n; };
    if (!p.empty() && p[0] == "kb") {
      if (is("GET", 1)) return get_kb();
      if (is("POST", 2) && p[1] == "entities") return post_entity(parse_body(body));
      if (is("GET", 2) && p[1] == "validate") return get_validate();
    }
    if (!p.empty() && p[0] == "sessions") {
      if (is("POST", 1)) return create_session();
      if (p.size() >= 2) {
        auto session = find_session(p[1]);
        std::lock_guard lock(session->mutex);
        if (is("DELETE", 2)) return delete_session(p[1]);
        if (is("GET", 3) && p[2] == "questions") return get_questions(*session);
        if (is("GET", 5) && p[2] == "questions" && p[4] == "answers") return get_answers(*session, p[3]);
        if (is("POST", 3) && p[2] == "answers") return post_answer(*session, parse_body(body));
        if (is("DELETE", 4) && p[2] == "answers") return delete_answer(*session, p[3]);
        if (is("GET", 3) && p[2] == "tasks") return get_tasks(*session);
        if (is("POST", 3) && p[2] == "task") return post_task(*session, parse_body(body));
        if (is("GET", 3) && p[2] == "context") return get_context(*session);
        if (is("POST", 3) && p[2] == "weights") return post_weights(*session, parse_body(body));
        if (is("POST", 3) && p[2] == "plan") return post_plan(*session, parse_body(body));
      }
    }
    return error(404, "not_found", "no route for " + method + " /" + join(p));
  }

  static std::string join(const std::vector<std::string>& p) {
    std::string out;
    for (const auto& s : p) out += (out.empty() ? "" : "/") + s;
    return out;
  }

  void purge_expired() {
    std::lock_guard lock(sessions_mutex_);
    auto now = clock_();
    std::erase_if(sessions_, [&](const auto& entry) { return entry.second->expires_at <= now; });
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::unknown_session, "unknown session '" + id + "'");
    it->second->expires_at = clock_() + options_.session_ttl;
    return it->second;
  }

  // --- KB endpoints ------------------------------------------------------

  ApiResponse get_kb() {
    auto kb = store_.snapshot();
    return {200, Json{{"kb_version", kb_version_hash(*kb)}, {"kb", kb_to_json(*kb)}}};
  }

  ApiResponse get_validate() {
    auto kb = store_.snapshot();
    auto report = validate_kb(*kb);
    return {200, Json{{"valid", report.empty()}, {"violations", violations_json(report)},
                      {"warnings", violations_json(attribute_warnings(*kb))}}};
  }

  ApiResponse post_entity(const Json& body) {
    const std::string type = body.at("type").get<std::string>();
    auto next = store_.mutate([&](const KnowledgeBase& kb) {
      return add_description(kb, entity_from_json(kb, type, body.at("entity")));
    });
    return {201, Json{{"kb_version", kb_version_hash(*next)},
                      {"counts",
                       {{"sensors", next->sensors().size()},
                        {"dpcs", next->dpcs().size()},
                        {"tasks", next->tasks().size()},
                        {"questions", next->questions().size()}}}}};
  }

  // --- session endpoints -------------------------------------------------

  ApiResponse create_session() {
    auto session = std::make_shared<Session>(store_.snapshot());
    session->expires_at = clock_() + options_.session_ttl;
    std::lock_guard lock(sessions_mutex_);
    do {
      session->id = ids_();
    } while (sessions_.contains(session->id));
    sessions_.emplace(session->id, session);
    return {201, Json{{"session_id", session->id},
                      {"kb_version", kb_version_hash(session->qa.kb())},
                      {"task_count", session->qa.kb().tasks().size()}}};
  }

  ApiResponse delete_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    sessions_.erase(id);
    return {200, Json{{"deleted", id}}};
  }

  ApiResponse get_questions(Session& s) {
    Json out = Json::array();
    for (const auto& q : question_options(s.qa.kb(), s.qa.constraints())) out.push_back(question_option_json(q));
    return {200, Json{{"questions", out}}};
  }

  ApiResponse get_answers(Session& s, const std::string& qid) {
    return {200, Json{{"question_id", qid}, {"answers", s.qa.answers(qid)}}};
  }

  Json task_summary(const Session& s) const {
    Json constraints = Json::array();
    for (const auto& a : s.qa.constraints()) constraints.push_back({{"question_id", a.question_id}, {"answer", a.value}});
    Json ids = Json::array();
    for (const auto& t : s.qa.tasks()) ids.push_back(t.id);
    return Json{{"constraints", constraints}, {"matching_task_count", ids.size()}, {"matching_tasks", ids}};
  }

  void reset_downstream(Session& s) {
    s.composed.reset();
    s.chosen_solution.reset();
    s.weights.clear();
    s.extras.clear();
  }

  ApiResponse post_answer(Session& s, const Json& body) {
    auto qid = body.at("question_id").get<std::string>();
    auto answer = body.at("answer").get<std::string>();
    s.qa = s.qa.apply_answer(qid, answer);
    if (!s.qa.selected_task()) reset_downstream(s);
    return {200, task_summary(s)};
  }

  ApiResponse delete_answer(Session& s, const std::string& qid) {
    s.qa = s.qa.remove_answer(qid);
    return {200, task_summary(s)};
  }

  ApiResponse get_tasks(Session& s) {
    auto shared = shared_kinds(s.qa.kb());
    Json out = Json::array();
    for (const auto& t : s.qa.tasks()) out.push_back(task_json(t, shared));
    return {200, Json{{"tasks", out}}};
  }

  ApiResponse post_task(Session& s, const Json& body) {
    auto task_id = body.at("task_id").get<std::string>();
    s.qa = s.qa.select_task(task_id);
    reset_downstream(s);
    s.composed = compose(s.qa.kb(), task_id, options_.limits);
    Json out = compose_json(*s.composed);
    out["task_id"] = task_id;
    return {200, out};
  }

  const ComposeResult& require_composed(const Session& s) const {
    if (!s.composed) throw Error(ErrorCode::unknown_task, "no task selected in this session");
    return *s.composed;
  }

  ApiResponse get_context(Session& s) {
    const auto& kb = s.qa.kb();
    auto table = discover(kb);
    KindList produced;
    if (s.qa.selected_task()) produced = kb.find_task(*s.qa.selected_task())->required_stream;
    sort_unique(produced);
    Json all = context_json(kb, *table);
    Json available = Json::array();
    for (const auto& item : all["available"]) {
      auto kind = detail::parse_inline_kind({item["kind"], "kind"});
      if (!contains(produced, kind)) available.push_back(item);
    }
    return {200, Json{{"available", available}}};
  }

  ApiResponse post_weights(Session& s, const Json& body) {
    const auto& composed = require_composed(s);
    if (!body.is_object()) throw Error(ErrorCode::invalid_weights, "weights must be a name->number map");
    WeightVector weights;
    for (const auto& [name, value] : body.items()) {
      if (!value.is_number()) throw Error(ErrorCode::invalid_weights, "weight for '" + name + "' is not a number");
      weights[name] = value.get<double>();
    }
    if (composed.solutions.empty()) throw Error(ErrorCode::invalid_argument, "no solutions to rank");
    auto scores = rank(s.qa.kb(), composed.solutions, weights);
    s.weights = weights;
    s.chosen_solution = scores.front().solution_hash;
    return {200, Json{{"weights", normalize_weights(s.qa.kb(), weights)}, {"scores", scores_json(scores)}}};
  }

  ApiResponse post_plan(Session& s, const Json& body) {
    const auto& composed = require_composed(s);
    std::string hash;
    if (body.contains("solution_hash")) hash = body.at("solution_hash").get<std::string>();
    else if (s.chosen_solution) hash = *s.chosen_solution;
    const Solution* chosen = nullptr;
    for (const auto& sol : composed.solutions)
      if (canonical_hash(sol) == hash) chosen = &sol;
    if (!chosen) throw Error(ErrorCode::unknown_solution, "no solution with hash '" + hash + "'");

    KindList extras;
    auto shared = shared_kinds(s.qa.kb());
    if (body.contains("extras"))
      for (const auto& e : body.at("extras")) {
        if (e.is_string()) {
          auto it = shared.find(e.get<std::string>());
          if (it == shared.end())
            throw Error(ErrorCode::underivable_extra, "unknown kind '" + e.get<std::string>() + "'");
          extras.push_back(it->second);
        } else {
          extras.push_back(detail::parse_inline_kind({e, "extras"}));
        }
      }
    auto plan = generate_plan(s.qa.kb(), *chosen, extras);
    s.chosen_solution = hash;
    s.extras = plan.extras;
    return {200, plan_to_json(plan)};
  }

  ServiceOptions options_;
  KbStore store_;
  IdGenerator ids_;
  Clock clock_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace cascom
