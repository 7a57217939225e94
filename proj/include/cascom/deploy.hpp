#pragma once

// Middleware-agnostic deployment plans: the chosen solution (plus optional
// extra context kinds) flattened into topologically ordered, explicitly
// wired stages. Format documented in docs/plan-format.md.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascom/composer.hpp"
#include "cascom/context.hpp"
#include "cascom/error.hpp"
#include "cascom/hash.hpp"
#include "cascom/kb.hpp"
#include "cascom/kb_json.hpp"

namespace cascom {

inline constexpr std::string_view kPlanFormat = "cascom-plan/1";

struct PlanInput {
  DataItemKind kind;
  std::string stage;

  bool operator==(const PlanInput&) const = default;
};

struct PlanStage {
  std::string id;
  NodeRole role = NodeRole::sensor;
  std::string resource;
  std::string resource_name;
  std::size_t signature = 0;
  std::vector<PlanInput> inputs;  // sorted by kind
  DataItemKind output;
  int depth = 0;
  ContextValues context;

  bool operator==(const PlanStage&) const = default;
};

struct StreamItem {
  DataItemKind kind;
  std::string stage;

  bool operator==(const StreamItem&) const = default;
};

// Delivery metadata. Never derived from the KB; defaults only.
struct StreamSettings {
  int sampling_interval_ms = 5000;
  int window_size = 1;

  bool operator==(const StreamSettings&) const = default;
};

struct DeploymentPlan {
  std::string plan_id;
  std::string task_id;
  std::string task_name;
  std::string solution_hash;
  std::string kb_version;
  std::vector<PlanStage> stages;
  std::vector<StreamItem> output_stream;
  KindList extras;
  StreamSettings settings;

  bool operator==(const DeploymentPlan&) const = default;
};

namespace detail {

inline std::string stage_id(std::size_t index) {
  std::string n = std::to_string(index + 1);
  if (n.size() < 2) n = "0" + n;
  return "st" + n;
}

class PlanBuilder {
 public:
  PlanBuilder(const KnowledgeBase& kb, const Solution& solution)
      : kb_(kb), table_(discover(kb)), graph_(solution) {
    for (std::size_t i = 0; i < graph_.nodes.size(); ++i) producer_.emplace(graph_.nodes[i].output, i);
  }

  std::size_t ensure(const DataItemKind& kind) {
    if (auto it = producer_.find(kind); it != producer_.end()) return it->second;
    auto tier = table_->tier(kind);
    if (!tier)
      throw Error(ErrorCode::underivable_extra, "extra kind " + kind.str() + " is not derivable");

    std::size_t index = graph_.nodes.size();
    if (*tier == 0) {
      graph_.nodes.push_back(SolutionNode::sensor(pick_sensor(kind), kind));
    } else {
      auto ref = table_->derivations.at(kind);
      std::vector<std::size_t> inputs;
      for (const auto& in : kb_.signature(ref).inputs) inputs.push_back(ensure(in));
      index = graph_.nodes.size();
      graph_.nodes.push_back(SolutionNode::dpc(kb_.dpcs()[ref.dpc].id, ref.signature, kind));
      const auto& sig_inputs = kb_.signature(ref).inputs;
      for (std::size_t i = 0; i < inputs.size(); ++i)
        graph_.edges.push_back({inputs[i], index, sig_inputs[i]});
    }
    producer_.emplace(kind, index);
    return index;
  }

  Solution finish(const KindList& extras) {
    for (const auto& k : extras) graph_.sinks.emplace_back(k, producer_.at(k));
    return canonicalize(graph_);
  }

 private:
  // Prefer a sensor the solution already deploys, then the lowest active id.
  std::string pick_sensor(const DataItemKind& kind) const {
    std::set<std::string> in_use;
    for (const auto& n : graph_.nodes)
      if (n.role == NodeRole::sensor) in_use.insert(n.resource);
    std::string fallback;
    for (auto i : kb_.sensors_producing(kind)) {
      const auto& s = kb_.sensors()[i];
      if (!s.active) continue;
      if (in_use.contains(s.id)) return s.id;
      if (fallback.empty()) fallback = s.id;
    }
    return fallback;
  }

  const KnowledgeBase& kb_;
  std::shared_ptr<const DerivationTable> table_;
  Solution graph_;
  std::map<DataItemKind, std::size_t> producer_;
};

}  // namespace detail

inline DeploymentPlan generate_plan(const KnowledgeBase& kb, const Solution& solution,
                                    KindList extras = {}) {
  if (auto report = validate_solution(kb, solution); !report.empty())
    throw Error(ErrorCode::invalid_argument, "invalid solution: " + describe(report.front()));
  sort_unique(extras);
  const auto& task = *kb.find_task(solution.task_id);

  detail::PlanBuilder builder(kb, solution);
  for (const auto& k : extras) builder.ensure(k);
  Solution graph = builder.finish(extras);

  auto shape = detail::shape_of(graph);
  auto depths = detail::node_depths(graph, shape);

  DeploymentPlan plan;
  plan.task_id = task.id;
  plan.task_name = task.name;
  plan.solution_hash = canonical_hash(solution);
  plan.kb_version = kb_version_hash(kb);
  plan.extras = extras;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& node = graph.nodes[i];
    PlanStage stage;
    stage.id = detail::stage_id(i);
    stage.role = node.role;
    stage.resource = node.resource;
    stage.signature = node.signature;
    stage.output = node.output;
    stage.depth = depths[i];
    if (node.role == NodeRole::sensor) {
      const auto* s = kb.find_sensor(node.resource);
      stage.resource_name = s->name;
      stage.context = s->context;
    } else {
      const auto* d = kb.find_dpc(node.resource);
      stage.resource_name = d->name;
      stage.context = d->context;
    }
    for (auto e : shape.inputs[i])
      stage.inputs.push_back({graph.edges[e].kind, detail::stage_id(graph.edges[e].producer)});
    std::sort(stage.inputs.begin(), stage.inputs.end(),
              [](const PlanInput& a, const PlanInput& b) { return a.kind < b.kind; });
    plan.stages.push_back(std::move(stage));
  }
  for (const auto& [kind, node] : graph.sinks) plan.output_stream.push_back({kind, detail::stage_id(node)});

  Fnv1a id;
  id.field(plan.kb_version).field(plan.task_id).field(plan.solution_hash);
  for (const auto& k : extras) id.field(k.str());
  plan.plan_id = "plan-" + id.hex();
  return plan;
}

// ---------------------------------------------------------------------------
// Serialization

inline Json plan_to_json(const DeploymentPlan& plan) {
  Json stages = Json::array();
  for (const auto& s : plan.stages) {
    Json inputs = Json::array();
    for (const auto& in : s.inputs) inputs.push_back({{"kind", detail::kind_json(in.kind)}, {"stage", in.stage}});
    Json stage{{"id", s.id},
               {"role", std::string(to_string(s.role))},
               {"resource", s.resource},
               {"resource_name", s.resource_name},
               {"inputs", inputs},
               {"output", detail::kind_json(s.output)},
               {"depth", s.depth},
               {"context", s.context}};
    if (s.role == NodeRole::dpc) stage["signature"] = s.signature;
    stages.push_back(std::move(stage));
  }
  Json stream = Json::array();
  for (const auto& item : plan.output_stream)
    stream.push_back({{"kind", detail::kind_json(item.kind)}, {"stage", item.stage}});
  Json extras = Json::array();
  for (const auto& k : plan.extras) extras.push_back(detail::kind_json(k));
  return Json{{"format", std::string(kPlanFormat)},
              {"plan_id", plan.plan_id},
              {"task", {{"id", plan.task_id}, {"name", plan.task_name}}},
              {"solution_hash", plan.solution_hash},
              {"kb_version", plan.kb_version},
              {"settings",
               {{"sampling_interval_ms", plan.settings.sampling_interval_ms},
                {"window_size", plan.settings.window_size}}},
              {"stages", stages},
              {"output_stream", stream},
              {"extras", extras}};
}

inline std::string emit_plan(const DeploymentPlan& plan) { return plan_to_json(plan).dump(2) + "\n"; }

inline DeploymentPlan plan_from_json(const Json& doc) {
  detail::JsonCursor root(doc, "");
  if (root.at("format").string() != kPlanFormat) root.at("format").fail("unsupported plan format");
  DeploymentPlan plan;
  plan.plan_id = root.at("plan_id").string();
  plan.task_id = root.at("task").at("id").string();
  plan.task_name = root.at("task").at("name").string();
  plan.solution_hash = root.at("solution_hash").string();
  plan.kb_version = root.at("kb_version").string();
  plan.settings.sampling_interval_ms = static_cast<int>(root.at("settings").at("sampling_interval_ms").number());
  plan.settings.window_size = static_cast<int>(root.at("settings").at("window_size").number());
  auto stages = root.at("stages");
  for (std::size_t i = 0; i < stages.array_size(); ++i) {
    auto c = stages[i];
    PlanStage s;
    s.id = c.at("id").string();
    auto role = c.at("role").string();
    if (role == "sensor") s.role = NodeRole::sensor;
    else if (role == "dpc") s.role = NodeRole::dpc;
    else c.at("role").fail("unknown role");
    s.resource = c.at("resource").string();
    s.resource_name = c.at("resource_name").string();
    if (c.has("signature")) s.signature = static_cast<std::size_t>(c.at("signature").number());
    auto inputs = c.at("inputs");
    for (std::size_t j = 0; j < inputs.array_size(); ++j)
      s.inputs.push_back({detail::parse_inline_kind(inputs[j].at("kind")), inputs[j].at("stage").string()});
    s.output = detail::parse_inline_kind(c.at("output"));
    s.depth = static_cast<int>(c.at("depth").number());
    s.context = detail::parse_context(c.at("context"));
    plan.stages.push_back(std::move(s));
  }
  auto stream = root.at("output_stream");
  for (std::size_t i = 0; i < stream.array_size(); ++i)
    plan.output_stream.push_back({detail::parse_inline_kind(stream[i].at("kind")), stream[i].at("stage").string()});
  auto extras = root.at("extras");
  for (std::size_t i = 0; i < extras.array_size(); ++i)
    plan.extras.push_back(detail::parse_inline_kind(extras[i]));
  return plan;
}

inline DeploymentPlan parse_plan(std::string_view text) { return plan_from_json(parse_json_text(text)); }

// Symbolic run: every stage fires once its inputs exist; the plan is
// executable iff each stage fires in order, wiring matches the producers,
// the output stream is delivered, and no stage output goes unused.
inline ValidationReport check_plan(const DeploymentPlan& plan) {
  ValidationReport out;
  std::map<std::string, DataItemKind> produced;
  std::set<std::string> consumed;
  for (const auto& stage : plan.stages) {
    const std::string entity = "stage " + stage.id;
    if (produced.contains(stage.id)) out.push_back({entity, "id", "duplicate stage id"});
    if (stage.role == NodeRole::sensor && !stage.inputs.empty())
      out.push_back({entity, "inputs", "sensor stage has inputs"});
    if (stage.role == NodeRole::dpc && stage.inputs.empty())
      out.push_back({entity, "inputs", "processing stage has no inputs"});
    for (const auto& in : stage.inputs) {
      auto it = produced.find(in.stage);
      if (it == produced.end())
        out.push_back({entity, "inputs", "input " + in.kind.label + " from " + in.stage + " is not ready"});
      else if (it->second != in.kind)
        out.push_back({entity, "inputs", in.stage + " produces " + it->second.str() + ", not " + in.kind.str()});
      consumed.insert(in.stage);
    }
    produced.emplace(stage.id, stage.output);
  }
  std::set<std::string> delivered;
  for (const auto& item : plan.output_stream) {
    auto it = produced.find(item.stage);
    if (it == produced.end() || it->second != item.kind)
      out.push_back({"output_stream", item.kind.label, "not produced by " + item.stage});
    delivered.insert(item.stage);
  }
  for (const auto& stage : plan.stages)
    if (!consumed.contains(stage.id) && !delivered.contains(stage.id))
      out.push_back({"stage " + stage.id, "output", "output is never used"});
  return out;
}

}  // namespace cascom
