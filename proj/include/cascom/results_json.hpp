#pragma once

// JSON views of engine results, shared by the CLI (--json) and the service.

#include <string>
#include <vector>

#include <json.hpp>

#include "cascom/composer.hpp"
#include "cascom/context.hpp"
#include "cascom/cost.hpp"
#include "cascom/kb_json.hpp"
#include "cascom/qa.hpp"

namespace cascom {

inline Json kinds_json(const KindList& kinds) {
  Json out = Json::array();
  for (const auto& k : kinds) out.push_back(detail::kind_json(k));
  return out;
}

inline Json violations_json(const ValidationReport& report) {
  Json out = Json::array();
  for (const auto& v : report) out.push_back({{"entity", v.entity}, {"field", v.field}, {"message", v.message}});
  return out;
}

inline Json solution_json(const Solution& s) {
  Json nodes = Json::array();
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const auto& n = s.nodes[i];
    Json node{{"index", i},
              {"role", std::string(to_string(n.role))},
              {"resource", n.resource},
              {"output", detail::kind_json(n.output)}};
    if (n.role == NodeRole::dpc) node["signature"] = n.signature;
    nodes.push_back(std::move(node));
  }
  Json edges = Json::array();
  for (const auto& e : s.edges)
    edges.push_back({{"from", e.producer}, {"to", e.consumer}, {"kind", detail::kind_json(e.kind)}});
  Json sinks = Json::array();
  for (const auto& [kind, node] : s.sinks) sinks.push_back({{"kind", detail::kind_json(kind)}, {"node", node}});
  return Json{{"hash", canonical_hash(s)},
              {"task_id", s.task_id},
              {"expression", solution_expression(s)},
              {"depth", solution_depth(s)},
              {"nodes", nodes},
              {"edges", edges},
              {"sinks", sinks}};
}

inline Json report_json(const RecommendationReport& r) {
  Json sets = Json::array();
  for (const auto& m : r.missing_sets) {
    Json unlocks = Json::array();
    for (const auto& u : m.unlocks) unlocks.push_back({{"dpc", u.dpc}, {"signature", u.signature}});
    sets.push_back({{"kinds", kinds_json(m.kinds)}, {"unlocks", unlocks}, {"inactive_sensors", m.inactive_sensors}});
  }
  return Json{{"unsatisfiable_kinds", kinds_json(r.unsatisfiable_kinds)},
              {"missing_sets", sets},
              {"truncated", r.truncated}};
}

inline Json compose_json(const ComposeResult& result) {
  Json solutions = Json::array();
  for (const auto& s : result.solutions) solutions.push_back(solution_json(s));
  return Json{{"solutions", solutions}, {"report", report_json(result.report)}, {"truncated", result.truncated}};
}

inline Json scores_json(const std::vector<SolutionScore>& scores) {
  Json out = Json::array();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    out.push_back({{"rank", i + 1},
                   {"solution_hash", s.solution_hash},
                   {"node_count", s.node_count},
                   {"raw", s.raw},
                   {"normalized", s.normalized},
                   {"total", s.total}});
  }
  return out;
}

inline Json derivation_json(const KnowledgeBase& kb, const DerivationTree& tree) {
  Json node{{"kind", detail::kind_json(tree.kind)}, {"tier", tree.tier}};
  if (tree.via) {
    node["dpc"] = kb.dpcs()[tree.via->dpc].id;
    node["signature"] = tree.via->signature;
    Json inputs = Json::array();
    for (const auto& child : tree.inputs) inputs.push_back(derivation_json(kb, child));
    node["inputs"] = inputs;
  }
  return node;
}

inline Json context_json(const KnowledgeBase& kb, const DerivationTable& table) {
  Json available = Json::array();
  std::vector<std::pair<int, DataItemKind>> ordered;
  for (const auto& [kind, tier] : table.tiers) ordered.emplace_back(tier, kind);
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [tier, kind] : ordered) {
    Json item{{"kind", detail::kind_json(kind)}, {"tier", tier}};
    if (auto it = table.derivations.find(kind); it != table.derivations.end()) {
      item["dpc"] = kb.dpcs()[it->second.dpc].id;
      item["signature"] = it->second.signature;
    }
    available.push_back(std::move(item));
  }
  return Json{{"available", available}};
}

inline Json question_option_json(const QuestionOption& q) {
  return Json{{"id", q.question.id},
              {"text", q.question.text},
              {"concept", q.question.concept_name},
              {"distinct_answers", q.distinct_answers}};
}

}  // namespace cascom
