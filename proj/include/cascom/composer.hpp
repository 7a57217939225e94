#pragma once

// Backward-chaining composition of sensors and data processing components
// (DPCs) into solution DAGs that produce a task's required stream, plus
// recommendations when active resources are insufficient.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cascom/context.hpp"
#include "cascom/error.hpp"
#include "cascom/hash.hpp"
#include "cascom/kb.hpp"

namespace cascom {

enum class NodeRole { sensor, dpc };

inline std::string_view to_string(NodeRole role) {
  return role == NodeRole::sensor ? "sensor" : "dpc";
}

// One use of a resource inside a solution. Sensor nodes always carry
// signature 0.
struct SolutionNode {
  NodeRole role = NodeRole::sensor;
  std::string resource;
  std::size_t signature = 0;
  DataItemKind output;

  auto operator<=>(const SolutionNode&) const = default;
  bool operator==(const SolutionNode&) const = default;

  static SolutionNode sensor(std::string id, DataItemKind kind) {
    return {NodeRole::sensor, std::move(id), 0, std::move(kind)};
  }
  static SolutionNode dpc(std::string id, std::size_t signature, DataItemKind kind) {
    return {NodeRole::dpc, std::move(id), signature, std::move(kind)};
  }

  std::string label() const {
    if (role == NodeRole::sensor) return resource;
    return resource + "#" + std::to_string(signature);
  }
};

struct SolutionEdge {
  std::size_t producer = 0;  // index into Solution::nodes
  std::size_t consumer = 0;
  DataItemKind kind;

  auto operator<=>(const SolutionEdge&) const = default;
  bool operator==(const SolutionEdge&) const = default;
};

struct Solution {
  std::string task_id;
  std::vector<SolutionNode> nodes;
  std::vector<SolutionEdge> edges;
  // Required-stream kind -> producing node, in required-stream order.
  std::vector<std::pair<DataItemKind, std::size_t>> sinks;

  bool operator==(const Solution&) const = default;
};

struct ComposeLimits {
  int max_depth = 16;
  std::size_t max_solutions = 64;
  bool allow_shared_subtrees = true;
};

struct SignatureId {
  std::string dpc;
  std::size_t signature = 0;

  auto operator<=>(const SignatureId&) const = default;
  bool operator==(const SignatureId&) const = default;
};

struct MissingSet {
  KindList kinds;  // sorted
  // Signatures that become usable in some solution enabled by this set.
  std::vector<SignatureId> unlocks;
  // Described-but-inactive sensors that already emit one of the kinds.
  std::vector<std::string> inactive_sensors;

  bool operator==(const MissingSet&) const = default;
};

struct RecommendationReport {
  KindList unsatisfiable_kinds;
  std::vector<MissingSet> missing_sets;  // by size, then lexicographic
  bool truncated = false;

  bool operator==(const RecommendationReport&) const = default;
};

struct ComposeResult {
  std::vector<Solution> solutions;  // ascending canonical hash
  RecommendationReport report;
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Canonical form and hashing

namespace detail {

struct SolutionShape {
  std::vector<std::vector<std::size_t>> inputs;  // per node: incoming edge ids
  std::vector<std::vector<std::size_t>> outputs;
};

inline SolutionShape shape_of(const Solution& s) {
  SolutionShape shape;
  shape.inputs.resize(s.nodes.size());
  shape.outputs.resize(s.nodes.size());
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    const auto& edge = s.edges[e];
    if (edge.producer >= s.nodes.size() || edge.consumer >= s.nodes.size()) continue;
    shape.inputs[edge.consumer].push_back(e);
    shape.outputs[edge.producer].push_back(e);
  }
  return shape;
}

// Merkle-style hash per node: the node's own identity plus the hashes of its
// producers ordered by input kind. Nodes on a cycle hash to a fixed marker.
inline std::vector<std::uint64_t> node_hashes(const Solution& s, const SolutionShape& shape) {
  const std::size_t n = s.nodes.size();
  std::vector<std::uint64_t> hash(n, 0);
  std::vector<int> state(n, 0);  // 0 new, 1 visiting, 2 done
  std::function<std::uint64_t(std::size_t)> visit = [&](std::size_t v) -> std::uint64_t {
    if (state[v] == 2) return hash[v];
    if (state[v] == 1) return 0x6379636c65ULL;
    state[v] = 1;
    const auto& node = s.nodes[v];
    std::vector<std::pair<DataItemKind, std::uint64_t>> in;
    for (auto e : shape.inputs[v]) in.emplace_back(s.edges[e].kind, visit(s.edges[e].producer));
    std::sort(in.begin(), in.end());
    Fnv1a h;
    h.field(to_string(node.role)).field(node.resource).field(node.signature).field(node.output.str());
    for (const auto& [kind, child] : in) h.field(kind.str()).field(child);
    state[v] = 2;
    return hash[v] = h.digest();
  };
  for (std::size_t v = 0; v < n; ++v) visit(v);
  return hash;
}

// Longest DPC chain ending at each node (sensors are 0).
inline std::vector<int> node_depths(const Solution& s, const SolutionShape& shape) {
  const std::size_t n = s.nodes.size();
  std::vector<int> depth(n, -1);
  std::vector<int> state(n, 0);
  std::function<int(std::size_t)> visit = [&](std::size_t v) -> int {
    if (state[v] == 2) return depth[v];
    if (state[v] == 1) return 0;
    state[v] = 1;
    int best = 0;
    for (auto e : shape.inputs[v]) best = std::max(best, visit(s.edges[e].producer));
    state[v] = 2;
    return depth[v] = best + (s.nodes[v].role == NodeRole::dpc ? 1 : 0);
  };
  for (std::size_t v = 0; v < n; ++v) visit(v);
  return depth;
}

}  // namespace detail

// Equal for isomorphic solutions, independent of node and edge order.
inline std::string canonical_hash(const Solution& s) {
  auto shape = detail::shape_of(s);
  auto hashes = detail::node_hashes(s, shape);
  auto sorted = hashes;
  std::sort(sorted.begin(), sorted.end());
  Fnv1a h;
  h.field(s.task_id).field(sorted.size());
  for (auto v : sorted) h.field(v);
  for (const auto& [kind, node] : s.sinks)
    h.field(kind.str()).field(node < hashes.size() ? hashes[node] : 0);
  return h.hex();
}

// Longest DPC chain in the solution.
inline int solution_depth(const Solution& s) {
  auto depths = detail::node_depths(s, detail::shape_of(s));
  int best = 0;
  for (int d : depths) best = std::max(best, d);
  return best;
}

// Reorders nodes by (dependency depth, resource, signature, output) and
// edges by (consumer, producer, kind). Node order is a topological order.
inline Solution canonicalize(const Solution& s) {
  auto shape = detail::shape_of(s);
  auto depths = detail::node_depths(s, shape);
  auto hashes = detail::node_hashes(s, shape);
  std::vector<std::size_t> order(s.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& na = s.nodes[a];
    const auto& nb = s.nodes[b];
    return std::tie(depths[a], na.resource, na.signature, na.output, hashes[a]) <
           std::tie(depths[b], nb.resource, nb.signature, nb.output, hashes[b]);
  });
  std::vector<std::size_t> position(s.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;

  Solution out;
  out.task_id = s.task_id;
  for (auto i : order) out.nodes.push_back(s.nodes[i]);
  for (const auto& e : s.edges)
    out.edges.push_back({position.at(e.producer), position.at(e.consumer), e.kind});
  std::sort(out.edges.begin(), out.edges.end(), [](const SolutionEdge& a, const SolutionEdge& b) {
    return std::tie(a.consumer, a.producer, a.kind) < std::tie(b.consumer, b.producer, b.kind);
  });
  for (const auto& [kind, node] : s.sinks) out.sinks.emplace_back(kind, position.at(node));
  return out;
}

// "((s-ah, s-at) => c-1, s-lw) => c-2"; multiple sinks are joined by "; ".
inline std::string solution_expression(const Solution& s) {
  auto shape = detail::shape_of(s);
  std::function<std::string(std::size_t, int)> render = [&](std::size_t v, int guard) {
    const auto& node = s.nodes[v];
    if (node.role == NodeRole::sensor || guard > 64) return node.resource;
    std::vector<std::pair<DataItemKind, std::size_t>> in;
    for (auto e : shape.inputs[v]) in.emplace_back(s.edges[e].kind, s.edges[e].producer);
    std::sort(in.begin(), in.end());
    std::string args;
    for (const auto& [kind, producer] : in) {
      if (!args.empty()) args += ", ";
      args += render(producer, guard + 1);
    }
    std::string name = node.resource;
    const auto sig_note = node.signature ? "#" + std::to_string(node.signature) : std::string();
    return "(" + args + ") => " + name + sig_note;
  };
  std::string out;
  for (const auto& [kind, node] : s.sinks) {
    if (!out.empty()) out += "; ";
    out += render(node, 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

inline ValidationReport validate_solution(const KnowledgeBase& kb, const Solution& s) {
  ValidationReport out;
  const std::string root = "solution";
  auto node_name = [&](std::size_t i) {
    return i < s.nodes.size() ? s.nodes[i].label() : "#" + std::to_string(i);
  };

  if (s.nodes.empty()) out.push_back({root, "nodes", "solution has no nodes"});
  const TaskDescription* task = kb.find_task(s.task_id);
  if (!task) {
    out.push_back({root, "task_id", "unknown task '" + s.task_id + "'"});
  } else {
    if (s.sinks.size() != task->required_stream.size())
      out.push_back({root, "sinks", "sink count differs from the required stream"});
    for (std::size_t i = 0; i < task->required_stream.size(); ++i) {
      if (i >= s.sinks.size() || s.sinks[i].first != task->required_stream[i])
        out.push_back({root, "sinks[" + std::to_string(i) + "]",
                       "required kind " + task->required_stream[i].str() + " not covered"});
    }
  }

  // Node declarations.
  std::vector<const Signature*> sigs(s.nodes.size(), nullptr);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const auto& node = s.nodes[i];
    const std::string entity = "node " + node.label();
    if (node.role == NodeRole::sensor) {
      const auto* sensor = kb.find_sensor(node.resource);
      if (!sensor) {
        out.push_back({entity, "resource", "unknown sensor"});
        continue;
      }
      if (!sensor->active) out.push_back({entity, "resource", "sensor is not active"});
      if (!contains(sensor->outputs, node.output))
        out.push_back({entity, "output", "sensor does not emit " + node.output.str()});
    } else {
      const auto* dpc = kb.find_dpc(node.resource);
      if (!dpc) {
        out.push_back({entity, "resource", "unknown dpc"});
        continue;
      }
      if (node.signature >= dpc->signatures.size()) {
        out.push_back({entity, "signature", "no such signature"});
        continue;
      }
      sigs[i] = &dpc->signatures[node.signature];
      if (sigs[i]->output != node.output)
        out.push_back({entity, "output",
                       "signature produces " + sigs[i]->output.str() + ", not " + node.output.str()});
    }
  }

  // Edges: the carried kind must equal both ends exactly (label, type, unit).
  std::vector<std::map<DataItemKind, int>> incoming(s.nodes.size());
  for (const auto& e : s.edges) {
    const std::string entity = "edge " + node_name(e.producer) + " -> " + node_name(e.consumer);
    if (e.producer >= s.nodes.size() || e.consumer >= s.nodes.size()) {
      out.push_back({entity, "endpoints", "node index out of range"});
      continue;
    }
    const auto& producer = s.nodes[e.producer];
    const auto& consumer = s.nodes[e.consumer];
    if (producer.output != e.kind)
      out.push_back({entity, "kind",
                     "producer emits " + producer.output.str() + " but edge carries " + e.kind.str()});
    if (consumer.role == NodeRole::sensor) {
      out.push_back({entity, "consumer", "sensors take no inputs"});
      continue;
    }
    incoming[e.consumer][e.kind]++;
    if (const auto* sig = sigs[e.consumer]; sig && !contains(sig->inputs, e.kind)) {
      std::string expected;
      for (const auto& in : sig->inputs)
        if (in.label == e.kind.label) expected = in.str();
      out.push_back({entity, "kind",
                     expected.empty()
                         ? "consumer does not accept " + e.kind.str()
                         : "incompatible kinds: edge carries " + e.kind.str() +
                               " but consumer expects " + expected});
    }
  }
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (!sigs[i]) continue;
    for (const auto& in : sigs[i]->inputs) {
      int count = incoming[i].contains(in) ? incoming[i][in] : 0;
      if (count != 1)
        out.push_back({"node " + s.nodes[i].label(), "inputs",
                       "expected exactly one producer for " + in.str() + ", found " +
                           std::to_string(count)});
    }
  }

  for (std::size_t i = 0; i < s.sinks.size(); ++i) {
    const auto& [kind, node] = s.sinks[i];
    if (node >= s.nodes.size())
      out.push_back({root, "sinks[" + std::to_string(i) + "]", "node index out of range"});
    else if (s.nodes[node].output != kind)
      out.push_back({root, "sinks[" + std::to_string(i) + "]",
                     "sink node does not produce " + kind.str()});
  }

  // Acyclic, and every node feeds some sink.
  auto shape = detail::shape_of(s);
  std::vector<int> state(s.nodes.size(), 0);
  bool cyclic = false;
  std::function<void(std::size_t)> dfs = [&](std::size_t v) {
    state[v] = 1;
    for (auto e : shape.outputs[v]) {
      auto w = s.edges[e].consumer;
      if (state[w] == 1) cyclic = true;
      else if (state[w] == 0) dfs(w);
    }
    state[v] = 2;
  };
  for (std::size_t v = 0; v < s.nodes.size(); ++v)
    if (state[v] == 0) dfs(v);
  if (cyclic) out.push_back({root, "edges", "solution graph has a directed cycle"});

  std::vector<bool> live(s.nodes.size(), false);
  std::vector<std::size_t> stack;
  for (const auto& [kind, node] : s.sinks)
    if (node < s.nodes.size() && !live[node]) {
      live[node] = true;
      stack.push_back(node);
    }
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (auto e : shape.inputs[v]) {
      auto p = s.edges[e].producer;
      if (!live[p]) {
        live[p] = true;
        stack.push_back(p);
      }
    }
  }
  for (std::size_t v = 0; v < s.nodes.size(); ++v)
    if (!live[v]) out.push_back({"node " + s.nodes[v].label(), "edges", "node does not reach a sink"});
  return out;
}

// ---------------------------------------------------------------------------
// Per-kind alternatives (tree form)

// A tree of resource uses producing one kind; children follow the
// signature's (sorted) input order.
struct PartialSolution {
  SolutionNode node;
  std::vector<PartialSolution> inputs;

  bool operator==(const PartialSolution&) const = default;
};

struct MissingRecord {
  DataItemKind kind;
  KindList path;  // kinds on the recursion stack when the gap was found

  bool operator==(const MissingRecord&) const = default;
};

struct KindAlternatives {
  std::vector<PartialSolution> alternatives;  // sensors first, then DPC signatures
  std::vector<MissingRecord> missing;
  bool truncated = false;
};

namespace detail {

template <class T>
std::vector<std::vector<T>> capped_product(const std::vector<std::vector<T>>& choices,
                                           std::size_t cap, bool& truncated) {
  std::vector<std::vector<T>> acc{{}};
  for (const auto& options : choices) {
    std::vector<std::vector<T>> next;
    for (const auto& prefix : acc)
      for (const auto& option : options) {
        if (next.size() >= cap) {
          truncated = true;
          break;
        }
        auto row = prefix;
        row.push_back(option);
        next.push_back(std::move(row));
      }
    acc = std::move(next);
    if (acc.empty()) break;
  }
  return acc;
}

}  // namespace detail

// One recursion step of backward chaining: every way to produce `kind`
// without reusing a kind already on `path`. Active sensors are listed before
// DPC signatures. Gaps are reported as missing records.
inline KindAlternatives satisfy_kind(const KnowledgeBase& kb, const DataItemKind& kind,
                                     const KindList& path, const ComposeLimits& limits) {
  KindAlternatives result;
  const std::size_t cap = std::max<std::size_t>(limits.max_solutions, 1);

  for (auto i : kb.sensors_producing(kind)) {
    const auto& sensor = kb.sensors()[i];
    if (!sensor.active) continue;
    if (result.alternatives.size() >= cap) {
      result.truncated = true;
      break;
    }
    result.alternatives.push_back({SolutionNode::sensor(sensor.id, kind), {}});
  }

  KindList below = path;
  below.push_back(kind);
  sort_unique(below);
  const bool depth_left = static_cast<int>(path.size()) + 1 <= limits.max_depth;

  for (const auto& ref : kb.signatures_producing(kind)) {
    if (!depth_left) break;
    const auto& sig = kb.signature(ref);
    bool cyclic = std::any_of(sig.inputs.begin(), sig.inputs.end(),
                              [&](const DataItemKind& in) { return contains(below, in); });
    if (cyclic) continue;
    std::vector<std::vector<PartialSolution>> per_input;
    for (const auto& in : sig.inputs) {
      auto sub = satisfy_kind(kb, in, below, limits);
      result.truncated = result.truncated || sub.truncated;
      result.missing.insert(result.missing.end(), sub.missing.begin(), sub.missing.end());
      per_input.push_back(std::move(sub.alternatives));
    }
    for (auto& combo : detail::capped_product(per_input, cap, result.truncated)) {
      if (result.alternatives.size() >= cap) {
        result.truncated = true;
        break;
      }
      const auto& dpc = kb.dpcs()[ref.dpc];
      result.alternatives.push_back(
          {SolutionNode::dpc(dpc.id, ref.signature, kind), std::move(combo)});
    }
  }

  if (result.alternatives.empty()) result.missing.push_back({kind, path});
  return result;
}

// ---------------------------------------------------------------------------
// Recommendations

namespace detail {

struct Candidate {
  KindList kinds;
  std::set<SignatureId> unlocks;
};

// Keeps only inclusion-minimal sets. Sets above `exact_size` are retained
// greedily: at most `greedy_keep` of the smallest.
inline std::vector<Candidate> minimize(std::vector<Candidate> sets, std::size_t exact_size,
                                       std::size_t greedy_keep) {
  std::sort(sets.begin(), sets.end(), [](const Candidate& a, const Candidate& b) {
    if (a.kinds.size() != b.kinds.size()) return a.kinds.size() < b.kinds.size();
    return a.kinds < b.kinds;
  });
  std::vector<Candidate> out;
  std::size_t large = 0;
  for (auto& c : sets) {
    if (!out.empty() && out.back().kinds == c.kinds) {
      out.back().unlocks.insert(c.unlocks.begin(), c.unlocks.end());
      continue;
    }
    bool dominated = std::any_of(out.begin(), out.end(), [&](const Candidate& kept) {
      return std::includes(c.kinds.begin(), c.kinds.end(), kept.kinds.begin(), kept.kinds.end());
    });
    if (dominated) continue;
    if (c.kinds.size() > exact_size && ++large > greedy_keep) continue;
    out.push_back(std::move(c));
  }
  return out;
}

class Recommender {
 public:
  static constexpr std::size_t kExactSize = 3;
  static constexpr std::size_t kGreedyKeep = 16;
  static constexpr std::size_t kExpansionBudget = 200000;

  Recommender(const KnowledgeBase& kb, const ComposeLimits& limits) : kb_(kb), limits_(limits) {}

  RecommendationReport run(const TaskDescription& task) {
    auto acc = sets_for_stream(task);
    if (acc.empty() && !truncated_) {
      any_kind_direct_ = true;
      unsatisfiable_.clear();
      acc = sets_for_stream(task);
    }

    RecommendationReport report;
    report.truncated = truncated_;
    report.unsatisfiable_kinds.assign(unsatisfiable_.begin(), unsatisfiable_.end());
    for (auto& c : acc) {
      if (c.kinds.empty()) continue;  // already satisfiable
      MissingSet m;
      m.kinds = c.kinds;
      m.unlocks.assign(c.unlocks.begin(), c.unlocks.end());
      for (const auto& k : c.kinds)
        for (auto i : kb_.sensors_producing(k))
          if (!kb_.sensors()[i].active) m.inactive_sensors.push_back(kb_.sensors()[i].id);
      std::sort(m.inactive_sensors.begin(), m.inactive_sensors.end());
      m.inactive_sensors.erase(std::unique(m.inactive_sensors.begin(), m.inactive_sensors.end()),
                               m.inactive_sensors.end());
      report.missing_sets.push_back(std::move(m));
    }
    return report;
  }

 private:
  std::vector<Candidate> sets_for_stream(const TaskDescription& task) {
    std::vector<Candidate> acc{{}};
    for (const auto& kind : task.required_stream) acc = combine(acc, sets_for(kind, {}));
    return acc;
  }

  std::vector<Candidate> combine(const std::vector<Candidate>& left,
                                 const std::vector<Candidate>& right) {
    std::vector<Candidate> out;
    for (const auto& a : left)
      for (const auto& b : right) {
        Candidate c;
        std::set_union(a.kinds.begin(), a.kinds.end(), b.kinds.begin(), b.kinds.end(),
                       std::back_inserter(c.kinds));
        c.unlocks = a.unlocks;
        c.unlocks.insert(b.unlocks.begin(), b.unlocks.end());
        out.push_back(std::move(c));
      }
    return minimize(std::move(out), kExactSize, kGreedyKeep);
  }

  // Minimal sets of kinds which, if sensed directly, make `kind` producible.
  std::vector<Candidate> sets_for(const DataItemKind& kind, const KindList& path) {
    if (++expansions_ > kExpansionBudget) {
      truncated_ = true;
      return {{{kind}, {}}};
    }
    for (auto i : kb_.sensors_producing(kind))
      if (kb_.sensors()[i].active) return {{}};

    // First pass: only raw kinds (no processing component makes them, or
    // some described sensor does) may be sensed directly. Second pass, run
    // when the first finds nothing: any kind may.
    bool direct = any_kind_direct_ || kb_.signatures_producing(kind).empty() ||
                  !kb_.sensors_producing(kind).empty();
    std::vector<Candidate> options;
    if (direct) options.push_back({{kind}, {}});
    KindList below = path;
    below.push_back(kind);
    sort_unique(below);
    if (static_cast<int>(path.size()) + 1 <= limits_.max_depth) {
      for (const auto& ref : kb_.signatures_producing(kind)) {
        const auto& sig = kb_.signature(ref);
        if (std::any_of(sig.inputs.begin(), sig.inputs.end(),
                        [&](const DataItemKind& in) { return contains(below, in); }))
          continue;
        std::vector<Candidate> acc{{{}, {SignatureId{kb_.dpcs()[ref.dpc].id, ref.signature}}}};
        for (const auto& in : sig.inputs) {
          acc = combine(acc, sets_for(in, below));
          if (acc.empty()) break;
        }
        options.insert(options.end(), acc.begin(), acc.end());
      }
    }
    auto result = minimize(std::move(options), kExactSize, kGreedyKeep);
    if (result.empty() || !result.front().kinds.empty()) unsatisfiable_.insert(kind);
    return result;
  }

  const KnowledgeBase& kb_;
  ComposeLimits limits_;
  std::set<DataItemKind> unsatisfiable_;
  std::size_t expansions_ = 0;
  bool truncated_ = false;
  bool any_kind_direct_ = false;
};

}  // namespace detail

// Minimal sets of newly-sensable kinds that would enable a solution for
// `task`. Empty when the task is already satisfiable.
inline RecommendationReport recommend(const KnowledgeBase& kb, const TaskDescription& task,
                                      const ComposeLimits& limits = {}) {
  return detail::Recommender(kb, limits).run(task);
}

// ---------------------------------------------------------------------------
// Enumeration

namespace detail {

struct Choice {
  NodeRole role = NodeRole::sensor;
  std::size_t index = 0;  // sensor index, or dpc index
  std::size_t signature = 0;
};

// Depth-first search over consistent assignments kind -> producer. With
// shared subtrees every kind in a solution has exactly one producer, so a
// solution is exactly an acyclic, depth-bounded, closed assignment rooted at
// the required stream.
class AssignmentSearch {
 public:
  AssignmentSearch(const KnowledgeBase& kb, const TaskDescription& task,
                   const ComposeLimits& limits)
      : kb_(kb), task_(task), limits_(limits), table_(discover(kb)) {}

  std::vector<Solution> run(bool& truncated) {
    for (auto it = task_.required_stream.rbegin(); it != task_.required_stream.rend(); ++it)
      push_pending(*it);
    search();
    truncated = stopped_;
    return std::move(found_);
  }

 private:
  void push_pending(const DataItemKind& kind) {
    if (assignment_.contains(kind) || pending_set_.contains(kind)) return;
    pending_.push_back(kind);
    pending_set_.insert(kind);
  }

  bool reaches(const DataItemKind& from, const DataItemKind& target) const {
    std::vector<DataItemKind> stack{from};
    std::set<DataItemKind> seen;
    while (!stack.empty()) {
      auto k = stack.back();
      stack.pop_back();
      if (k == target) return true;
      if (!seen.insert(k).second) continue;
      auto it = assignment_.find(k);
      if (it == assignment_.end() || it->second.role == NodeRole::sensor) continue;
      for (const auto& in : kb_.signature({it->second.index, it->second.signature}).inputs)
        stack.push_back(in);
    }
    return false;
  }

  // Lower bound on the longest DPC chain of any completion: exact for
  // assigned kinds, the discovery tier for unassigned ones.
  int depth_bound(const DataItemKind& kind, std::map<DataItemKind, int>& memo) const {
    if (auto m = memo.find(kind); m != memo.end()) return m->second;
    int result = 0;
    auto it = assignment_.find(kind);
    if (it == assignment_.end()) {
      result = table_->tier(kind).value_or(0);
    } else if (it->second.role == NodeRole::dpc) {
      int best = 0;
      for (const auto& in : kb_.signature({it->second.index, it->second.signature}).inputs)
        best = std::max(best, depth_bound(in, memo));
      result = best + 1;
    }
    memo.emplace(kind, result);
    return result;
  }

  bool within_depth() const {
    std::map<DataItemKind, int> memo;
    for (const auto& k : task_.required_stream)
      if (depth_bound(k, memo) > limits_.max_depth) return false;
    return true;
  }

  void search() {
    if (stopped_) return;
    if (pending_.empty()) {
      emit();
      return;
    }
    const DataItemKind kind = pending_.back();
    pending_.pop_back();
    pending_set_.erase(kind);

    for (auto i : kb_.sensors_producing(kind)) {
      if (!kb_.sensors()[i].active) continue;
      assignment_.emplace(kind, Choice{NodeRole::sensor, i, 0});
      search();
      assignment_.erase(kind);
      if (stopped_) break;
    }
    if (!stopped_) {
      for (const auto& ref : kb_.signatures_producing(kind)) {
        const auto& sig = kb_.signature(ref);
        bool usable = std::all_of(sig.inputs.begin(), sig.inputs.end(), [&](const DataItemKind& in) {
          return in != kind && table_->available(in) && !reaches(in, kind);
        });
        if (!usable) continue;
        assignment_.emplace(kind, Choice{NodeRole::dpc, ref.dpc, ref.signature});
        if (within_depth()) {
          const auto saved_size = pending_.size();
          std::vector<DataItemKind> added;
          for (auto it = sig.inputs.rbegin(); it != sig.inputs.rend(); ++it)
            if (!assignment_.contains(*it) && !pending_set_.contains(*it)) {
              push_pending(*it);
              added.push_back(*it);
            }
          search();
          pending_.resize(saved_size);
          for (const auto& k : added) pending_set_.erase(k);
        }
        assignment_.erase(kind);
        if (stopped_) break;
      }
    }
    pending_.push_back(kind);
    pending_set_.insert(kind);
  }

  void emit() {
    if (found_.size() >= limits_.max_solutions) {
      stopped_ = true;
      return;
    }
    Solution s;
    s.task_id = task_.id;
    std::map<DataItemKind, std::size_t> node_of;
    for (const auto& [kind, choice] : assignment_) {
      node_of.emplace(kind, s.nodes.size());
      if (choice.role == NodeRole::sensor)
        s.nodes.push_back(SolutionNode::sensor(kb_.sensors()[choice.index].id, kind));
      else
        s.nodes.push_back(SolutionNode::dpc(kb_.dpcs()[choice.index].id, choice.signature, kind));
    }
    for (const auto& [kind, choice] : assignment_) {
      if (choice.role != NodeRole::dpc) continue;
      for (const auto& in : kb_.signature({choice.index, choice.signature}).inputs)
        s.edges.push_back({node_of.at(in), node_of.at(kind), in});
    }
    for (const auto& k : task_.required_stream) s.sinks.emplace_back(k, node_of.at(k));
    found_.push_back(canonicalize(s));
  }

  const KnowledgeBase& kb_;
  const TaskDescription& task_;
  ComposeLimits limits_;
  std::shared_ptr<const DerivationTable> table_;

  std::map<DataItemKind, Choice> assignment_;
  std::vector<DataItemKind> pending_;
  std::set<DataItemKind> pending_set_;
  std::vector<Solution> found_;
  bool stopped_ = false;
};

// Without sharing, each consumer gets its own producer subtree.
inline std::vector<Solution> tree_solutions(const KnowledgeBase& kb, const TaskDescription& task,
                                            const ComposeLimits& limits, bool& truncated) {
  std::vector<std::vector<PartialSolution>> per_kind;
  for (const auto& kind : task.required_stream) {
    auto alt = satisfy_kind(kb, kind, {}, limits);
    truncated = truncated || alt.truncated;
    per_kind.push_back(std::move(alt.alternatives));
  }
  std::vector<Solution> out;
  for (const auto& forest : capped_product(per_kind, limits.max_solutions, truncated)) {
    Solution s;
    s.task_id = task.id;
    std::function<std::size_t(const PartialSolution&)> add = [&](const PartialSolution& p) {
      std::size_t self = s.nodes.size();
      s.nodes.push_back(p.node);
      const auto* dpc = p.node.role == NodeRole::dpc ? kb.find_dpc(p.node.resource) : nullptr;
      for (std::size_t i = 0; i < p.inputs.size(); ++i) {
        auto child = add(p.inputs[i]);
        s.edges.push_back({child, self, dpc->signatures[p.node.signature].inputs[i]});
      }
      return self;
    };
    for (std::size_t i = 0; i < forest.size(); ++i)
      s.sinks.emplace_back(task.required_stream[i], add(forest[i]));
    out.push_back(canonicalize(s));
  }
  return out;
}

}  // namespace detail

// Enumerates the distinct valid solutions for `task_id` within `limits`,
// ordered by canonical hash. When none exist the report carries the minimal
// missing sets.
inline ComposeResult compose(const KnowledgeBase& kb, const std::string& task_id,
                             const ComposeLimits& limits = {}) {
  if (limits.max_depth <= 0 || limits.max_solutions == 0)
    throw Error(ErrorCode::invalid_argument, "compose limits must be positive");
  const TaskDescription* task = kb.find_task(task_id);
  if (!task) throw Error(ErrorCode::unknown_task, "unknown task '" + task_id + "'");

  ComposeResult result;
  std::vector<Solution> raw;
  if (limits.allow_shared_subtrees)
    raw = detail::AssignmentSearch(kb, *task, limits).run(result.truncated);
  else
    raw = detail::tree_solutions(kb, *task, limits, result.truncated);

  std::map<std::string, Solution> unique;
  for (auto& s : raw) unique.emplace(canonical_hash(s), std::move(s));
  for (auto& [hash, s] : unique) result.solutions.push_back(std::move(s));

  if (result.solutions.empty()) result.report = recommend(kb, *task, limits);
  return result;
}

}  // namespace cascom
