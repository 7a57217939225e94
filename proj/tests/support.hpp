#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cascom/cascom.hpp"

namespace cascom::testing {

inline std::filesystem::path data_dir() { return CASCOM_DATA_DIR; }
inline std::filesystem::path golden_dir() { return CASCOM_GOLDEN_DIR; }

inline KnowledgeBase load_data(const std::string& name) { return load_kb(data_dir() / name); }

inline DataItemKind real_kind(const std::string& label, const std::string& unit = "count") {
  return {label, ValueType::real, unit};
}

inline KbHeader standard_header() {
  KbHeader h;
  h.attributes = {{"accuracy", {Polarity::benefit, 0.0}},
                  {"reliability", {Polarity::benefit, 0.0}},
                  {"energy", {Polarity::cost, 0.0}},
                  {"latency", {Polarity::cost, 0.0}}};
  return h;
}

// ---------------------------------------------------------------------------
// Random composition KBs

struct RandomKbShape {
  int max_kinds = 6;
  int max_sensors = 8;
  int max_dpcs = 8;
  int max_signatures = 3;
  int max_inputs = 3;
  int max_tasks = 3;
  int max_required = 2;
  double active_probability = 0.75;
};

inline KnowledgeBase random_composition_kb(std::mt19937_64& rng, const RandomKbShape& shape = {}) {
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto value = [&] { return std::round(std::uniform_real_distribution<double>(0.1, 5.0)(rng) * 100.0) / 100.0; };

  const int n_kinds = uniform(2, shape.max_kinds);
  std::vector<DataItemKind> kinds;
  for (int i = 0; i < n_kinds; ++i) kinds.push_back(real_kind("k" + std::to_string(i)));
  auto pick_kinds = [&](int count, const DataItemKind* exclude) {
    std::vector<DataItemKind> pool;
    for (const auto& k : kinds)
      if (!exclude || k != *exclude) pool.push_back(k);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(count)));
    return pool;
  };

  std::vector<SensorDescription> sensors;
  for (int i = 0, n = uniform(0, shape.max_sensors); i < n; ++i) {
    SensorDescription s;
    s.id = "s" + std::to_string(i);
    s.name = "sensor " + std::to_string(i);
    s.outputs = pick_kinds(uniform(1, 2), nullptr);
    s.active = chance(shape.active_probability);
    s.context = {{"energy", value()}, {"reliability", value()}};
    sensors.push_back(std::move(s));
  }

  std::vector<DpcDescription> dpcs;
  for (int i = 0, n = uniform(0, shape.max_dpcs); i < n; ++i) {
    DpcDescription d;
    d.id = "d" + std::to_string(i);
    d.name = "component " + std::to_string(i);
    for (int s = 0, ns = uniform(1, shape.max_signatures); s < ns; ++s) {
      Signature sig;
      sig.output = kinds[static_cast<std::size_t>(uniform(0, n_kinds - 1))];
      sig.inputs = pick_kinds(uniform(1, std::min(shape.max_inputs, n_kinds - 1)), &sig.output);
      sort_unique(sig.inputs);
      if (std::find(d.signatures.begin(), d.signatures.end(), sig) == d.signatures.end())
        d.signatures.push_back(std::move(sig));
    }
    d.context = {{"energy", value()}, {"accuracy", value()}};
    dpcs.push_back(std::move(d));
  }

  std::vector<TaskDescription> tasks;
  for (int i = 0, n = uniform(1, shape.max_tasks); i < n; ++i) {
    TaskDescription t;
    t.id = "t" + std::to_string(i);
    t.name = "task " + std::to_string(i);
    t.required_stream = pick_kinds(uniform(1, shape.max_required), nullptr);
    t.concept_bindings = {{"goal", "g" + std::to_string(i)}};
    tasks.push_back(std::move(t));
  }
  std::vector<Question> questions{{"q-goal", "Goal?", "goal"}};
  return KnowledgeBase(standard_header(), std::move(sensors), std::move(dpcs), std::move(tasks),
                       std::move(questions));
}

// ---------------------------------------------------------------------------
// Random QA KBs

inline KnowledgeBase random_qa_kb(std::mt19937_64& rng, int max_tasks = 50, int max_concepts = 10) {
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int n_concepts = uniform(1, max_concepts);
  std::vector<Question> questions;
  for (int c = 0; c < n_concepts; ++c)
    questions.push_back({"q" + std::to_string(c), "Question " + std::to_string(c), "c" + std::to_string(c)});
  std::vector<TaskDescription> tasks;
  for (int i = 0, n = uniform(1, max_tasks); i < n; ++i) {
    TaskDescription t;
    t.id = "t" + std::to_string(i);
    t.name = "task " + std::to_string(i);
    t.required_stream = {real_kind("x")};
    for (int c = 0; c < n_concepts; ++c)
      if (std::bernoulli_distribution(0.6)(rng))
        t.concept_bindings.push_back({"c" + std::to_string(c), "v" + std::to_string(uniform(0, 3))});
    tasks.push_back(std::move(t));
  }
  return KnowledgeBase(standard_header(), {}, {}, std::move(tasks), std::move(questions));
}

// ---------------------------------------------------------------------------
// Oracles. Deliberately naive: linear scans, no indexes, no shared code with
// the engine beyond data types and canonical hashing.

inline std::vector<std::string> oracle_matching_tasks(const KnowledgeBase& kb, const ConstraintSet& constraints) {
  std::vector<std::string> out;
  for (const auto& t : kb.tasks()) {
    bool ok = true;
    for (const auto& a : constraints) {
      std::string concept_name;
      for (const auto& q : kb.questions())
        if (q.id == a.question_id) concept_name = q.concept_name;
      bool bound = false;
      for (const auto& b : t.concept_bindings)
        if (b.concept_name == concept_name && b.value == a.value) bound = true;
      ok = ok && bound;
    }
    if (ok) out.push_back(t.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> oracle_answers(const KnowledgeBase& kb, const ConstraintSet& constraints,
                                               const std::string& question_id) {
  std::string concept_name;
  for (const auto& q : kb.questions())
    if (q.id == question_id) concept_name = q.concept_name;
  auto matching = oracle_matching_tasks(kb, constraints);
  std::set<std::string> values;
  for (const auto& t : kb.tasks()) {
    if (!std::binary_search(matching.begin(), matching.end(), t.id)) continue;
    for (const auto& b : t.concept_bindings)
      if (b.concept_name == concept_name) values.insert(b.value);
  }
  return {values.begin(), values.end()};
}

// Question ids with at least one offered answer and not yet answered.
inline std::vector<std::string> oracle_questions(const KnowledgeBase& kb, const ConstraintSet& constraints) {
  std::vector<std::string> out;
  for (const auto& q : kb.questions()) {
    bool done = false;
    for (const auto& a : constraints) done = done || a.question_id == q.id;
    if (!done && !oracle_answers(kb, constraints, q.id).empty()) out.push_back(q.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct OracleContext {
  std::map<DataItemKind, int> tiers;
  std::map<DataItemKind, std::pair<std::string, std::size_t>> derivation;  // dpc id, signature
};

// Repeated full scans until nothing changes; round r adds exactly the kinds
// whose inputs were all available after round r-1.
inline OracleContext oracle_discover(const KnowledgeBase& kb) {
  OracleContext out;
  for (const auto& s : kb.sensors())
    if (s.active)
      for (const auto& k : s.outputs) out.tiers.emplace(k, 0);
  for (int round = 1;; ++round) {
    std::map<DataItemKind, std::pair<std::string, std::size_t>> added;
    for (const auto& d : kb.dpcs())
      for (std::size_t s = 0; s < d.signatures.size(); ++s) {
        const auto& sig = d.signatures[s];
        if (out.tiers.contains(sig.output)) continue;
        bool ready = std::all_of(sig.inputs.begin(), sig.inputs.end(),
                                 [&](const DataItemKind& k) { return out.tiers.contains(k); });
        if (!ready) continue;
        auto candidate = std::make_pair(d.id, s);
        auto it = added.find(sig.output);
        if (it == added.end() || candidate < it->second) added[sig.output] = candidate;
      }
    if (added.empty()) break;
    for (const auto& [k, via] : added) {
      out.tiers.emplace(k, round);
      out.derivation.emplace(k, via);
    }
  }
  return out;
}

// Every acyclic assignment kind -> producer over the closure of the required
// stream, found by enumerating all total assignments over every kind.
// Returns the sorted set of canonical hashes, or nullopt if the space is too
// large to enumerate.
inline std::optional<std::vector<std::string>> oracle_compose(const KnowledgeBase& kb, const TaskDescription& task,
                                                              int max_depth, double max_space = 3e6) {
  struct Option {
    bool sensor;
    std::string id;
    std::size_t signature;
    KindList inputs;
  };
  std::set<DataItemKind> universe;
  for (const auto& s : kb.sensors()) universe.insert(s.outputs.begin(), s.outputs.end());
  for (const auto& d : kb.dpcs())
    for (const auto& sig : d.signatures) {
      universe.insert(sig.inputs.begin(), sig.inputs.end());
      universe.insert(sig.output);
    }
  universe.insert(task.required_stream.begin(), task.required_stream.end());
  std::vector<DataItemKind> kinds(universe.begin(), universe.end());

  std::vector<std::vector<Option>> options(kinds.size());
  double space = 1.0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    options[i].push_back({false, "", 0, {}});  // unassigned
    for (const auto& s : kb.sensors())
      if (s.active && std::find(s.outputs.begin(), s.outputs.end(), kinds[i]) != s.outputs.end())
        options[i].push_back({true, s.id, 0, {}});
    for (const auto& d : kb.dpcs())
      for (std::size_t s = 0; s < d.signatures.size(); ++s)
        if (d.signatures[s].output == kinds[i]) options[i].push_back({false, d.id, s, d.signatures[s].inputs});
    space *= static_cast<double>(options[i].size());
  }
  if (space > max_space) return std::nullopt;

  auto index_of = [&](const DataItemKind& k) {
    return static_cast<std::size_t>(std::find(kinds.begin(), kinds.end(), k) - kinds.begin());
  };
  std::set<std::string> found;
  std::vector<std::size_t> pick(kinds.size(), 0);
  while (true) {
    // Closure of the required stream under the current picks.
    std::vector<bool> needed(kinds.size(), false);
    std::vector<std::size_t> stack;
    bool complete = true;
    for (const auto& k : task.required_stream) stack.push_back(index_of(k));
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      if (needed[v]) continue;
      needed[v] = true;
      if (pick[v] == 0) {
        complete = false;
        break;
      }
      for (const auto& in : options[v][pick[v]].inputs) stack.push_back(index_of(in));
    }
    bool canonical = complete;
    for (std::size_t v = 0; v < kinds.size() && canonical; ++v)
      if (!needed[v] && pick[v] != 0) canonical = false;

    if (canonical) {
      // Depth by recursion with a cycle guard.
      std::vector<int> state(kinds.size(), 0), depth(kinds.size(), 0);
      bool cyclic = false;
      std::function<int(std::size_t)> visit = [&](std::size_t v) -> int {
        if (state[v] == 2) return depth[v];
        if (state[v] == 1) {
          cyclic = true;
          return 0;
        }
        state[v] = 1;
        const auto& o = options[v][pick[v]];
        int best = 0;
        for (const auto& in : o.inputs) best = std::max(best, visit(index_of(in)));
        state[v] = 2;
        return depth[v] = o.sensor ? 0 : best + 1;
      };
      int deepest = 0;
      for (std::size_t v = 0; v < kinds.size(); ++v)
        if (needed[v]) deepest = std::max(deepest, visit(v));
      if (!cyclic && deepest <= max_depth) {
        Solution s;
        s.task_id = task.id;
        std::map<std::size_t, std::size_t> node;
        for (std::size_t v = 0; v < kinds.size(); ++v)
          if (needed[v]) {
            node[v] = s.nodes.size();
            const auto& o = options[v][pick[v]];
            s.nodes.push_back(o.sensor ? SolutionNode::sensor(o.id, kinds[v])
                                       : SolutionNode::dpc(o.id, o.signature, kinds[v]));
          }
        for (std::size_t v = 0; v < kinds.size(); ++v)
          if (needed[v])
            for (const auto& in : options[v][pick[v]].inputs) s.edges.push_back({node[index_of(in)], node[v], in});
        for (const auto& k : task.required_stream) s.sinks.emplace_back(k, node[index_of(k)]);
        found.insert(canonical_hash(s));
      }
    }

    std::size_t pos = 0;
    while (pos < kinds.size() && ++pick[pos] == options[pos].size()) pick[pos++] = 0;
    if (pos == kinds.size()) break;
  }
  return std::vector<std::string>(found.begin(), found.end());
}

inline std::vector<std::string> hashes_of(const std::vector<Solution>& solutions) {
  std::vector<std::string> out;
  for (const auto& s : solutions) out.push_back(canonical_hash(s));
  return out;
}

// KB plus one active sensor per kind in `kinds`.
inline KnowledgeBase with_synthetic_sensors(const KnowledgeBase& kb, const KindList& kinds) {
  auto sensors = kb.sensors();
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    SensorDescription s;
    s.id = "zz-synthetic-" + std::to_string(i);
    s.name = "synthetic";
    s.outputs = {kinds[i]};
    sensors.push_back(std::move(s));
  }
  return KnowledgeBase(kb.header(), std::move(sensors), kb.dpcs(), kb.tasks(), kb.questions());
}

}  // namespace cascom::testing
