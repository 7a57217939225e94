#pragma once

// Knowledge-base schema: resource, task and question descriptions plus the
// derived lookup indexes the engine queries.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <typeindex>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "cascom/error.hpp"
#include "cascom/kind.hpp"

namespace cascom {

enum class Polarity { benefit, cost };

inline std::string_view to_string(Polarity polarity) {
  return polarity == Polarity::benefit ? "benefit" : "cost";
}

struct AttributeSpec {
  Polarity polarity = Polarity::cost;
  // Used when a resource does not declare the attribute.
  double default_value = 0.0;

  bool operator==(const AttributeSpec&) const = default;
};

inline constexpr std::string_view kFormatVersion = "1";

struct KbHeader {
  std::string version = std::string(kFormatVersion);
  std::map<std::string, AttributeSpec> attributes;
  // Unit tokens beyond kStarterUnits.
  std::vector<std::string> units;

  bool operator==(const KbHeader&) const = default;
};

using ContextValues = std::map<std::string, double>;

struct SensorDescription {
  std::string id;
  std::string name;
  KindList outputs;
  bool active = true;
  ContextValues context;
  std::vector<std::string> domains;

  bool operator==(const SensorDescription&) const = default;
};

struct Signature {
  KindList inputs;  // sorted, distinct
  DataItemKind output;

  auto operator<=>(const Signature&) const = default;
  bool operator==(const Signature&) const = default;
};

struct DpcDescription {
  std::string id;
  std::string name;
  std::vector<Signature> signatures;
  ContextValues context;

  bool operator==(const DpcDescription&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  std::string concept_name;

  bool operator==(const Question&) const = default;
};

struct ConceptBinding {
  std::string concept_name;
  std::string value;

  auto operator<=>(const ConceptBinding&) const = default;
  bool operator==(const ConceptBinding&) const = default;
};

struct TaskDescription {
  std::string id;
  std::string name;
  KindList required_stream;  // ordered as the consumer expects it
  std::vector<ConceptBinding> concept_bindings;

  bool operator==(const TaskDescription&) const = default;

  const std::string* binding(const std::string& concept_name) const {
    for (const auto& b : concept_bindings)
      if (b.concept_name == concept_name) return &b.value;
    return nullptr;
  }
};

using Entity =
    std::variant<SensorDescription, DpcDescription, TaskDescription, Question>;

// Position of one DPC signature inside a KnowledgeBase.
struct SignatureRef {
  std::size_t dpc = 0;
  std::size_t signature = 0;

  auto operator<=>(const SignatureRef&) const = default;
  bool operator==(const SignatureRef&) const = default;
};

struct Violation {
  std::string entity;  // e.g. "sensor s-at", "dpc c-1 signature 0"
  std::string field;
  std::string message;

  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

inline std::string describe(const Violation& v) {
  return v.entity + ": " + v.field + ": " + v.message;
}

class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report)
      : Error(ErrorCode::kb_validation_failed, summarize(report)),
        report_(std::move(report)) {}

  const ValidationReport& report() const noexcept { return report_; }

 private:
  static std::string summarize(const ValidationReport& report) {
    std::string out = std::to_string(report.size()) + " violation(s)";
    for (const auto& v : report) out += "\n  " + describe(v);
    return out;
  }

  ValidationReport report_;
};

// Immutable knowledge base. Copies share storage; "mutations" build a new
// value. Each value carries a memo table for derived results (context
// discovery, version hash) that dies with the value.
class KnowledgeBase {
 public:
  KnowledgeBase() : KnowledgeBase(KbHeader{}, {}, {}, {}, {}) {}

  KnowledgeBase(KbHeader header, std::vector<SensorDescription> sensors,
                std::vector<DpcDescription> dpcs,
                std::vector<TaskDescription> tasks,
                std::vector<Question> questions)
      : data_(std::make_shared<Data>()) {
    auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
    std::stable_sort(sensors.begin(), sensors.end(), by_id);
    std::stable_sort(dpcs.begin(), dpcs.end(), by_id);
    std::stable_sort(tasks.begin(), tasks.end(), by_id);
    std::stable_sort(questions.begin(), questions.end(), by_id);
    for (auto& d : dpcs)
      for (auto& sig : d.signatures) sort_unique(sig.inputs);
    for (auto& s : sensors) sort_unique(s.outputs);
    for (auto& t : tasks)
      std::sort(t.concept_bindings.begin(), t.concept_bindings.end());
    std::sort(header.units.begin(), header.units.end());
    header.units.erase(std::unique(header.units.begin(), header.units.end()),
                       header.units.end());

    data_->header = std::move(header);
    data_->sensors = std::move(sensors);
    data_->dpcs = std::move(dpcs);
    data_->tasks = std::move(tasks);
    data_->questions = std::move(questions);
    data_->build_indexes();
  }

  const KbHeader& header() const { return data_->header; }
  const std::vector<SensorDescription>& sensors() const { return data_->sensors; }
  const std::vector<DpcDescription>& dpcs() const { return data_->dpcs; }
  const std::vector<TaskDescription>& tasks() const { return data_->tasks; }
  const std::vector<Question>& questions() const { return data_->questions; }

  const SensorDescription* find_sensor(std::string_view id) const {
    return find_by_id(data_->sensors, id);
  }
  const DpcDescription* find_dpc(std::string_view id) const {
    return find_by_id(data_->dpcs, id);
  }
  const TaskDescription* find_task(std::string_view id) const {
    return find_by_id(data_->tasks, id);
  }
  const Question* find_question(std::string_view id) const {
    return find_by_id(data_->questions, id);
  }

  const Question* question_for_concept(const std::string& concept_name) const {
    auto it = data_->question_by_concept.find(concept_name);
    return it == data_->question_by_concept.end() ? nullptr
                                                  : &data_->questions[it->second];
  }

  const Signature& signature(SignatureRef ref) const {
    return data_->dpcs[ref.dpc].signatures[ref.signature];
  }

  // Sensors (active or not) listing `kind` among their outputs, by id.
  std::span<const std::size_t> sensors_producing(const DataItemKind& kind) const {
    return lookup(data_->sensors_by_kind, kind);
  }

  // Signatures whose output is `kind`, ordered by (dpc id, signature index).
  std::span<const SignatureRef> signatures_producing(const DataItemKind& kind) const {
    return lookup(data_->signatures_by_kind, kind);
  }

  // Tasks binding `concept` to `value`, ordered by task id.
  std::span<const std::size_t> tasks_binding(const std::string& concept_name,
                                             const std::string& value) const {
    auto it = data_->tasks_by_binding.find(ConceptBinding{concept_name, value});
    if (it == data_->tasks_by_binding.end()) return {};
    return it->second;
  }

  // Every kind referenced anywhere in the KB, sorted.
  const KindList& kinds() const { return data_->kinds; }

  bool knows_unit(std::string_view unit) const {
    if (std::find(kStarterUnits.begin(), kStarterUnits.end(), unit) !=
        kStarterUnits.end())
      return true;
    return std::binary_search(data_->header.units.begin(),
                              data_->header.units.end(), unit);
  }

  std::size_t description_count() const {
    return data_->sensors.size() + data_->dpcs.size() + data_->tasks.size() +
           data_->questions.size();
  }

  // Computes `T` once per KB value; concurrent callers wait for the single
  // computation.
  template <class T, class Compute>
  std::shared_ptr<const T> memo(Compute&& compute) const {
    std::lock_guard lock(data_->memo_mutex);
    auto& slot = data_->memo[std::type_index(typeid(T))];
    if (!slot) slot = std::make_shared<const T>(compute());
    return std::static_pointer_cast<const T>(slot);
  }

  bool same_snapshot(const KnowledgeBase& other) const {
    return data_ == other.data_;
  }

  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    if (a.data_ == b.data_) return true;
    return a.header() == b.header() && a.sensors() == b.sensors() &&
           a.dpcs() == b.dpcs() && a.tasks() == b.tasks() &&
           a.questions() == b.questions();
  }

 private:
  struct Data {
    KbHeader header;
    std::vector<SensorDescription> sensors;
    std::vector<DpcDescription> dpcs;
    std::vector<TaskDescription> tasks;
    std::vector<Question> questions;

    std::unordered_map<DataItemKind, std::vector<std::size_t>, DataItemKindHash>
        sensors_by_kind;
    std::unordered_map<DataItemKind, std::vector<SignatureRef>, DataItemKindHash>
        signatures_by_kind;
    std::map<ConceptBinding, std::vector<std::size_t>> tasks_by_binding;
    std::unordered_map<std::string, std::size_t> question_by_concept;
    KindList kinds;

    std::recursive_mutex memo_mutex;
    std::map<std::type_index, std::shared_ptr<const void>> memo;

    void build_indexes() {
      for (std::size_t i = 0; i < sensors.size(); ++i)
        for (const auto& k : sensors[i].outputs) {
          sensors_by_kind[k].push_back(i);
          kinds.push_back(k);
        }
      for (std::size_t d = 0; d < dpcs.size(); ++d)
        for (std::size_t s = 0; s < dpcs[d].signatures.size(); ++s) {
          const auto& sig = dpcs[d].signatures[s];
          signatures_by_kind[sig.output].push_back({d, s});
          kinds.push_back(sig.output);
          kinds.insert(kinds.end(), sig.inputs.begin(), sig.inputs.end());
        }
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (const auto& b : tasks[t].concept_bindings) {
          auto& ids = tasks_by_binding[b];
          if (ids.empty() || ids.back() != t) ids.push_back(t);
        }
        kinds.insert(kinds.end(), tasks[t].required_stream.begin(),
                     tasks[t].required_stream.end());
      }
      for (std::size_t q = 0; q < questions.size(); ++q)
        question_by_concept.emplace(questions[q].concept_name, q);
      sort_unique(kinds);
    }
  };

  template <class T>
  static const T* find_by_id(const std::vector<T>& items, std::string_view id) {
    auto it = std::lower_bound(
        items.begin(), items.end(), id,
        [](const T& item, std::string_view key) { return item.id < key; });
    return it != items.end() && it->id == id ? &*it : nullptr;
  }

  template <class Map>
  static std::span<const typename Map::mapped_type::value_type> lookup(
      const Map& index, const DataItemKind& kind) {
    auto it = index.find(kind);
    if (it == index.end()) return {};
    return it->second;
  }

  std::shared_ptr<Data> data_;
};

using KbSnapshot = std::shared_ptr<const KnowledgeBase>;

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void check_kind(const KnowledgeBase& kb, const DataItemKind& kind,
                       const std::string& entity, const std::string& field,
                       ValidationReport& out) {
  if (kind.label.empty())
    out.push_back({entity, field, "empty semantic label"});
  if (!kb.knows_unit(kind.unit))
    out.push_back({entity, field,
                   "kind " + kind.label + " uses undeclared unit '" + kind.unit + "'"});
  if ((kind.type == ValueType::boolean || kind.type == ValueType::text) &&
      kind.unit != kNoUnit)
    out.push_back({entity, field,
                   "kind " + kind.label + " of type " +
                       std::string(to_string(kind.type)) + " must use unit 'none'"});
}

inline void check_context(const KnowledgeBase& kb, const ContextValues& context,
                          const std::string& entity, ValidationReport& out) {
  for (const auto& [name, value] : context) {
    if (!kb.header().attributes.contains(name))
      out.push_back({entity, "context." + name, "attribute not in registry"});
    if (!std::isfinite(value) || value < 0.0)
      out.push_back({entity, "context." + name,
                     "value must be finite and non-negative"});
  }
}

template <class T>
void check_unique_ids(const std::vector<T>& items, const std::string& what,
                      ValidationReport& out) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id.empty()) out.push_back({what + " #" + std::to_string(i), "id", "empty id"});
    if (i > 0 && items[i].id == items[i - 1].id)
      out.push_back({what + " " + items[i].id, "id", "duplicate id"});
  }
}

inline void check_sensor(const KnowledgeBase& kb, const SensorDescription& s,
                         ValidationReport& out) {
  const std::string entity = "sensor " + s.id;
  if (s.outputs.empty()) out.push_back({entity, "outputs", "no outputs"});
  for (std::size_t i = 0; i < s.outputs.size(); ++i) {
    check_kind(kb, s.outputs[i], entity, "outputs[" + std::to_string(i) + "]", out);
    if (i > 0 && s.outputs[i] == s.outputs[i - 1])
      out.push_back({entity, "outputs", "duplicate output " + s.outputs[i].label});
  }
  check_context(kb, s.context, entity, out);
}

inline void check_dpc(const KnowledgeBase& kb, const DpcDescription& d,
                      ValidationReport& out) {
  const std::string entity = "dpc " + d.id;
  if (d.signatures.empty()) out.push_back({entity, "signatures", "no signatures"});
  for (std::size_t s = 0; s < d.signatures.size(); ++s) {
    const auto& sig = d.signatures[s];
    const std::string sig_entity = entity + " signature " + std::to_string(s);
    if (sig.inputs.empty()) out.push_back({sig_entity, "inputs", "no inputs"});
    for (std::size_t i = 0; i < sig.inputs.size(); ++i) {
      check_kind(kb, sig.inputs[i], sig_entity, "inputs[" + std::to_string(i) + "]", out);
      if (i > 0 && sig.inputs[i] == sig.inputs[i - 1])
        out.push_back({sig_entity, "inputs", "duplicate input " + sig.inputs[i].label});
    }
    check_kind(kb, sig.output, sig_entity, "output", out);
    if (contains(sig.inputs, sig.output))
      out.push_back({sig_entity, "output", "output kind is also an input"});
    for (std::size_t o = 0; o < s; ++o)
      if (d.signatures[o] == sig)
        out.push_back({sig_entity, "signatures",
                       "duplicates signature " + std::to_string(o)});
  }
  check_context(kb, d.context, entity, out);
}

inline void check_task(const KnowledgeBase& kb, const TaskDescription& t,
                       ValidationReport& out) {
  const std::string entity = "task " + t.id;
  if (t.required_stream.empty())
    out.push_back({entity, "required_stream", "empty required stream"});
  for (std::size_t i = 0; i < t.required_stream.size(); ++i) {
    check_kind(kb, t.required_stream[i], entity,
               "required_stream[" + std::to_string(i) + "]", out);
    for (std::size_t j = 0; j < i; ++j)
      if (t.required_stream[j] == t.required_stream[i])
        out.push_back({entity, "required_stream",
                       "duplicate kind " + t.required_stream[i].label});
  }
  for (std::size_t i = 0; i < t.concept_bindings.size(); ++i) {
    const auto& b = t.concept_bindings[i];
    if (b.concept_name.empty() || b.value.empty())
      out.push_back({entity, "concepts", "empty concept or value"});
    if (!kb.question_for_concept(b.concept_name))
      out.push_back({entity, "concepts." + b.concept_name, "no question for concept"});
    if (i > 0 && t.concept_bindings[i - 1].concept_name == b.concept_name)
      out.push_back({entity, "concepts." + b.concept_name, "concept bound more than once"});
  }
}

inline void check_question(const Question& q, ValidationReport& out) {
  const std::string entity = "question " + q.id;
  if (q.concept_name.empty()) out.push_back({entity, "concept", "empty concept"});
  if (q.text.empty()) out.push_back({entity, "text", "empty text"});
}

}  // namespace detail

// Lists every invariant violation; never throws.
inline ValidationReport validate_kb(const KnowledgeBase& kb) {
  ValidationReport out;
  const auto& header = kb.header();
  if (header.version != kFormatVersion)
    out.push_back({"header", "version", "unsupported format version '" + header.version + "'"});
  for (const auto& [name, spec] : header.attributes) {
    if (name.empty()) out.push_back({"header", "attributes", "empty attribute name"});
    if (!std::isfinite(spec.default_value) || spec.default_value < 0.0)
      out.push_back({"header", "attributes." + name, "default must be finite and non-negative"});
  }

  detail::check_unique_ids(kb.sensors(), "sensor", out);
  detail::check_unique_ids(kb.dpcs(), "dpc", out);
  detail::check_unique_ids(kb.tasks(), "task", out);
  detail::check_unique_ids(kb.questions(), "question", out);
  for (const auto& s : kb.sensors())
    if (kb.find_dpc(s.id))
      out.push_back({"sensor " + s.id, "id", "id also used by a dpc"});

  for (const auto& s : kb.sensors()) detail::check_sensor(kb, s, out);
  for (const auto& d : kb.dpcs()) detail::check_dpc(kb, d, out);
  for (const auto& t : kb.tasks()) detail::check_task(kb, t, out);

  std::map<std::string, std::string> concept_owner;
  for (const auto& q : kb.questions()) {
    detail::check_question(q, out);
    auto [it, fresh] = concept_owner.emplace(q.concept_name, q.id);
    if (!fresh)
      out.push_back({"question " + q.id, "concept",
                     "concept '" + q.concept_name + "' already asked by " + it->second});
  }

  // One kind per semantic label.
  const auto& kinds = kb.kinds();
  for (std::size_t i = 1; i < kinds.size(); ++i)
    if (kinds[i].label == kinds[i - 1].label)
      out.push_back({"kind " + kinds[i].label, "label",
                     "label used with conflicting definitions " +
                         kinds[i - 1].str() + " and " + kinds[i].str()});
  return out;
}

// Registry attributes a sensor or DPC leaves unset; ranking falls back to the
// registry default for these. Not violations.
inline ValidationReport attribute_warnings(const KnowledgeBase& kb) {
  ValidationReport out;
  auto check = [&](const std::string& entity, const ContextValues& context) {
    for (const auto& [name, spec] : kb.header().attributes)
      if (!context.contains(name))
        out.push_back({entity, "context." + name,
                       "not declared; default " + std::to_string(spec.default_value) + " applies"});
  };
  for (const auto& s : kb.sensors()) check("sensor " + s.id, s.context);
  for (const auto& d : kb.dpcs()) check("dpc " + d.id, d.context);
  return out;
}

inline const std::string& entity_id(const Entity& entity) {
  return std::visit([](const auto& e) -> const std::string& { return e.id; }, entity);
}

// Returns a new KB with `entity` inserted. The receiving KB is unchanged.
inline KnowledgeBase add_description(const KnowledgeBase& kb, Entity entity) {
  const std::string& id = entity_id(entity);
  if (id.empty()) throw Error(ErrorCode::invalid_argument, "entity id is empty");

  auto sensors = kb.sensors();
  auto dpcs = kb.dpcs();
  auto tasks = kb.tasks();
  auto questions = kb.questions();

  std::visit(
      [&](auto&& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, SensorDescription> ||
                      std::is_same_v<T, DpcDescription>) {
          if (kb.find_sensor(e.id) || kb.find_dpc(e.id))
            throw Error(ErrorCode::duplicate_id, "resource id '" + e.id + "' already exists");
          if constexpr (std::is_same_v<T, SensorDescription>)
            sensors.push_back(std::move(e));
          else
            dpcs.push_back(std::move(e));
        } else if constexpr (std::is_same_v<T, TaskDescription>) {
          if (kb.find_task(e.id))
            throw Error(ErrorCode::duplicate_id, "task id '" + e.id + "' already exists");
          for (const auto& b : e.concept_bindings)
            if (!kb.question_for_concept(b.concept_name))
              throw Error(ErrorCode::dangling_reference,
                          "task '" + e.id + "' binds concept '" + b.concept_name +
                              "' which has no question");
          tasks.push_back(std::move(e));
        } else {
          if (kb.find_question(e.id))
            throw Error(ErrorCode::duplicate_id, "question id '" + e.id + "' already exists");
          questions.push_back(std::move(e));
        }
      },
      std::move(entity));

  KnowledgeBase next(kb.header(), std::move(sensors), std::move(dpcs),
                     std::move(tasks), std::move(questions));
  // Only violations introduced by the new entity block the insert.
  const auto before = validate_kb(kb);
  ValidationReport introduced;
  for (auto& v : validate_kb(next))
    if (std::find(before.begin(), before.end(), v) == before.end())
      introduced.push_back(std::move(v));
  if (!introduced.empty()) throw ValidationError(std::move(introduced));
  return next;
}

}  // namespace cascom
