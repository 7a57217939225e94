#pragma once

// KB file format: one JSON document, documented in docs/kb-format.md.
// Saving is canonical: entities sorted by id, object keys sorted, two-space
// indentation, trailing newline.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cascom/error.hpp"
#include "cascom/hash.hpp"
#include "cascom/kb.hpp"

namespace cascom {

using Json = nlohmann::json;

namespace detail {

// Walks a JSON document while tracking the path, so type errors point at the
// offending field ("sensors[2].outputs[0]").
class JsonCursor {
 public:
  JsonCursor(const Json& node, std::string path) : node_(node), path_(std::move(path)) {}

  const Json& node() const { return node_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(ErrorCode::parse_error, "at " + (path_.empty() ? "<root>" : path_) + ": " + message);
  }

  JsonCursor at(const std::string& key) const {
    if (!node_.is_object()) fail("expected object");
    auto it = node_.find(key);
    if (it == node_.end()) JsonCursor(node_, join(key)).fail("missing field");
    return {*it, join(key)};
  }

  bool has(const std::string& key) const {
    return node_.is_object() && node_.contains(key);
  }

  JsonCursor operator[](std::size_t i) const {
    return {node_[i], path_ + "[" + std::to_string(i) + "]"};
  }

  std::size_t array_size() const {
    if (!node_.is_array()) fail("expected array");
    return node_.size();
  }

  const Json::object_t& object() const {
    if (!node_.is_object()) fail("expected object");
    return node_.get_ref<const Json::object_t&>();
  }

  std::string string() const {
    if (!node_.is_string()) fail("expected string");
    return node_.get<std::string>();
  }

  double number() const {
    if (!node_.is_number()) fail("expected number");
    return node_.get<double>();
  }

  bool boolean() const {
    if (!node_.is_boolean()) fail("expected boolean");
    return node_.get<bool>();
  }

  JsonCursor child(const std::string& key, const Json& value) const {
    return {value, join(key)};
  }

 private:
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json& node_;
  std::string path_;
};

inline std::string optional_string(const JsonCursor& c, const std::string& key,
                                   std::string fallback = {}) {
  return c.has(key) ? c.at(key).string() : fallback;
}

using SharedKinds = std::map<std::string, DataItemKind>;

inline DataItemKind parse_inline_kind(const JsonCursor& c) {
  DataItemKind kind;
  kind.label = c.at("label").string();
  const auto type_cursor = c.at("type");
  auto type = parse_value_type(type_cursor.string());
  if (!type) type_cursor.fail("unknown value type '" + type_cursor.string() + "'");
  kind.type = *type;
  kind.unit = c.has("unit") ? c.at("unit").string() : std::string(kNoUnit);
  return kind;
}

inline DataItemKind parse_kind_ref(const JsonCursor& c, const SharedKinds& shared) {
  if (c.node().is_string()) {
    auto label = c.string();
    auto it = shared.find(label);
    if (it == shared.end()) c.fail("unknown kind label '" + label + "'");
    return it->second;
  }
  if (c.node().is_object()) return parse_inline_kind(c);
  c.fail("expected kind label or kind object");
}

inline KindList parse_kind_array(const JsonCursor& c, const SharedKinds& shared) {
  KindList out;
  for (std::size_t i = 0; i < c.array_size(); ++i) out.push_back(parse_kind_ref(c[i], shared));
  return out;
}

inline ContextValues parse_context(const JsonCursor& c) {
  ContextValues out;
  for (const auto& [name, value] : c.object()) out[name] = c.child(name, value).number();
  return out;
}

inline SensorDescription parse_sensor(const JsonCursor& c, const SharedKinds& shared) {
  SensorDescription s;
  s.id = c.at("id").string();
  s.name = optional_string(c, "name", s.id);
  s.outputs = parse_kind_array(c.at("outputs"), shared);
  s.active = c.has("active") ? c.at("active").boolean() : true;
  if (c.has("context")) s.context = parse_context(c.at("context"));
  if (c.has("domains")) {
    auto d = c.at("domains");
    for (std::size_t i = 0; i < d.array_size(); ++i) s.domains.push_back(d[i].string());
    std::sort(s.domains.begin(), s.domains.end());
  }
  return s;
}

inline DpcDescription parse_dpc(const JsonCursor& c, const SharedKinds& shared) {
  DpcDescription d;
  d.id = c.at("id").string();
  d.name = optional_string(c, "name", d.id);
  auto sigs = c.at("signatures");
  for (std::size_t i = 0; i < sigs.array_size(); ++i) {
    Signature sig;
    sig.inputs = parse_kind_array(sigs[i].at("inputs"), shared);
    sig.output = parse_kind_ref(sigs[i].at("output"), shared);
    d.signatures.push_back(std::move(sig));
  }
  if (c.has("context")) d.context = parse_context(c.at("context"));
  return d;
}

inline TaskDescription parse_task(const JsonCursor& c, const SharedKinds& shared) {
  TaskDescription t;
  t.id = c.at("id").string();
  t.name = optional_string(c, "name", t.id);
  t.required_stream = parse_kind_array(c.at("required_stream"), shared);
  if (c.has("concepts"))
    for (const auto& [concept_name, value] : c.at("concepts").object())
      t.concept_bindings.push_back({concept_name, c.at("concepts").child(concept_name, value).string()});
  return t;
}

inline Question parse_question(const JsonCursor& c) {
  Question q;
  q.id = c.at("id").string();
  q.text = c.at("text").string();
  q.concept_name = c.at("concept").string();
  return q;
}

inline Json kind_json(const DataItemKind& kind) {
  return Json{{"label", kind.label},
              {"type", std::string(to_string(kind.type))},
              {"unit", kind.unit}};
}

inline std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace detail

// Parses a JSON text with line/column error positions.
inline Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::parse_error,
                "malformed JSON at " + detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1) +
                    ": " + e.what());
  }
}

inline SensorDescription sensor_from_json(const Json& j, const detail::SharedKinds& shared = {}) {
  return detail::parse_sensor({j, ""}, shared);
}
inline DpcDescription dpc_from_json(const Json& j, const detail::SharedKinds& shared = {}) {
  return detail::parse_dpc({j, ""}, shared);
}
inline TaskDescription task_from_json(const Json& j, const detail::SharedKinds& shared = {}) {
  return detail::parse_task({j, ""}, shared);
}
inline Question question_from_json(const Json& j) { return detail::parse_question({j, ""}); }

// Shared kinds of `kb` addressable by label (entities may reference them).
inline detail::SharedKinds shared_kinds(const KnowledgeBase& kb) {
  detail::SharedKinds out;
  for (const auto& k : kb.kinds()) out.emplace(k.label, k);
  return out;
}

// Parses an entity of the given type ("sensor", "dpc", "task", "question").
// Kinds may be inline objects or labels of kinds already known to `kb`.
inline Entity entity_from_json(const KnowledgeBase& kb, std::string_view type, const Json& j) {
  auto shared = shared_kinds(kb);
  if (type == "sensor") return sensor_from_json(j, shared);
  if (type == "dpc") return dpc_from_json(j, shared);
  if (type == "task") return task_from_json(j, shared);
  if (type == "question") return question_from_json(j);
  throw Error(ErrorCode::invalid_argument, "unknown entity type '" + std::string(type) + "'");
}

// Builds a KB from a parsed document without validating it.
inline KnowledgeBase kb_from_json(const Json& doc) {
  detail::JsonCursor root(doc, "");
  root.object();

  KbHeader header;
  header.version = root.has("version") ? root.at("version").string() : "";
  if (root.has("units")) {
    auto units = root.at("units");
    for (std::size_t i = 0; i < units.array_size(); ++i) header.units.push_back(units[i].string());
  }
  if (root.has("attributes")) {
    auto attrs = root.at("attributes");
    for (const auto& [name, value] : attrs.object()) {
      auto c = attrs.child(name, value);
      AttributeSpec spec;
      std::string polarity;
      if (value.is_string()) {
        polarity = c.string();
      } else {
        polarity = c.at("polarity").string();
        if (c.has("default")) spec.default_value = c.at("default").number();
      }
      if (polarity == "benefit") spec.polarity = Polarity::benefit;
      else if (polarity == "cost") spec.polarity = Polarity::cost;
      else c.fail("polarity must be 'benefit' or 'cost'");
      header.attributes.emplace(name, spec);
    }
  }

  detail::SharedKinds shared;
  if (root.has("kinds")) {
    auto kinds = root.at("kinds");
    for (std::size_t i = 0; i < kinds.array_size(); ++i) {
      auto kind = detail::parse_inline_kind(kinds[i]);
      if (!shared.emplace(kind.label, kind).second)
        kinds[i].fail("kind label '" + kind.label + "' declared twice");
    }
  }

  auto collect = [&](const char* key, auto parse) {
    std::vector<decltype(parse(root))> out;
    if (!root.has(key)) return out;
    auto arr = root.at(key);
    for (std::size_t i = 0; i < arr.array_size(); ++i) out.push_back(parse(arr[i]));
    return out;
  };
  auto sensors = collect("sensors", [&](const detail::JsonCursor& c) { return detail::parse_sensor(c, shared); });
  auto dpcs = collect("dpcs", [&](const detail::JsonCursor& c) { return detail::parse_dpc(c, shared); });
  auto tasks = collect("tasks", [&](const detail::JsonCursor& c) { return detail::parse_task(c, shared); });
  auto questions = collect("questions", [](const detail::JsonCursor& c) { return detail::parse_question(c); });

  return KnowledgeBase(std::move(header), std::move(sensors), std::move(dpcs),
                       std::move(tasks), std::move(questions));
}

// Parses and validates; throws ValidationError listing every violation.
inline KnowledgeBase parse_kb(std::string_view text) {
  auto kb = kb_from_json(parse_json_text(text));
  auto report = validate_kb(kb);
  if (!report.empty()) throw ValidationError(std::move(report));
  return kb;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::io_error, "write failed for '" + path.string() + "'");
}

inline KnowledgeBase load_kb(const std::filesystem::path& path) {
  return parse_kb(read_file(path));
}

namespace detail {

inline Json kind_ref_json(const DataItemKind& kind, const SharedKinds& shared) {
  auto it = shared.find(kind.label);
  if (it != shared.end() && it->second == kind) return kind.label;
  return kind_json(kind);
}

inline Json kind_refs_json(const KindList& kinds, const SharedKinds& shared) {
  Json out = Json::array();
  for (const auto& k : kinds) out.push_back(kind_ref_json(k, shared));
  return out;
}

}  // namespace detail

inline Json sensor_json(const SensorDescription& s, const detail::SharedKinds& shared = {}) {
  return Json{{"id", s.id},
              {"name", s.name},
              {"outputs", detail::kind_refs_json(s.outputs, shared)},
              {"active", s.active},
              {"context", s.context},
              {"domains", s.domains}};
}

inline Json dpc_json(const DpcDescription& d, const detail::SharedKinds& shared = {}) {
  Json sigs = Json::array();
  for (const auto& sig : d.signatures)
    sigs.push_back({{"inputs", detail::kind_refs_json(sig.inputs, shared)},
                    {"output", detail::kind_ref_json(sig.output, shared)}});
  return Json{{"id", d.id}, {"name", d.name}, {"signatures", sigs}, {"context", d.context}};
}

inline Json task_json(const TaskDescription& t, const detail::SharedKinds& shared = {}) {
  Json concepts = Json::object();
  for (const auto& b : t.concept_bindings) concepts[b.concept_name] = b.value;
  return Json{{"id", t.id},
              {"name", t.name},
              {"required_stream", detail::kind_refs_json(t.required_stream, shared)},
              {"concepts", concepts}};
}

inline Json question_json(const Question& q) {
  return Json{{"id", q.id}, {"text", q.text}, {"concept", q.concept_name}};
}

// Canonical document: shared kinds table, entities referencing kinds by
// label. Labels used with conflicting definitions fall back to inline kinds.
inline Json kb_to_json(const KnowledgeBase& kb) {
  detail::SharedKinds shared;
  std::set<std::string> ambiguous;
  for (const auto& k : kb.kinds())
    if (!shared.emplace(k.label, k).second) ambiguous.insert(k.label);
  for (const auto& label : ambiguous) shared.erase(label);

  Json attrs = Json::object();
  for (const auto& [name, spec] : kb.header().attributes) {
    if (spec.default_value == 0.0)
      attrs[name] = std::string(to_string(spec.polarity));
    else
      attrs[name] = {{"polarity", std::string(to_string(spec.polarity))},
                     {"default", spec.default_value}};
  }
  Json kinds = Json::array();
  for (const auto& [label, k] : shared) kinds.push_back(detail::kind_json(k));

  Json doc{{"version", kb.header().version}, {"attributes", attrs}, {"kinds", kinds}};
  if (!kb.header().units.empty()) doc["units"] = kb.header().units;
  doc["sensors"] = Json::array();
  for (const auto& s : kb.sensors()) doc["sensors"].push_back(sensor_json(s, shared));
  doc["dpcs"] = Json::array();
  for (const auto& d : kb.dpcs()) doc["dpcs"].push_back(dpc_json(d, shared));
  doc["tasks"] = Json::array();
  for (const auto& t : kb.tasks()) doc["tasks"].push_back(task_json(t, shared));
  doc["questions"] = Json::array();
  for (const auto& q : kb.questions()) doc["questions"].push_back(question_json(q));
  return doc;
}

inline std::string kb_to_text(const KnowledgeBase& kb) { return kb_to_json(kb).dump(2) + "\n"; }

inline void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  write_file(path, kb_to_text(kb));
}

namespace detail {
struct KbVersion {
  std::string hash;
};
}  // namespace detail

// Content hash of the canonical serialization; embedded in plans for drift
// detection.
inline const std::string& kb_version_hash(const KnowledgeBase& kb) {
  return kb.memo<detail::KbVersion>([&] {
             return detail::KbVersion{fnv1a_hex(kb_to_json(kb).dump())};
           })->hash;
}

}  // namespace cascom
