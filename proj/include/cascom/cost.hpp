#pragma once

// Multi-attribute ranking of alternative solutions. Raw attribute values are
// aggregated per solution, min-max normalized across the candidate set
// (benefit attributes inverted) and combined with user weights. Lower totals
// rank first.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cascom/composer.hpp"
#include "cascom/error.hpp"
#include "cascom/kb.hpp"

namespace cascom {

using WeightVector = std::map<std::string, double>;
using AttributeValues = std::map<std::string, double>;

struct SolutionScore {
  std::string solution_hash;
  std::size_t node_count = 0;
  AttributeValues raw;
  AttributeValues normalized;  // each in [0, 1]
  double total = 0.0;
};

namespace detail {

inline const ContextValues* resource_context(const KnowledgeBase& kb, const SolutionNode& node) {
  if (node.role == NodeRole::sensor) {
    const auto* s = kb.find_sensor(node.resource);
    return s ? &s->context : nullptr;
  }
  const auto* d = kb.find_dpc(node.resource);
  return d ? &d->context : nullptr;
}

}  // namespace detail

// Cost attributes add up over the distinct resources of the solution (a
// sensor feeding several kinds is paid once); benefit attributes take the
// weakest resource that declares them. Registry defaults fill gaps.
inline AttributeValues aggregate_attributes(const KnowledgeBase& kb, const Solution& solution) {
  std::map<std::string, const ContextValues*> resources;
  for (const auto& node : solution.nodes)
    resources.emplace(node.resource, detail::resource_context(kb, node));

  AttributeValues out;
  for (const auto& [name, spec] : kb.header().attributes) {
    if (spec.polarity == Polarity::cost) {
      double sum = 0.0;
      for (const auto& [id, ctx] : resources) {
        auto it = ctx ? ctx->find(name) : ContextValues::const_iterator{};
        sum += (ctx && it != ctx->end()) ? it->second : spec.default_value;
      }
      out[name] = sum;
    } else {
      bool any = false;
      double weakest = 0.0;
      for (const auto& [id, ctx] : resources) {
        if (!ctx) continue;
        auto it = ctx->find(name);
        if (it == ctx->end()) continue;
        weakest = any ? std::min(weakest, it->second) : it->second;
        any = true;
      }
      out[name] = any ? weakest : spec.default_value;
    }
  }
  return out;
}

inline double aggregate_attribute(const KnowledgeBase& kb, const Solution& solution,
                                  const std::string& attribute) {
  if (!kb.header().attributes.contains(attribute))
    throw Error(ErrorCode::invalid_weights, "attribute '" + attribute + "' is not in the registry");
  return aggregate_attributes(kb, solution).at(attribute);
}

// Checks names against the registry and renormalizes to sum 1. An empty
// vector means equal priority for every registered attribute.
inline WeightVector normalize_weights(const KnowledgeBase& kb, const WeightVector& weights) {
  const auto& registry = kb.header().attributes;
  WeightVector out;
  if (weights.empty()) {
    if (registry.empty()) return out;
    for (const auto& [name, spec] : registry) out[name] = 1.0 / static_cast<double>(registry.size());
    return out;
  }
  double sum = 0.0;
  for (const auto& [name, w] : weights) {
    if (!registry.contains(name))
      throw Error(ErrorCode::invalid_weights, "attribute '" + name + "' is not in the registry");
    if (!std::isfinite(w) || w < 0.0)
      throw Error(ErrorCode::invalid_weights, "weight for '" + name + "' must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::invalid_weights, "at least one weight must be positive");
  for (const auto& [name, w] : weights) out[name] = w / sum;
  return out;
}

struct ScoringRow {
  std::string key;  // solution hash
  std::size_t node_count = 0;
  AttributeValues raw;
};

// Min-max scoring over precomputed raw values. `weights` must already be
// normalized; attributes absent from it carry weight 0.
inline std::vector<SolutionScore> score_rows(const std::vector<ScoringRow>& rows,
                                             const std::map<std::string, Polarity>& polarity,
                                             const WeightVector& weights) {
  std::vector<SolutionScore> scores;
  for (const auto& row : rows)
    scores.push_back({row.key, row.node_count, row.raw, {}, 0.0});

  for (const auto& [name, pol] : polarity) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& row : rows) {
      double v = row.raw.at(name);
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double n = 0.0;
      if (span > 0.0) {
        n = (rows[i].raw.at(name) - lo) / span;
        if (pol == Polarity::benefit) n = 1.0 - n;
      }
      scores[i].normalized[name] = n;
    }
  }
  for (auto& s : scores) {
    double total = 0.0;
    for (const auto& [name, w] : weights) total += w * s.normalized.at(name);
    s.total = total;
  }
  std::stable_sort(scores.begin(), scores.end(), [](const SolutionScore& a, const SolutionScore& b) {
    if (a.total != b.total) return a.total < b.total;
    if (a.node_count != b.node_count) return a.node_count < b.node_count;
    return a.solution_hash < b.solution_hash;
  });
  return scores;
}

inline std::vector<SolutionScore> rank(const KnowledgeBase& kb, const std::vector<Solution>& solutions,
                                       const WeightVector& weights) {
  if (solutions.empty()) throw Error(ErrorCode::invalid_argument, "nothing to rank: no solutions");
  auto normalized = normalize_weights(kb, weights);
  std::map<std::string, Polarity> polarity;
  for (const auto& [name, spec] : kb.header().attributes) polarity[name] = spec.polarity;
  std::vector<ScoringRow> rows;
  for (const auto& s : solutions)
    rows.push_back({canonical_hash(s), s.nodes.size(), aggregate_attributes(kb, s)});
  return score_rows(rows, polarity, normalized);
}

// "accuracy=3,energy=1"
inline WeightVector parse_weights(std::string_view text) {
  WeightVector out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (!item.empty()) {
      auto eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0)
        throw Error(ErrorCode::invalid_weights, "expected name=weight, got '" + std::string(item) + "'");
      std::string name(item.substr(0, eq));
      std::string value(item.substr(eq + 1));
      try {
        std::size_t used = 0;
        double w = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        out[name] = w;
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_weights, "bad weight '" + value + "' for '" + name + "'");
      }
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace cascom
