#pragma once

// Primary/secondary context discovery: the least fixpoint of "active sensor
// outputs" closed under DPC signatures whose inputs are all available.

#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cascom/error.hpp"
#include "cascom/kb.hpp"

namespace cascom {

struct SignatureStatus {
  SignatureRef ref;
  std::map<DataItemKind, bool> inputs;  // input kind -> satisfied
  bool satisfied = false;
};

// Tier 0 holds active-sensor outputs. A derived kind sits one tier above the
// highest input of the signature recorded for it.
struct DerivationTable {
  std::vector<SignatureStatus> signatures;  // in KB signature order
  std::map<DataItemKind, int> tiers;
  std::map<DataItemKind, SignatureRef> derivations;  // absent for tier 0

  std::optional<int> tier(const DataItemKind& kind) const {
    auto it = tiers.find(kind);
    if (it == tiers.end()) return std::nullopt;
    return it->second;
  }

  bool available(const DataItemKind& kind) const { return tiers.contains(kind); }

  int max_tier() const {
    int m = -1;
    for (const auto& [k, t] : tiers) m = std::max(m, t);
    return m;
  }
};

namespace detail {

inline DerivationTable compute_discovery(const KnowledgeBase& kb) {
  DerivationTable table;
  const auto& dpcs = kb.dpcs();

  // Per signature: how many inputs are still missing.
  std::vector<std::vector<std::size_t>> missing(dpcs.size());
  std::unordered_map<DataItemKind, std::vector<SignatureRef>, DataItemKindHash> consumers;
  for (std::size_t d = 0; d < dpcs.size(); ++d) {
    missing[d].resize(dpcs[d].signatures.size());
    for (std::size_t s = 0; s < dpcs[d].signatures.size(); ++s) {
      const auto& sig = dpcs[d].signatures[s];
      missing[d][s] = sig.inputs.size();
      for (const auto& in : sig.inputs) consumers[in].push_back({d, s});
    }
  }

  // (tier, dpc, signature) order: the first time a kind is popped it carries
  // its least tier and the lowest-ranked signature at that tier. DPCs are
  // stored sorted by id, so index order is id order.
  using Entry = std::tuple<int, std::size_t, std::size_t, DataItemKind>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> agenda;
  for (const auto& s : kb.sensors())
    if (s.active)
      for (const auto& k : s.outputs) agenda.emplace(0, 0, 0, k);

  while (!agenda.empty()) {
    auto [tier, dpc, sig_index, kind] = agenda.top();
    agenda.pop();
    if (table.tiers.contains(kind)) continue;
    table.tiers.emplace(kind, tier);
    if (tier > 0) table.derivations.emplace(kind, SignatureRef{dpc, sig_index});
    auto it = consumers.find(kind);
    if (it == consumers.end()) continue;
    for (const auto& ref : it->second) {
      if (--missing[ref.dpc][ref.signature] != 0) continue;
      const auto& sig = kb.signature(ref);
      int top = 0;
      for (const auto& in : sig.inputs) top = std::max(top, table.tiers.at(in));
      agenda.emplace(top + 1, ref.dpc, ref.signature, sig.output);
    }
  }

  for (std::size_t d = 0; d < dpcs.size(); ++d)
    for (std::size_t s = 0; s < dpcs[d].signatures.size(); ++s) {
      SignatureStatus status{{d, s}, {}, true};
      for (const auto& in : dpcs[d].signatures[s].inputs) {
        bool ok = table.tiers.contains(in);
        status.inputs.emplace(in, ok);
        status.satisfied = status.satisfied && ok;
      }
      table.signatures.push_back(std::move(status));
    }
  return table;
}

}  // namespace detail

// Memoized on the KB value; any KB change yields a new value and therefore
// a recomputation.
inline std::shared_ptr<const DerivationTable> discover(const KnowledgeBase& kb) {
  return kb.memo<DerivationTable>([&] { return detail::compute_discovery(kb); });
}

struct DerivationTree {
  DataItemKind kind;
  int tier = 0;
  std::optional<SignatureRef> via;  // empty for primary context
  std::vector<DerivationTree> inputs;
};

inline DerivationTree derivation_of(const KnowledgeBase& kb, const DerivationTable& table,
                                    const DataItemKind& kind) {
  auto tier = table.tier(kind);
  if (!tier) throw Error(ErrorCode::underivable_extra, "kind " + kind.str() + " is not derivable");
  DerivationTree node{kind, *tier, std::nullopt, {}};
  auto it = table.derivations.find(kind);
  if (it == table.derivations.end()) return node;
  node.via = it->second;
  for (const auto& in : kb.signature(it->second).inputs)
    node.inputs.push_back(derivation_of(kb, table, in));
  return node;
}

inline std::vector<DataItemKind> leaves(const DerivationTree& tree) {
  if (tree.inputs.empty()) return {tree.kind};
  std::vector<DataItemKind> out;
  for (const auto& child : tree.inputs) {
    auto sub = leaves(child);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

}  // namespace cascom
