#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cascom {

enum class ValueType { boolean, integer, real, text };

inline std::string_view to_string(ValueType type) {
  switch (type) {
    case ValueType::boolean: return "boolean";
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::text: return "text";
  }
  return "text";
}

inline std::optional<ValueType> parse_value_type(std::string_view text) {
  if (text == "boolean") return ValueType::boolean;
  if (text == "integer") return ValueType::integer;
  if (text == "real") return ValueType::real;
  if (text == "text") return ValueType::text;
  return std::nullopt;
}

// Unit tokens every KB understands. A KB header may extend the list.
inline constexpr std::array<std::string_view, 22> kStarterUnits = {
    "none",    "celsius", "fahrenheit", "kelvin", "percent", "ppm",
    "ppb",     "ugm3",    "lux",        "meter",  "degree",  "volt",
    "pascal",  "hpa",     "mps",        "mm",     "second",  "watt",
    "decibel", "level",   "count",      "ratio"};

inline constexpr std::string_view kNoUnit = "none";

// A typed, unit-bearing semantic data item. Equality is exact on all three
// fields; no conversion or subsumption is implied.
struct DataItemKind {
  std::string label;
  ValueType type = ValueType::real;
  std::string unit = std::string(kNoUnit);

  auto operator<=>(const DataItemKind&) const = default;
  bool operator==(const DataItemKind&) const = default;

  // "airTemperature:real:celsius"
  std::string str() const {
    return label + ":" + std::string(to_string(type)) + ":" + unit;
  }
};

struct DataItemKindHash {
  std::size_t operator()(const DataItemKind& kind) const noexcept {
    std::size_t h = std::hash<std::string>{}(kind.label);
    h ^= std::hash<int>{}(static_cast<int>(kind.type)) + 0x9e3779b97f4a7c15ULL +
         (h << 6) + (h >> 2);
    h ^= std::hash<std::string>{}(kind.unit) + 0x9e3779b97f4a7c15ULL +
         (h << 6) + (h >> 2);
    return h;
  }
};

using KindList = std::vector<DataItemKind>;

inline void sort_unique(KindList& kinds) {
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
}

inline bool contains(const KindList& sorted_kinds, const DataItemKind& kind) {
  return std::binary_search(sorted_kinds.begin(), sorted_kinds.end(), kind);
}

}  // namespace cascom
