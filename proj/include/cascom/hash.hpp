#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

namespace cascom {

// 64-bit FNV-1a. Stable across platforms, used for content hashes that end
// up in serialized artifacts (solution hashes, KB version, plan ids).
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 14695981039346656037ULL;
  static constexpr std::uint64_t kPrime = 1099511628211ULL;

  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  // Length-prefixed, so that ("ab","c") and ("a","bc") differ.
  Fnv1a& field(std::string_view bytes) {
    update(std::to_string(bytes.size()));
    update(":");
    return update(bytes);
  }

  Fnv1a& field(std::uint64_t value) { return field(std::to_string(value)); }

  std::uint64_t digest() const { return state_; }

  std::string hex() const { return to_hex(state_); }

  static std::string to_hex(std::uint64_t value) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << value;
    return out.str();
  }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::string fnv1a_hex(std::string_view bytes) {
  return Fnv1a{}.update(bytes).hex();
}

}  // namespace cascom
