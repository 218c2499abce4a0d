#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace cvr {

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::a, Phase::b, Phase::c};

constexpr std::size_t index(Phase p) { return static_cast<std::size_t>(p); }

constexpr char to_char(Phase p) { return "abc"[index(p)]; }

/// Per-phase storage indexed by Phase; absent phases hold a default value.
template <typename T>
using PerPhase = std::array<T, 3>;

/// Subset of {a, b, c}.
class PhaseSet {
public:
  constexpr PhaseSet() = default;
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits & 0x7u) {}

  static constexpr PhaseSet all() { return PhaseSet(0x7u); }
  static constexpr PhaseSet of(Phase p) { return PhaseSet(static_cast<std::uint8_t>(1u << index(p))); }

  /// Parses a token such as "abc", "ac" or "b". Returns false on any other character or repeats.
  static bool parse(std::string_view text, PhaseSet& out);

  constexpr bool has(Phase p) const { return (bits_ >> index(p)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t count() const { return (bits_ & 1u) + ((bits_ >> 1) & 1u) + ((bits_ >> 2) & 1u); }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr bool subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr PhaseSet intersect(PhaseSet other) const { return PhaseSet(bits_ & other.bits_); }

  constexpr void insert(Phase p) { bits_ |= static_cast<std::uint8_t>(1u << index(p)); }

  std::string str() const;

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

private:
  std::uint8_t bits_ = 0;
};

} // namespace cvr
