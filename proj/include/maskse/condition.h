// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_CONDITION_H_
#define MASKSE_CONDITION_H_

#include <array>
#include <optional>
#include <string>

namespace maskse {

// Recording condition. The integer value is the attribute-vector index and
// the classifier output index: clean=0, n95=1, cotton=2, plastic=3.
enum class Condition : int { kClean = 0, kN95 = 1, kCotton = 2, kPlastic = 3 };

inline constexpr int kNumConditions = 4;

inline constexpr std::array<Condition, kNumConditions> kAllConditions = {
    Condition::kClean, Condition::kN95, Condition::kCotton,
    Condition::kPlastic};

inline constexpr std::array<Condition, 3> kMaskConditions = {
    Condition::kN95, Condition::kCotton, Condition::kPlastic};

inline int Index(Condition c) { return static_cast<int>(c); }

inline const char* ConditionName(Condition c) {
  switch (c) {
    case Condition::kClean: return "clean";
    case Condition::kN95: return "n95";
    case Condition::kCotton: return "cotton";
    case Condition::kPlastic: return "plastic";
  }
  return "?";
}

inline std::optional<Condition> ParseCondition(const std::string& s) {
  for (Condition c : kAllConditions)
    if (s == ConditionName(c)) return c;
  return std::nullopt;
}

inline Condition ConditionFromIndex(int i) { return static_cast<Condition>(i); }

}  // namespace maskse

#endif  // MASKSE_CONDITION_H_
