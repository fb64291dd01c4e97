// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_CONFIG_H_
#define MASKSE_CONFIG_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace maskse {

// Human-editable key/value configuration:
//
//   # comment
//   seed = 7
//   [n95]
//   cutoff_hz = 7000
//
// Keys inside a [section] are stored as "section.key".
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(const std::string& text);
  static KeyValueConfig Load(const std::string& path);

  // "key=value"; throws InvalidInput when malformed.
  void ApplyOverride(const std::string& assignment);
  void Set(const std::string& key, const std::string& value);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> Get(const std::string& key) const;
  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  long long GetInt(const std::string& key, long long fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  // Section names in first-appearance order.
  const std::vector<std::string>& sections() const { return sections_; }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted "key = value" lines.
  std::string Dump() const;

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> sections_;
};

}  // namespace maskse

#endif  // MASKSE_CONFIG_H_
