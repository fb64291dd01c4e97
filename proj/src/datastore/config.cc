// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/config.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "maskse/error.h"

namespace maskse {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::Parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InvalidInput("config line " + std::to_string(line_no) +
                           ": unterminated section header");
      section = Trim(line.substr(1, line.size() - 2));
      if (std::find(cfg.sections_.begin(), cfg.sections_.end(), section) ==
          cfg.sections_.end())
        cfg.sections_.push_back(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(line_no) +
                         ": expected key = value");
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty())
      throw InvalidInput("config line " + std::to_string(line_no) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] =
        Trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::Load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("config file not found: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return Parse(ss.str());
}

void KeyValueConfig::ApplyOverride(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidInput("override '" + assignment + "' is not key=value");
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::Set(const std::string& key, const std::string& value) {
  values_[key] = value;
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string section = key.substr(0, dot);
    if (std::find(sections_.begin(), sections_.end(), section) == sections_.end())
      sections_.push_back(section);
  }
}

std::optional<std::string> KeyValueConfig::Get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::GetString(const std::string& key,
                                      const std::string& fallback) const {
  return Get(key).value_or(fallback);
}

double KeyValueConfig::GetDouble(const std::string& key, double fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  if (*v == "-inf") return -std::numeric_limits<double>::infinity();
  if (*v == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double d = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw InvalidInput("config key " + key + ": '" + *v + "' is not a number");
  }
}

long long KeyValueConfig::GetInt(const std::string& key, long long fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    throw InvalidInput("config key " + key + ": '" + *v + "' is not an integer");
  }
}

bool KeyValueConfig::GetBool(const std::string& key, bool fallback) const {
  auto v = Get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw InvalidInput("config key " + key + ": '" + *v + "' is not a boolean");
}

std::string KeyValueConfig::Dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace maskse
