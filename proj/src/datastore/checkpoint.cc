// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "maskse/error.h"

namespace maskse::checkpoint {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'S', 'K', 'S', 'E', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

const NamedArray* Checkpoint::Find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

bool Checkpoint::HasComponent(const std::string& component) const {
  if (config.contains(component)) return true;
  const std::string prefix = component + "/";
  for (const auto& a : arrays)
    if (a.name.compare(0, prefix.size(), prefix) == 0) return true;
  return false;
}

std::string ConfigHash(const json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void Save(const Checkpoint& c, const std::string& path) {
  json header;
  header["kind"] = c.kind;
  header["config"] = c.config;
  header["config_hash"] = ConfigHash(c.config);
  header["provenance"] = c.provenance;
  header["arrays"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    if (a.data.size() != nn::NumElements(a.shape))
      throw InvalidInput("array " + a.name + " inconsistent with its shape");
    header["arrays"].push_back({{"name", a.name},
                                {"shape", a.shape},
                                {"offset", offset},
                                {"count", a.data.size()}});
    offset += a.data.size();
  }
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot create " + tmp);
    os.write(kMagic, 8);
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : c.arrays)
      os.write(reinterpret_cast<const char*>(a.data.data()),
               static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Load(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw NotFound("checkpoint not found: " + path);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  std::uint64_t len = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + ": not a checkpoint");
  if (!is.read(reinterpret_cast<char*>(&len), 8) || len > (1ull << 32))
    throw IoError(path + ": bad header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len)))
    throw IoError(path + ": truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& ex) {
    throw IoError(path + ": corrupt header: " + ex.what());
  }
  Checkpoint c;
  c.kind = header.at("kind").get<std::string>();
  c.config = header.at("config");
  c.provenance = header.at("provenance");
  if (header.at("config_hash").get<std::string>() != ConfigHash(c.config))
    throw ConfigError(path + ": config hash mismatch");
  std::vector<double> payload;
  {
    std::uint64_t total = 0;
    for (const auto& a : header.at("arrays"))
      total = std::max<std::uint64_t>(total, a.at("offset").get<std::uint64_t>() +
                                                 a.at("count").get<std::uint64_t>());
    payload.resize(total);
    if (!is.read(reinterpret_cast<char*>(payload.data()),
                 static_cast<std::streamsize>(total * sizeof(double))))
      throw IoError(path + ": truncated payload");
  }
  for (const auto& a : header.at("arrays")) {
    NamedArray arr;
    arr.name = a.at("name").get<std::string>();
    arr.shape = a.at("shape").get<nn::Shape>();
    const auto off = a.at("offset").get<std::uint64_t>();
    const auto cnt = a.at("count").get<std::uint64_t>();
    if (cnt != nn::NumElements(arr.shape))
      throw IoError(path + ": array " + arr.name + " count/shape mismatch");
    arr.data.assign(payload.begin() + static_cast<std::ptrdiff_t>(off),
                    payload.begin() + static_cast<std::ptrdiff_t>(off + cnt));
    c.arrays.push_back(std::move(arr));
  }
  return c;
}

void PutParams(Checkpoint& c, const std::string& prefix,
               const nn::ParamSet& params) {
  for (const auto& [name, t] : params.entries())
    c.arrays.push_back({prefix + name, t.shape(), t.values()});
}

void GetParams(const Checkpoint& c, const std::string& prefix,
               nn::ParamSet& params) {
  for (const auto& [name, t] : params.entries()) {
    const NamedArray* a = c.Find(prefix + name);
    if (!a) throw ConfigError("checkpoint lacks parameter " + prefix + name);
    if (a->shape != t.shape())
      throw ConfigError("parameter " + prefix + name + " has shape " +
                        nn::ShapeString(a->shape) + ", model expects " +
                        nn::ShapeString(t.shape()));
    nn::Tensor target = t;
    target.mutable_value().assign(a->data.begin(), a->data.end());
  }
}

void PutAdam(Checkpoint& c, const std::string& prefix, const nn::Adam& adam) {
  c.arrays.push_back({prefix + "steps", {1}, {static_cast<double>(adam.steps())}});
  for (const auto& [name, m] : adam.first_moments())
    c.arrays.push_back({prefix + "m/" + name, {static_cast<int>(m.size())}, m});
  for (const auto& [name, v] : adam.second_moments())
    c.arrays.push_back({prefix + "v/" + name, {static_cast<int>(v.size())}, v});
}

void GetAdam(const Checkpoint& c, const std::string& prefix, nn::Adam& adam) {
  const NamedArray* steps = c.Find(prefix + "steps");
  if (!steps) throw ConfigError("checkpoint lacks optimizer state " + prefix);
  std::map<std::string, std::vector<double>> m, v;
  const std::string pm = prefix + "m/", pv = prefix + "v/";
  for (const auto& a : c.arrays) {
    if (a.name.rfind(pm, 0) == 0) m[a.name.substr(pm.size())] = a.data;
    if (a.name.rfind(pv, 0) == 0) v[a.name.substr(pv.size())] = a.data;
  }
  adam.Restore(static_cast<std::int64_t>(steps->data[0]), std::move(m),
               std::move(v));
}

}  // namespace maskse::checkpoint
