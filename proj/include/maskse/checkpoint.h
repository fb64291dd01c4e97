// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Checkpoint container.
//
// Layout (all integers little-endian):
//   bytes 0..7   magic "MSKSECK1"
//   bytes 8..15  uint64 header length H
//   H bytes      UTF-8 JSON header:
//                  { "kind": str, "config": obj, "config_hash": hex str,
//                    "provenance": obj,
//                    "arrays": [ { "name": str, "shape": [int...],
//                                  "offset": int, "count": int } ... ] }
//   payload      float64 values; array i occupies doubles
//                [offset_i, offset_i + count_i)
//
// Array names are "<component>/<group>/<parameter>", e.g.
// "generator/param/enc0.w" or "critic/adam/m/cls.w". The config
// hash is FNV-1a 64 over the compact JSON dump of "config" and is checked on
// load.

#ifndef MASKSE_CHECKPOINT_H_
#define MASKSE_CHECKPOINT_H_

#include <json.hpp>
#include <string>
#include <vector>

#include "maskse/nn/params.h"

namespace maskse::checkpoint {

struct NamedArray {
  std::string name;
  nn::Shape shape;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* Find(const std::string& name) const;
  bool HasComponent(const std::string& component) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string ConfigHash(const nlohmann::json& config);

void Save(const Checkpoint& c, const std::string& path);
// Throws NotFound for a missing file, IoError for a corrupt container and
// ConfigError when the stored hash does not match the stored config.
Checkpoint Load(const std::string& path);

// Appends every parameter of `params` as "<prefix><name>".
void PutParams(Checkpoint& c, const std::string& prefix,
               const nn::ParamSet& params);
// Copies "<prefix><name>" arrays into the matching parameters.
void GetParams(const Checkpoint& c, const std::string& prefix,
               nn::ParamSet& params);

void PutAdam(Checkpoint& c, const std::string& prefix, const nn::Adam& adam);
void GetAdam(const Checkpoint& c, const std::string& prefix, nn::Adam& adam);

}  // namespace maskse::checkpoint

#endif  // MASKSE_CHECKPOINT_H_
