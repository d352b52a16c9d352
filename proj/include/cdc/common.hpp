// Copyright 2026 The CDC Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdc {

// Dense domain index in [0, D). Domain ids are stable for the lifetime of a
// corpus; D >= 2 everywhere in this library.
using DomainId = int;

// Bad configuration (file keys, invariant violations). CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Bad or inconsistent input data (files, schemas, corpora). CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

// Canonical order-independent hash of a domain set, used to derive probe
// substreams that must not depend on which member triggered the probe.
std::uint64_t hash_domain_set(const std::vector<DomainId>& sorted_ids);

}  // namespace cdc
