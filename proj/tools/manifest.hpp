// Copyright 2026 The rrrnet Authors.
//
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
#include <map>
#include <string>
#include <vector>

namespace rrr::cli {

/// Sidecar record written next to every output file as <output>.manifest.json.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> flags;  // every option, defaults included
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> input_digests;  // path -> sha256 hex
  std::string timestamp;                             // UTC, ISO 8601

  std::string to_json() const;
};

std::string sha256_file(const std::string& path);
std::string utc_timestamp();
std::string toolkit_version();

}  // namespace rrr::cli
