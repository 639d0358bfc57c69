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
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rrr/tensor.hpp"

namespace rrr {

/// Named f32 tensors in insertion order. Names are dotted paths such as
/// "conv4_1.branch3.conv2.weight".
class TensorStore {
 public:
  using Entry = std::pair<std::string, TensorF>;

  /// Throws FormatError on a duplicate name or a data/shape size mismatch.
  void add(std::string name, TensorF tensor);
  /// Replaces an existing entry; throws FormatError if absent.
  void replace(const std::string& name, TensorF tensor);

  bool contains(std::string_view name) const;
  /// Throws FormatError naming the missing tensor.
  const TensorF& get(std::string_view name) const;
  TensorF& get_mut(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  bool operator==(const TensorStore& other) const { return entries_ == other.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binary layout: "RRRW", u32 version (1), u32 count, then per tensor
/// u16 name length, UTF-8 name, u8 rank, rank x u32 dims, u8 dtype (0 = f32)
/// and the row-major f32 payload. Little-endian, unpadded.
std::string serialize(const TensorStore& store);
TensorStore deserialize(std::string_view bytes);

void save(const TensorStore& store, const std::string& path);
TensorStore load(const std::string& path);

namespace names {

inline constexpr std::string_view kInputMean = "input.mean";
inline constexpr std::string_view kInputStd = "input.std";

/// "conv4_1" or "conv4_1.branch3" when branch >= 0.
std::string block(int phase, int index, int branch = -1);
/// "fc" or "fc.branch3" when branch >= 0.
std::string head(int branch = -1);

bool is_buffer(std::string_view name);  // running stats and input normalization

}  // namespace names

/// Trainable parameter count: everything except BN running statistics and
/// the input normalization constants.
std::int64_t count_store_params(const TensorStore& store);

/// Entries whose name starts with `prefix` followed by '.'.
std::vector<std::string> names_with_prefix(const TensorStore& store, std::string_view prefix);

}  // namespace rrr
