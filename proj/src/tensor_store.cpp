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
#include "rrr/tensor_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "rrr/errors.hpp"

namespace rrr {
namespace {

constexpr char kMagic[4] = {'R', 'R', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

class ByteWriter {
 public:
  explicit ByteWriter(std::string& out) : out_(out) {}

  template <class U>
  void put(U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<char>((value >> (8 * i)) & 0xFFu));
    }
  }
  void put_bytes(std::string_view bytes) { out_.append(bytes); }

 private:
  std::string& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto view = in_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  bool at_end() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("truncated RRRW data while reading ") + what);
    }
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

void TensorStore::add(std::string name, TensorF tensor) {
  if (tensor.data.size() != shape_size(tensor.shape)) {
    throw FormatError("tensor '" + name + "' has " + std::to_string(tensor.data.size()) +
                      " values for shape " + shape_str(tensor.shape));
  }
  if (index_.count(name)) throw FormatError("duplicate tensor name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

void TensorStore::replace(const std::string& name, TensorF tensor) {
  auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("missing tensor '" + name + "'");
  if (tensor.data.size() != shape_size(tensor.shape)) {
    throw FormatError("tensor '" + name + "' data does not match shape " + shape_str(tensor.shape));
  }
  entries_[it->second].second = std::move(tensor);
}

bool TensorStore::contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

const TensorF& TensorStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw FormatError("missing tensor '" + std::string(name) + "'");
  return entries_[it->second].second;
}

TensorF& TensorStore::get_mut(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw FormatError("missing tensor '" + std::string(name) + "'");
  return entries_[it->second].second;
}

std::vector<std::string> TensorStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::string serialize(const TensorStore& store) {
  std::string out;
  ByteWriter w(out);
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("tensor rank too large: " + name);
    }
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put(static_cast<std::uint8_t>(t.shape.size()));
    for (int d : t.shape) {
      if (d <= 0) throw FormatError("non-positive dimension in tensor '" + name + "'");
      w.put(static_cast<std::uint32_t>(d));
    }
    w.put(kDtypeF32);
    out.reserve(out.size() + 4 * t.data.size());
    for (float v : t.data) w.put(std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorStore deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != std::string_view(kMagic, 4)) {
    throw FormatError("bad magic: not an RRRW file");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("unsupported RRRW version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");

  TensorStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name(r.get_bytes(name_len, "name"));
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& d : shape) {
      const auto dim = r.get<std::uint32_t>("dims");
      if (dim == 0 || dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw FormatError("invalid dimension in tensor '" + name + "'");
      }
      d = static_cast<int>(dim);
      elements *= dim;
      if (elements > r.remaining()) throw FormatError("truncated RRRW data in tensor '" + name + "'");
    }
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32) {
      throw FormatError("unknown dtype code " + std::to_string(dtype) + " in tensor '" + name + "'");
    }
    const auto payload = r.get_bytes(static_cast<std::size_t>(elements) * 4, "tensor data");
    TensorF t(std::move(shape));
    for (std::size_t k = 0; k < t.data.size(); ++k) {
      std::uint32_t raw = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        raw |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(payload[4 * k + b])) << (8 * b);
      }
      t.data[k] = std::bit_cast<float>(raw);
    }
    store.add(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last tensor");
  return store;
}

void save(const TensorStore& store, const std::string& path) {
  const auto bytes = serialize(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

TensorStore load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

namespace names {

std::string block(int phase, int index, int branch) {
  std::string s = "conv" + std::to_string(phase) + "_" + std::to_string(index);
  if (branch >= 0) s += ".branch" + std::to_string(branch);
  return s;
}

std::string head(int branch) { return branch >= 0 ? "fc.branch" + std::to_string(branch) : "fc"; }

bool is_buffer(std::string_view name) {
  return ends_with(name, ".running_mean") || ends_with(name, ".running_var") ||
         name.substr(0, 6) == "input.";
}

}  // namespace names

std::int64_t count_store_params(const TensorStore& store) {
  std::int64_t n = 0;
  for (const auto& [name, t] : store.entries()) {
    if (!names::is_buffer(name)) n += static_cast<std::int64_t>(t.size());
  }
  return n;
}

std::vector<std::string> names_with_prefix(const TensorStore& store, std::string_view prefix) {
  std::vector<std::string> out;
  for (const auto& [name, _] : store.entries()) {
    if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
        name[prefix.size()] == '.') {
      out.push_back(name);
    }
  }
  return out;
}

}  // namespace rrr
