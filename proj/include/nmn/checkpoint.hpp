/*
 * Copyright 2026 The nmn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "nmn/error.hpp"
#include "nmn/image_io.hpp"
#include "nmn/parameter_store.hpp"

// Binary checkpoint, little-endian:
//   "NMNCKPT1"
//   u32 count, then per parameter: u16 name length, name bytes, u8 rank,
//       u32 dims[rank], f32 data[]
//   u32 count, then the optimizer accumulators in the same layout, named
//       <param>.Eg2 and <param>.Edx2
//   u64 CRC-64 (XZ polynomial) of every preceding byte
namespace nmn {

inline constexpr std::string_view kCheckpointMagic = "NMNCKPT1";

// CRC-64/XZ (reflected ECMA-182 polynomial, init and xorout all ones).
inline std::uint64_t crc64(std::string_view bytes) {
  static const auto table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? (c >> 1) ^ 0xC96C5795D7870F42ULL : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint64_t crc = ~0ULL;
  for (unsigned char b : bytes) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::endian::native == std::endian::little);
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > in_.size()) throw DataError("checkpoint truncated");
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    if (pos_ + n > in_.size()) throw DataError("checkpoint truncated");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_entry(ByteWriter& w, const std::string& name, const Tensor<T>& t) {
  if (name.size() > 0xFFFF) throw ContractError("parameter name too long");
  w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (T v : t.data()) w.put<float>(static_cast<float>(v));
}

template <typename T>
std::pair<std::string, Tensor<T>> read_entry(ByteReader& r) {
  const auto len = r.get<std::uint16_t>();
  std::string name(r.bytes(len));
  const auto rank = r.get<std::uint8_t>();
  if (rank > 4) throw DataError("checkpoint tensor rank > 4: " + name);
  Shape dims;
  for (int i = 0; i < rank; ++i) dims.push_back(r.get<std::uint32_t>());
  for (auto d : dims)
    if (d == 0) throw DataError("checkpoint tensor with zero dim: " + name);
  std::vector<T> data(shape_size(dims));
  for (auto& v : data) v = static_cast<T>(r.get<float>());
  return {std::move(name), Tensor<T>(std::move(dims), std::move(data))};
}

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const ParameterStore<T>& store) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) detail::write_entry(w, name, p.value);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(2 * store.size()));
  for (const auto& [name, p] : store) {
    detail::write_entry(w, name + ".Eg2", p.sq_grad);
    detail::write_entry(w, name + ".Edx2", p.sq_delta);
  }
  w.put<std::uint64_t>(crc64(w.str()));
  return std::move(w.str());
}

template <typename T>
ParameterStore<T> decode_checkpoint(std::string_view bytes, std::uint64_t seed = 0) {
  if (bytes.size() < kCheckpointMagic.size() + 8 + 8 ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (stored != crc64(body)) throw DataError("checkpoint CRC mismatch");

  detail::ByteReader r(body);
  r.bytes(kCheckpointMagic.size());
  ParameterStore<T> store(seed);
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, t] = detail::read_entry<T>(r);
    store.insert(name, std::move(t));
  }
  const auto m = r.get<std::uint32_t>();
  if (m != 2 * n) throw DataError("checkpoint optimizer state count mismatch");
  for (std::uint32_t i = 0; i < m; ++i) {
    auto [name, t] = detail::read_entry<T>(r);
    Tensor<T>* slot = nullptr;
    std::string base;
    if (name.size() > 4 && name.ends_with(".Eg2")) {
      base = name.substr(0, name.size() - 4);
      slot = &store.get(base).sq_grad;
    } else if (name.size() > 5 && name.ends_with(".Edx2")) {
      base = name.substr(0, name.size() - 5);
      slot = &store.get(base).sq_delta;
    } else {
      throw DataError("unexpected optimizer entry " + name);
    }
    if (slot->dims() != t.dims()) throw DataError("optimizer state dims mismatch: " + name);
    *slot = std::move(t);
  }
  if (r.pos() != body.size()) throw DataError("trailing bytes in checkpoint");
  return store;
}

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::string& path) {
  write_file(path, encode_checkpoint(store));
}

template <typename T>
ParameterStore<T> load_checkpoint(const std::string& path, std::uint64_t seed = 0) {
  return decode_checkpoint<T>(read_file(path), seed);
}

}  // namespace nmn
