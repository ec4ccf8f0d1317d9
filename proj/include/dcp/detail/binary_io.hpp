// Copyright 2026 The DCP Authors.
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

// Little-endian stream helpers shared by the dataset, checkpoint and pool
// formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "dcp/errors.hpp"

namespace dcp::binio {

template <typename T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ostream& os, T v) {
  v = byteswap_if_needed(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_all(std::ostream& os, std::span<const T> vs) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(vs.data()),
             static_cast<std::streamsize>(vs.size_bytes()));
  } else {
    for (T v : vs) put(os, v);
  }
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw PersistenceError("unexpected end of file");
  return byteswap_if_needed(v);
}

template <typename T>
void get_all(std::istream& is, std::span<T> out) {
  is.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(out.size_bytes()));
  if (!is) throw PersistenceError("unexpected end of file");
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : out) v = byteswap_if_needed(v);
  }
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) {
  os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4] = {};
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0) {
    throw PersistenceError(std::string("bad magic, expected ") + magic);
  }
}

}  // namespace dcp::binio
