// Copyright 2026 The lknn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "lknn/types.hpp"

namespace lknn::detail {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

// Appends little-endian scalars and raw blocks to an in-memory buffer.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.append(p, sizeof(T));
  }

  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  template <typename T>
  void put_block(std::span<const T> values) {
    buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }

  void pad_to(std::size_t alignment) {
    while (buf_.size() % alignment != 0) buf_.push_back('\0');
  }

  std::size_t size() const noexcept { return buf_.size(); }
  const std::string& buffer() const noexcept { return buf_; }
  std::string release() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked cursor over a byte range. Every read names the field it is
// reading so truncation errors point at the right place.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(const char* field) {
    require(sizeof(T), field);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::span<const std::byte> take(std::size_t n, const char* field) {
    require(n, field);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void align_to(std::size_t alignment, const char* field) {
    const std::size_t pad = (alignment - pos_ % alignment) % alignment;
    require(pad, field);
    pos_ += pad;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n, const char* field) const {
    if (n > bytes_.size() - pos_) {
      throw FormatError(field, std::string("truncated payload while reading ") + field);
    }
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace lknn::detail
