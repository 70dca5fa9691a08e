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

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nmn/error.hpp"

namespace nmn {

// 8-bit image, row-major, interleaved channels (3 for RGB, 1 for gray).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c)
      : width(w), height(h), channels(c), pixels(w * h * c, 0) {}

  std::uint8_t* px(std::size_t x, std::size_t y) {
    return &pixels[(y * width + x) * channels];
  }
  const std::uint8_t* px(std::size_t x, std::size_t y) const {
    return &pixels[(y * width + x) * channels];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PNM encoding: P6 for RGB, P5 for grayscale, maxval 255.
inline std::string encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ContractError("PNM needs 1 or 3 channels");
  }
  std::string out = (img.channels == 3 ? "P6\n" : "P5\n") +
                    std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline Image decode_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (start == pos) throw DataError("truncated PNM header");
    return bytes.substr(start, pos - start);
  };
  const std::string magic = next_token();
  std::size_t channels;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw DataError("unsupported PNM magic '" + magic + "'");
  }
  std::size_t w, h, maxval;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::logic_error&) {
    throw DataError("malformed PNM header");
  }
  if (maxval != 255) throw DataError("PNM maxval must be 255");
  if (w == 0 || h == 0) throw DataError("PNM with zero size");
  ++pos;  // single whitespace byte before the raster
  Image img(w, h, channels);
  if (bytes.size() < pos + img.pixels.size()) {
    throw DataError("truncated PNM raster");
  }
  std::copy(bytes.begin() + pos, bytes.begin() + pos + img.pixels.size(),
            img.pixels.begin());
  return img;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

inline Image read_pnm(const std::string& path) { return decode_pnm(read_file(path)); }

inline void write_pnm(const std::string& path, const Image& img) {
  write_file(path, encode_pnm(img));
}

}  // namespace nmn
