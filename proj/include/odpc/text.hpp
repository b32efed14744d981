/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "odpc/error.hpp"

// Small UTF-8 helpers for label handling.
namespace odpc::text {

namespace detail {

inline bool decode_utf8(std::string_view s, std::size_t& i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int len = 0;
  if (b0 < 0x80) { cp = b0; len = 1; }
  else if ((b0 & 0xE0) == 0xC0) { cp = b0 & 0x1F; len = 2; }
  else if ((b0 & 0xF0) == 0xE0) { cp = b0 & 0x0F; len = 3; }
  else if ((b0 & 0xF8) == 0xF0) { cp = b0 & 0x07; len = 4; }
  else return false;
  if (i + len > s.size()) return false;
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return false;
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return true;
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Simple case folding for the alphabets that show up in class names: ASCII,
// Latin-1, Latin Extended-A, Greek and Cyrillic. Other code points pass through.
inline char32_t fold(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  if (c == 0xDF) return c;  // sharp s; full folding would expand it
  if (c == 0x178) return 0xFF;
  if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149) {
    const bool odd_pair = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    if (odd_pair) return (c % 2 == 1) ? c + 1 : c;
    return (c % 2 == 0) ? c + 1 : c;
  }
  if (c == 0x3C2) return 0x3C3;  // final sigma
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c == 0x386) return 0x3AC;  // tonos capitals
  if (c >= 0x388 && c <= 0x38A) return c + 37;
  if (c == 0x38C) return 0x3CC;
  if (c == 0x38E || c == 0x38F) return c + 63;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) ||
         c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

}  // namespace detail

inline std::vector<char32_t> decode(std::string_view s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char32_t cp = 0;
    require(detail::decode_utf8(s, i, cp), ErrorKind::kInvalidArgument,
            "invalid UTF-8 in label");
    out.push_back(cp);
  }
  return out;
}

/// Trims surrounding whitespace and case-folds. Two labels are the same class
/// iff their normalized forms are equal.
inline std::string normalize_label(std::string_view label) {
  const auto cps = decode(label);
  std::size_t begin = 0;
  std::size_t end = cps.size();
  while (begin < end && detail::is_space(cps[begin])) ++begin;
  while (end > begin && detail::is_space(cps[end - 1])) --end;
  std::string out;
  for (std::size_t i = begin; i < end; ++i) detail::encode_utf8(detail::fold(cps[i]), out);
  return out;
}

inline std::string trim(std::string_view s) {
  const auto cps = decode(s);
  std::size_t begin = 0;
  std::size_t end = cps.size();
  while (begin < end && detail::is_space(cps[begin])) ++begin;
  while (end > begin && detail::is_space(cps[end - 1])) --end;
  std::string out;
  for (std::size_t i = begin; i < end; ++i) detail::encode_utf8(cps[i], out);
  return out;
}

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

inline std::string replace_once(std::string_view tmpl, std::string_view placeholder,
                                std::string_view value) {
  const auto pos = tmpl.find(placeholder);
  require(pos != std::string_view::npos, ErrorKind::kConfiguration,
          "template lacks placeholder " + std::string(placeholder));
  std::string out(tmpl.substr(0, pos));
  out += value;
  out += tmpl.substr(pos + placeholder.size());
  return out;
}

}  // namespace odpc::text
