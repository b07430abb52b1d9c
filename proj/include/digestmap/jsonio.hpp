// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

// JSON helpers shared by the file formats. Writers emit plain decimal
// numbers (never exponent notation); readers accept both.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "digestmap/error.hpp"

namespace digestmap::jsonio {

using nlohmann::json;
using nlohmann::ordered_json;

/// Shortest round-tripping fixed-notation rendering of `v`.
std::string format_decimal(double v);

/// Fixed rendering with exactly `digits` decimals.
std::string format_fixed(double v, int digits);

namespace detail {

template <class Json>
void dump_to(const Json& j, std::string& out) {
  switch (j.type()) {
    case Json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += Json(it.key()).dump();
        out += ':';
        dump_to(it.value(), out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        dump_to(v, out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      out += format_decimal(j.template get<double>());
      break;
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Compact single-line serialization with decimal floats.
template <class Json>
std::string dump(const Json& j) {
  std::string out;
  detail::dump_to(j, out);
  return out;
}

/// Calls `fn(line_number, record)` for every non-blank line of a
/// line-delimited JSON file. Throws ParseError naming the line on bad JSON.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const ordered_json&)>& fn);

ordered_json read_document(const std::filesystem::path& path);

/// Writes `text` to `path` atomically enough for batch tools (truncate+write).
void write_text(const std::filesystem::path& path, std::string_view text);

/// Required field accessors that report the offending field and line.
double get_number(const ordered_json& rec, const char* field, std::size_t line);
std::string get_string(const ordered_json& rec, const char* field, std::size_t line);

}  // namespace digestmap::jsonio
