// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "digestmap/jsonio.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace digestmap::jsonio {

std::string format_decimal(double v) {
  if (!std::isfinite(v)) throw DomainError("cannot serialize non-finite number");
  if (v == 0.0) return "0.0";
  std::array<char, 400> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  if (ec != std::errc{}) throw DomainError("number formatting failed");
  std::string s(buf.data(), end);
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

std::string format_fixed(double v, int digits) {
  std::array<char, 400> buf{};
  auto [end, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  if (ec != std::errc{}) throw DomainError("number formatting failed");
  return {buf.data(), end};
}

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const ordered_json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const ordered_json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no, "");
    }
    if (!rec.is_object()) throw ParseError("record is not an object", line_no, "");
    fn(line_no, rec);
  }
}

ordered_json read_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON: " + e.what(), 0, "");
  }
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

double get_number(const ordered_json& rec, const char* field, std::size_t line) {
  auto it = rec.find(field);
  if (it == rec.end()) throw ParseError("missing field", line, field);
  if (!it->is_number()) throw ParseError("expected a number", line, field);
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError("non-finite number", line, field);
  return v;
}

std::string get_string(const ordered_json& rec, const char* field, std::size_t line) {
  auto it = rec.find(field);
  if (it == rec.end()) throw ParseError("missing field", line, field);
  if (!it->is_string()) throw ParseError("expected a string", line, field);
  return it->get<std::string>();
}

}  // namespace digestmap::jsonio
