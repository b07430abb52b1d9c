// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include "digestmap/error.hpp"
#include "digestmap/jsonio.hpp"

namespace digestmap::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::string Manifest::to_text() const {
  jsonio::ordered_json j;
  j["command"] = command;
  j["flags"] = jsonio::ordered_json::object();
  for (const auto& [k, v] : flags) j["flags"][k] = v;
  auto files = [](const std::vector<std::filesystem::path>& paths) {
    auto arr = jsonio::ordered_json::array();
    for (const auto& p : paths) {
      arr.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    return arr;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  return jsonio::dump(j) + "\n";
}

void Manifest::write_all() const {
  const std::string text = to_text();
  for (const auto& out : outputs) {
    jsonio::write_text(out.string() + ".manifest.json", text);
  }
}

}  // namespace digestmap::cli
