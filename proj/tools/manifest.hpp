// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace digestmap::cli {

/// Hex SHA-256 of a file's bytes. Throws IoError when unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written beside each output as <output>.manifest.json.
/// Holds no timestamp so seeded runs stay byte-identical.
struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> flags;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;

  std::string to_text() const;
  /// One manifest file per output, each listing every output.
  void write_all() const;
};

}  // namespace digestmap::cli
