// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tahead/tape.hpp"

namespace tahead {

inline constexpr int kCheckpointVersion = 1;

enum class Precision { f32, f64 };
std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

/// Round every value to the nearest float (32-bit storage mode).
void round_to_f32(Tensor& t);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  Precision dtype = Precision::f64;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

/// Checkpoint on disk: `<base>.manifest.json` (versioned JSON listing name,
/// shape, dtype and byte offset of every tensor) plus `<base>.bin` holding
/// the little-endian IEEE-754 payload back to back.
struct CheckpointPaths {
  std::filesystem::path manifest;
  std::filesystem::path payload;
};
CheckpointPaths checkpoint_paths(const std::filesystem::path& base);

void checkpoint_save(const std::filesystem::path& base, const std::vector<const Parameter*>& params,
                     Precision dtype = Precision::f64);

/// Every tensor in the checkpoint, by name. Throws CheckpointVersionError,
/// CheckpointTruncatedError or CheckpointError for malformed files.
std::map<std::string, Tensor> checkpoint_load(const std::filesystem::path& base);

/// Copy matching tensors into `params`. Shape disagreements throw
/// CheckpointShapeError listing every offending name. Parameters absent from
/// the checkpoint are left untouched unless `require_all` is set. Returns the
/// names that were loaded.
std::vector<std::string> checkpoint_load_into(const std::filesystem::path& base,
                                              const std::vector<Parameter*>& params, bool require_all);

/// FNV-1a over the payload file, hex encoded. Used for reproducibility checks.
std::string checkpoint_digest(const std::filesystem::path& base);

}  // namespace tahead
