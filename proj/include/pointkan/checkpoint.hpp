#pragma once

#include <filesystem>

#include "pointkan/model.hpp"

namespace pointkan {

/// Binary checkpoint, little-endian throughout:
///   magic "PKAN", u32 version,
///   u64 config text length + canonical config text,
///   u32 block count, then per block (in Model::params() order):
///   u32 name length, name bytes, u64 element count, count x f64 values.
/// Running batch-norm statistics are stored alongside the trainable blocks
/// so a reloaded model scores bit-identically.
void save_checkpoint(const std::filesystem::path& path, Model& model);

/// Rebuilds the model from the embedded config and restores every block.
/// Magic/version/shape mismatches are errors.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace pointkan
