// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor container. Layout (little-endian throughout):
//   magic "MMTF" (4 bytes), version u32 = 1, tensor count u32;
//   per tensor: name length u16, UTF-8 name, dtype u8 (1 = f64, 2 = f32
//   promoted to f64 on read), ndim u8, dims as u64 each, payload row-major.
// Writes always use dtype 1, so a write -> read round-trip is bit-exact.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/param_set.hpp"
#include "fedmm/tensor.hpp"

namespace fedmm::mmtf {

using NamedTensor = std::pair<std::string, Tensor>;

void write_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
void write_file(const std::filesystem::path& path, const ParamSet& params);

/// Throws FormatError on bad magic/version/dtype, CorruptionError (with the
/// byte offset) on truncated or oversized payloads. Never returns partial
/// content.
std::vector<NamedTensor> read_file(const std::filesystem::path& path);

/// read_file + ParamSet assembly (enforces unique names).
ParamSet read_param_set(const std::filesystem::path& path);

}  // namespace fedmm::mmtf
