#pragma once

#include <cstdint>
#include <string>

#include "dsvit/dual_stream.hpp"

namespace dsvit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian): "DSCK", u32 version, u64 model-config hash,
/// f64 alpha, u32 tensor count, then per tensor: u32 name length, name bytes,
/// u32 rank, u64 dims, f64 values.
void save_checkpoint(const std::string& path, DualStreamModel& model);

/// Restores parameters and alpha. Refuses (ConfigError quoting both hashes)
/// when the stored hash differs from the model's config hash.
void load_checkpoint(const std::string& path, DualStreamModel& model);

std::uint64_t read_checkpoint_hash(const std::string& path);

std::string format_hash(std::uint64_t hash);

}  // namespace dsvit
