#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sdabn/models.hpp"

namespace sdabn {

/// Serialized parameters of one trained stage.
///
/// Binary layout, little-endian throughout:
///   magic "SDBN", version u16,
///   stage kind u8 ('S' or 'D'), block index u32,
///   config digest u64, rng seed u64,
///   metric snapshot: u32 count, then per metric u32 name length + bytes,
///     f64 value,
///   tensors: u32 count, then per tensor u32 name length + bytes, u32 ndim,
///     u32 dims..., f64 payload.
struct Checkpoint {
    char stage_kind = 'S';
    std::uint32_t block_index = 0;
    std::uint64_t config_digest = 0;
    std::uint64_t rng_seed = 0;
    std::vector<std::pair<std::string, double>> metric_snapshot;
    std::vector<std::pair<std::string, Tensor>> tensors;

    static constexpr std::uint16_t kVersion = 1;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into live parameters by name. Any missing,
/// unexpected, or shape-mismatched tensor fails with a diff that names every
/// offender.
void apply_checkpoint(const Checkpoint& ckpt, ParamList& params);

Checkpoint make_checkpoint(char stage_kind, std::uint32_t block_index, std::uint64_t config_digest,
                           std::uint64_t rng_seed, const ParamList& params,
                           std::vector<std::pair<std::string, double>> metric_snapshot = {});

}  // namespace sdabn
