#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mtr/losses.hpp"
#include "mtr/network.hpp"

namespace mtr {

/// Network parameters with the configuration and optimizer state needed to
/// reload or resume them.
///
/// File layout (all integers and doubles little-endian):
///   "MTRCKPT\0"  u32 version
///   config: u64 c,h,w; u64 n_conv; n_conv x (u64 out, u64 kernel, u64 stride, u8 act);
///           u64 fc6, u64 fc7, u8 fc_act, u64 K, u64 A, u8 attachment
///   f64 lambda_D, lambda_P, lambda_A; u64 seed; u64 iterations_done
///   u64 n_blocks; n_blocks x (u64 len, name, u64 rank, rank x u64 dim, f64 values...)
///   u8 has_velocity; [f64 x total parameter count]
struct Checkpoint {
    NetworkConfig config;
    TaskWeights weights;  // objective the parameters were trained with
    std::uint64_t seed = 0;
    TrainState state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Whole-file helpers used by the binary formats.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace mtr
