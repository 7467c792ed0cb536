#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"
#include "xmodal/trainer.hpp"

namespace xmodal {

// UBVL, little-endian:
//   "UBVL", version u32, tensor count u32, then per tensor
//   name length u16, UTF-8 name, rank u8, dims u32 x rank, f32 values.
// Parameters keep their module names ("image.", "language.", "f.", "g.").
// Reserved names start with '@':
//   @config            config text, one byte per value
//   @dims              input extents
//   @counters          epoch, step, total_steps, optimizer step (16-bit chunks)
//   @key.<name>        momentum tower parameters
//   @queue.image       queue rows oldest first (omitted while empty)
//   @queue.language
//   @adam.m.<name>     first and second moments (omitted before the first step)
//   @adam.v.<name>
//   @crc32             per-tensor CRC-32 of every preceding record, as [n, 2] 16-bit halves
inline constexpr std::uint32_t checkpoint_version = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors);
// Verifies the layout and every checksum; failures name the offset.
std::vector<NamedTensor> decode_tensors(std::vector<std::uint8_t> bytes, const std::string& source);

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(std::vector<std::uint8_t> bytes, const std::string& source);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace xmodal
