#pragma once

// Checkpoint file:
//   "TMKTCKPT" | u32 LE header length | JSON header | payload
// The header records the format version, architecture, neuron constants and
// a tensor table (name, shape, dtype, offset, nbytes) plus an FNV-1a digest
// of the payload. Tensors are little-endian IEEE-754.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tmkt/spiking_core.hpp"

namespace tmkt::ckpt {

inline constexpr char kMagic[8] = {'T', 'M', 'K', 'T', 'C', 'K', 'P', 'T'};
inline constexpr int kFormatVersion = 1;

struct Checkpoint {
  snn::NetworkSpec spec;
  snn::LIFParams lif;
  snn::TensorList<float> parameters;
  std::vector<double> gate_theta;  // stored as float64
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a network from the checkpoint (architecture and weights).
snn::SpikingNetwork<float> restore_network(const Checkpoint& ckpt);

}  // namespace tmkt::ckpt
