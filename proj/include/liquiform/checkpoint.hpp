#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "liquiform/models.hpp"

namespace liquiform {

// Binary layout, all integers little-endian:
//   "LQFYCKPT" | u16 version (1) |
//   repeated { u32 name length | name bytes | u32 rank | u64 dims[rank] | f32 values[prod(dims)] }
// Records run to the end of the file. A "meta.network" record carries
// (kind, input_channels, base_channels, height, width) so a file can be
// turned back into a network without outside knowledge.
inline constexpr char kCheckpointMagic[8] = {'L', 'Q', 'F', 'Y', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr const char* kMetaRecord = "meta.network";

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records);
// Throws FormatError on bad magic, unsupported version or truncation.
std::vector<CheckpointRecord> decode_checkpoint(std::string_view bytes);

std::vector<CheckpointRecord> checkpoint_records(const Network<float>& net);
void save_checkpoint(const Network<float>& net, const std::filesystem::path& path);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

// Copies parameters and buffers into net; names and shapes must match exactly.
void load_into(Network<float>& net, const std::vector<CheckpointRecord>& records);

// Rebuilds the network described by the meta record. height/width override
// the stored image size (rectification and refinement are fully
// convolutional).
std::unique_ptr<Network<float>> network_from_checkpoint(const std::vector<CheckpointRecord>& records,
                                                        std::optional<int> height = std::nullopt,
                                                        std::optional<int> width = std::nullopt);
std::unique_ptr<Network<float>> load_network(const std::filesystem::path& path,
                                             std::optional<int> height = std::nullopt,
                                             std::optional<int> width = std::nullopt);

}  // namespace liquiform
