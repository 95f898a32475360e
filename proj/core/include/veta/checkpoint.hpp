#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veta/trainer.hpp"

namespace veta {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named section of a checkpoint file.
struct CheckpointSection {
    enum class Kind : std::uint8_t { Text = 0, Array = 1 };

    std::string name;
    Kind kind = Kind::Text;
    std::string text;
    std::vector<std::uint64_t> dims;
    std::vector<float> values;
};

/// Raw container: "VETA", u32 version, u32 section count, then per section
/// u32 name length, name, u8 kind, u64 payload length and the payload. An array
/// payload is u32 rank, u64 dims, then float32 values. All little-endian.
void write_sections(const std::string& path, const std::vector<CheckpointSection>& sections);
std::vector<CheckpointSection> read_sections(const std::string& path);

/// Stores config, cloud, network weights, TFE seed and the full optimizer
/// state. Parameters are stored as float32; the trainer keeps them
/// float-representable, so the round trip is exact.
void save_checkpoint(const std::string& path, const Model& model);

/// Throws MissingFile, CorruptFile (truncated or inconsistent content) or
/// VersionMismatch.
Model load_checkpoint(const std::string& path);

}  // namespace veta
