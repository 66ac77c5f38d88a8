#pragma once

#include <cstdint>
#include <filesystem>

#include "fast/model.hpp"
#include "fast/tokenizer.hpp"

namespace fast {

// Single-file checkpoint: magic "FSTM", format version, model config,
// embedded tokenizer table, parameter tensors in declared order, an optional
// stamp section and a trailing FNV-1a checksum over all preceding bytes.
// All integers and doubles are little-endian; round-trips are byte identical.
struct Checkpoint {
    MicroTransformer model;
    Tokenizer tokenizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MicroTransformer& model, const Tokenizer& tokenizer,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Checksum stored in (and recomputed over) a checkpoint file; loading never
// mutates the file.
std::uint64_t checkpoint_checksum(const std::filesystem::path& path);

} // namespace fast
