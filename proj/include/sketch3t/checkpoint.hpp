#pragma once

#include "sketch3t/nets.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace sketch3t {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    NetConfig net;
    std::uint64_t model_fingerprint = 0;
    std::uint64_t config_fingerprint = 0;
    ParamSet params;
};

/// Binary archive: magic, format version, both fingerprints, the network
/// description, then every group's named tensors as raw little-endian
/// doubles and finally alpha.
void save_checkpoint(const std::filesystem::path& path, const Sketch3TNet& net, const ParamSet& params,
                     std::uint64_t config_fingerprint);

/// Throws CheckpointError on a bad file, or when `expected_model` is given and
/// differs from the stored model fingerprint.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_model = {});

} // namespace sketch3t
