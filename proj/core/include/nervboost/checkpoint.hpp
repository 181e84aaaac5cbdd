#pragma once

#include <string>

#include "nervboost/pipeline.hpp"

namespace nervboost {

inline constexpr char kCheckpointMagic[4] = {'N', 'R', 'V', 'C'};
inline constexpr uint16_t kCheckpointVersion = 1;

/// Versioned container: magic "NRVC", u16 version, u32 text length, run + decoder
/// config as key=value text, u32 tensor count, then per tensor u16 name length,
/// name, u8 rank, u32 dims, f32 little-endian data. Decoder tensors are prefixed
/// "dec.", encoder tensors "enc.".
void save_checkpoint(const std::string& path, const FittedModel& model, const RunConfig& cfg);

struct LoadedCheckpoint {
  FittedModel model;
  RunConfig cfg;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace nervboost
