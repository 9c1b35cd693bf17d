#pragma once

#include <cstdint>
#include <string>

#include "flowood/flow.hpp"
#include "flowood/ocsvm.hpp"

namespace flowood {

// Binary model container (see README for the exact layout): magic, format
// version, model kind, little-endian payload, CRC-32 trailer. Round trips
// are bit-exact; corrupted or truncated files fail to load without
// returning a partial model.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const FlowModel& model, const std::string& path);
FlowModel load_checkpoint(const std::string& path);

void save_ocsvm_checkpoint(const OcSvmModel& model, const std::string& path);
OcSvmModel load_ocsvm_checkpoint(const std::string& path);

// Hex CRC of the stored payload; used as a compact model identifier in
// score reports.
std::string checkpoint_id(const std::string& path);

}  // namespace flowood
