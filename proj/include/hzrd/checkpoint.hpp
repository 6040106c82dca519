#pragma once

#include "hzrd/risk_model.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hzrd {

// Major version in the high byte; readers reject any other major.
inline constexpr std::uint16_t kCheckpointVersion = 0x0100;

// "HZRD" model checkpoint; layout documented in docs/formats.md.
std::vector<std::uint8_t> encode_checkpoint(const RiskModel& model);
RiskModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const RiskModel& model, const std::filesystem::path& path);
RiskModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hzrd
