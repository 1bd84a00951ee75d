#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "vssf/dataset.hpp"
#include "vssf/model.hpp"
#include "vssf/optimizer.hpp"

namespace vssf {

/// Container framing shared by dataset and checkpoint files:
///   "VSSF" | u16 version | u32 header length | UTF-8 JSON header | payload
/// All integers and array elements are little-endian; arrays are row-major
/// and tile the payload in header order.
inline constexpr std::uint16_t kFormatVersion = 1;

void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

struct Checkpoint {
  Model model;
  std::uint64_t step = 0;
  nlohmann::json config = nlohmann::json::object();
  std::optional<AdamState> optimizer;
};

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Header JSON of any container file (validated framing only).
nlohmann::json read_header(const std::filesystem::path& path);

}  // namespace vssf
