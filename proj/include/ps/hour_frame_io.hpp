#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ps/core.hpp"

namespace ps {

// FHF1 layout (little-endian):
//   "FHF1" | u32 version | u32 tick_rate_hz | u64 start_time | u32 n_devices | u32 n_ticks
//   device table: n_devices x {u16 name_len, name bytes, u8 kind}
//   payload: column-major f32, n_devices x n_ticks
inline constexpr char kFrameMagic[4] = {'F', 'H', 'F', '1'};
inline constexpr std::uint32_t kFrameVersion = 1;

// Encodes the frame. Validation happens before any byte reaches the sink.
std::vector<std::byte> encode_hour_frame(const HourFrame& frame);
HourFrame decode_hour_frame(const std::vector<std::byte>& bytes);

std::size_t write_hour_frame(const HourFrame& frame, std::ostream& sink);
HourFrame read_hour_frame(std::istream& source);

std::size_t save_hour_frame(const HourFrame& frame, const std::filesystem::path& path);
HourFrame load_hour_frame(const std::filesystem::path& path);

// Sorted list of *.fhf files in a directory.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

}  // namespace ps
