#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ps/core.hpp"

namespace ps::test {

// Small catalog: `readings` Reading devices, two settings, two status words, one permit.
inline DeviceCatalog small_catalog(std::size_t readings = 3) {
  DeviceCatalog c;
  for (std::size_t i = 0; i < readings; ++i) c.devices.push_back({"R" + std::to_string(i), DeviceKind::Reading});
  c.devices.push_back({"S0", DeviceKind::Setting});
  c.devices.push_back({"S1", DeviceKind::Setting});
  c.devices.push_back({"B0", DeviceKind::StatusBits});
  c.devices.push_back({"B1", DeviceKind::StatusBits});
  c.devices.push_back({"P0", DeviceKind::Permit});
  return c;
}

// Frame with Gaussian readings/settings, zero status words and the permit up.
inline HourFrame noise_frame(const DeviceCatalog& c, std::uint32_t ticks, std::uint64_t seed) {
  HourFrame f(c, 1'700'000'000, ticks);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  for (std::size_t d = 0; d < c.size(); ++d) {
    auto col = f.column(d);
    for (auto& v : col) {
      switch (c.devices[d].kind) {
        case DeviceKind::Reading:
        case DeviceKind::Setting: v = nd(rng); break;
        case DeviceKind::StatusBits: v = 0.0f; break;
        case DeviceKind::Permit: v = 1.0f; break;
      }
    }
  }
  return f;
}

// Contiguous hour-long noise frames with the permit up throughout.
inline std::vector<HourFrame> hours(std::size_t n, std::size_t readings = 2, std::uint64_t seed = 100) {
  std::vector<HourFrame> out;
  const auto cat = small_catalog(readings);
  for (std::size_t h = 0; h < n; ++h) {
    auto f = noise_frame(cat, static_cast<std::uint32_t>(kTicksPerHour), seed + h);
    f.start_time = 1'700'000'000 + 3600 * h;
    out.push_back(std::move(f));
  }
  return out;
}

// Sets the permit to 0 for `ticks` corpus ticks starting at `from`.
inline void set_down(std::vector<HourFrame>& frames, std::int64_t from, std::int64_t ticks) {
  const auto p = frames[0].catalog.indices_of(DeviceKind::Permit).front();
  for (auto g = from; g < from + ticks; ++g)
    frames[static_cast<std::size_t>(g / kTicksPerHour)].at(static_cast<std::size_t>(g % kTicksPerHour), p) = 0.0f;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("ps_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace ps::test
