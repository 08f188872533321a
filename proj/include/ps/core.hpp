#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ps/error.hpp"

namespace ps {

enum class DeviceKind : std::uint8_t { Reading = 0, Setting = 1, StatusBits = 2, Permit = 3 };

std::string_view to_string(DeviceKind kind);

struct DeviceSpec {
  std::string name;
  DeviceKind kind = DeviceKind::Reading;

  bool operator==(const DeviceSpec&) const = default;
};

// Status-bit values are stored as f32 and must stay exactly representable.
inline constexpr std::uint32_t kMaxStatusValue = 1u << 24;
inline constexpr std::uint32_t kDefaultTickRate = 15;
inline constexpr std::int64_t kTicksPerHour = 15 * 3600;

struct DeviceCatalog {
  std::vector<DeviceSpec> devices;
  std::uint32_t tick_rate_hz = kDefaultTickRate;

  std::size_t size() const { return devices.size(); }
  std::vector<std::size_t> indices_of(DeviceKind kind) const;
  // Reading, Setting and StatusBits devices in catalog order (everything but permits).
  std::vector<std::size_t> non_permit_indices() const;
  std::size_t count(DeviceKind kind) const;

  // Throws ErrorCode::Invariant on duplicate names, a zero tick rate, or a
  // permit count outside [1, 2].
  void validate() const;

  bool operator==(const DeviceCatalog&) const = default;
};

// One file's worth of samples. Values are column-major: column d occupies
// values[d * n_ticks, (d + 1) * n_ticks). Missing samples are NaN.
struct HourFrame {
  DeviceCatalog catalog;
  std::uint64_t start_time = 0;  // epoch seconds
  std::uint32_t n_ticks = 0;
  std::vector<float> values;

  HourFrame() = default;
  HourFrame(DeviceCatalog cat, std::uint64_t start, std::uint32_t ticks);

  std::size_t n_devices() const { return catalog.size(); }
  float at(std::size_t tick, std::size_t device) const {
    return values[device * n_ticks + tick];
  }
  float& at(std::size_t tick, std::size_t device) { return values[device * n_ticks + tick]; }
  std::span<const float> column(std::size_t device) const {
    return {values.data() + device * n_ticks, n_ticks};
  }
  std::span<float> column(std::size_t device) {
    return {values.data() + device * n_ticks, n_ticks};
  }

  // Shape, tick-count, permit-domain and status-range checks.
  void validate() const;
};

// Bit-exact comparison (NaN payloads included).
bool bit_equal(const HourFrame& a, const HourFrame& b);

enum class LabelClass : std::uint8_t { KRF1 = 0, KRF2, KRF5, LRF, Other, Unlabeled };

inline constexpr std::size_t kNumLabelClasses = 6;
// The classes an automated labeler can output, in tie-break order.
inline constexpr LabelClass kAssignableClasses[] = {LabelClass::KRF1, LabelClass::KRF2,
                                                    LabelClass::KRF5, LabelClass::LRF,
                                                    LabelClass::Other};

std::string_view to_string(LabelClass c);
std::optional<LabelClass> label_class_from_string(std::string_view name);

// Maps an operator-supplied outage label onto its canonical class. Matching is
// case-insensitive and whitespace-insensitive; unknown labels map to Other.
LabelClass canonicalize_label(std::string_view raw);

// Operator labels known to the canonical table, paired with their class.
struct KnownLabel {
  std::string_view raw;
  LabelClass label;
};
std::span<const KnownLabel> known_labels();

struct OutageEvent {
  std::int64_t start_tick = 0;  // corpus-global tick of the permit drop
  std::int64_t duration_ticks = 0;
  std::optional<std::string> raw_label;
  std::optional<LabelClass> label;
  std::optional<double> confidence;

  bool operator==(const OutageEvent&) const = default;
};

// Extracted outages last at least 10 s at 15 Hz.
inline constexpr std::int64_t kMinOutageTicks = 150;

}  // namespace ps
