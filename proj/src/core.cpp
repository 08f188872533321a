#include "ps/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>
#include <unordered_set>

namespace ps {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Invariant: return "invariant";
    case ErrorCode::Format: return "format";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::Geometry: return "geometry";
    case ErrorCode::History: return "history";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Config: return "config";
    case ErrorCode::Training: return "training";
    case ErrorCode::Gap: return "gap";
    case ErrorCode::Bounds: return "bounds";
  }
  return "unknown";
}

std::string_view to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::Reading: return "reading";
    case DeviceKind::Setting: return "setting";
    case DeviceKind::StatusBits: return "status";
    case DeviceKind::Permit: return "permit";
  }
  return "unknown";
}

std::vector<std::size_t> DeviceCatalog::indices_of(DeviceKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind == kind) out.push_back(i);
  return out;
}

std::vector<std::size_t> DeviceCatalog::non_permit_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].kind != DeviceKind::Permit) out.push_back(i);
  return out;
}

std::size_t DeviceCatalog::count(DeviceKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      devices.begin(), devices.end(), [kind](const DeviceSpec& d) { return d.kind == kind; }));
}

void DeviceCatalog::validate() const {
  if (tick_rate_hz == 0) throw Error(ErrorCode::Invariant, "catalog tick rate must be positive");
  std::unordered_set<std::string> names;
  for (const auto& d : devices) {
    if (!names.insert(d.name).second)
      throw Error(ErrorCode::Invariant, "duplicate device name '" + d.name + "'");
  }
  const auto permits = count(DeviceKind::Permit);
  if (permits < 1 || permits > 2)
    throw Error(ErrorCode::Invariant,
                "catalog must hold one or two permit devices, found " + std::to_string(permits));
}

HourFrame::HourFrame(DeviceCatalog cat, std::uint64_t start, std::uint32_t ticks)
    : catalog(std::move(cat)), start_time(start), n_ticks(ticks),
      values(catalog.size() * static_cast<std::size_t>(ticks), 0.0f) {}

void HourFrame::validate() const {
  catalog.validate();
  if (static_cast<std::uint64_t>(n_ticks) > std::uint64_t{catalog.tick_rate_hz} * 3600)
    throw Error(ErrorCode::Invariant, "frame holds more than one hour of ticks");
  if (values.size() != catalog.size() * static_cast<std::size_t>(n_ticks))
    throw Error(ErrorCode::Invariant, "value matrix does not match catalog width x n_ticks");
  for (std::size_t d = 0; d < catalog.size(); ++d) {
    const auto kind = catalog.devices[d].kind;
    if (kind != DeviceKind::Permit && kind != DeviceKind::StatusBits) continue;
    for (float v : column(d)) {
      if (std::isnan(v)) continue;
      if (kind == DeviceKind::Permit && v != 0.0f && v != 1.0f)
        throw Error(ErrorCode::Invariant,
                    "permit column '" + catalog.devices[d].name + "' holds a non-binary value");
      if (kind == DeviceKind::StatusBits &&
          (v < 0.0f || v >= static_cast<float>(kMaxStatusValue) || v != std::floor(v)))
        throw Error(ErrorCode::Invariant,
                    "status column '" + catalog.devices[d].name + "' holds a non-integer value");
    }
  }
}

bool bit_equal(const HourFrame& a, const HourFrame& b) {
  if (!(a.catalog == b.catalog) || a.start_time != b.start_time || a.n_ticks != b.n_ticks ||
      a.values.size() != b.values.size())
    return false;
  return a.values.empty() ||
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

std::string_view to_string(LabelClass c) {
  switch (c) {
    case LabelClass::KRF1: return "KRF1";
    case LabelClass::KRF2: return "KRF2";
    case LabelClass::KRF5: return "KRF5";
    case LabelClass::LRF: return "LRF";
    case LabelClass::Other: return "Other";
    case LabelClass::Unlabeled: return "Unlabeled";
  }
  return "Unlabeled";
}

std::optional<LabelClass> label_class_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabelClasses; ++i) {
    const auto c = static_cast<LabelClass>(i);
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

namespace {

constexpr KnownLabel kKnownLabels[] = {
    {"KRF1 CS Fault", LabelClass::KRF1},
    {"KRF2 CS Fault", LabelClass::KRF2},
    {"KRF5 CS Fault", LabelClass::KRF5},
    {"LRF1 FPGA Trip Sum", LabelClass::LRF},
    {"LRF1 trip", LabelClass::LRF},
    {"LRF2 Driver Anode OL", LabelClass::LRF},
    {"LRF2 reverse power", LabelClass::LRF},
    {"LRF3 FPGA trip", LabelClass::LRF},
    {"LRF3 FPGA trip sum", LabelClass::LRF},
    {"L3 O/I Trip", LabelClass::LRF},
    {"L3 Spark Trip", LabelClass::LRF},
    {"L3 ZOV Driver trip", LabelClass::LRF},
    {"L3 ZOV V", LabelClass::LRF},
    {"L3 ZOV Voltage Trip", LabelClass::LRF},
    {"L3 ZOV driver voltage", LabelClass::LRF},
    {"L3 ZOV driver/voltage trip", LabelClass::LRF},
    {"L4 High Voltage off", LabelClass::LRF},
    {"L4 VXI reboot", LabelClass::LRF},
    {"KRF4 Gun Spark", LabelClass::Other},
    {"KRF6 CS Fault", LabelClass::Other},
    {"KRF6 reflected power fault", LabelClass::Other},
    {"L:QPS312 issues", LabelClass::Other},
    {"Roof leak on KRF7 PFN", LabelClass::Other},
};

// Lower-case, trim, and collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

}  // namespace

std::span<const KnownLabel> known_labels() { return kKnownLabels; }

LabelClass canonicalize_label(std::string_view raw) {
  const auto key = normalize_label(raw);
  for (const auto& known : kKnownLabels)
    if (normalize_label(known.raw) == key) return known.label;
  return LabelClass::Other;
}

}  // namespace ps
