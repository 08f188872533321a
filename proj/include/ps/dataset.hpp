#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps/core.hpp"
#include "ps/synth.hpp"

namespace ps::dataset {

inline constexpr std::int64_t kPreDropTicks = 450;   // 30 s before the drop
inline constexpr std::int64_t kPostDropTicks = 150;  // 10 s after
inline constexpr std::int64_t kInstanceTicks = kPreDropTicks + kPostDropTicks;
inline constexpr std::int64_t kNonOutageMinRunTicks = 27000;  // 30 min of permit up
inline constexpr std::int64_t kNonOutageOffsetTicks = 18000;  // crop at the 20th minute

enum class InstanceKind { Outage, NonOutage };
std::string_view to_string(InstanceKind k);

struct Instance {
  std::string id;  // stable: derived from kind and global start tick
  InstanceKind kind = InstanceKind::Outage;
  HourFrame frame;                          // kInstanceTicks x n_devices
  std::optional<std::int64_t> drop_offset;  // kPreDropTicks for outages
  std::string source_file;
  std::int64_t global_start = 0;
  std::optional<LabelClass> label;
  std::optional<std::string> raw_label;
  std::size_t permit_device = 0;  // catalog index of the target permit

  std::int64_t length() const { return frame.n_ticks; }
};

// The first Permit device of the catalog is the prediction target unless a
// caller designates another one.
std::size_t default_permit_device(const DeviceCatalog& catalog);

// Streaming extractor over contiguous, preprocessed frames. Outages whose
// windows straddle a file boundary are completed when the next frame arrives.
class InstanceExtractor {
 public:
  explicit InstanceExtractor(std::optional<std::size_t> permit_device = std::nullopt);

  // Throws ErrorCode::Gap when `frame` does not continue the previous one.
  void push(const HourFrame& frame, std::string source_name = {});
  // Drops still awaiting confirmation at the end of the corpus are discarded.
  void finish();

  std::vector<Instance> take_outages();
  std::vector<Instance> take_non_outages();
  std::int64_t ticks_seen() const { return total_ticks_; }

 private:
  struct Held {
    HourFrame frame;
    std::string name;
    std::int64_t global_start = 0;
  };

  float permit_at(std::int64_t global) const;
  const Held& holder(std::int64_t global) const;
  Instance crop(std::int64_t global_start, InstanceKind kind) const;
  void resolve_pending();
  void crop_non_outage(const Held& held);
  void trim();

  std::optional<std::size_t> permit_device_;
  std::size_t permit_ = 0;
  std::deque<Held> held_;
  std::vector<std::int64_t> pending_drops_;
  std::int64_t total_ticks_ = 0;
  std::vector<Instance> outages_;
  std::vector<Instance> non_outages_;
};

std::vector<Instance> extract_outage_instances(std::span<const HourFrame> frames,
                                               std::optional<std::size_t> permit_device = std::nullopt);
std::vector<Instance> extract_nonoutage_instances(std::span<const HourFrame> frames,
                                                  std::optional<std::size_t> permit_device = std::nullopt);

// Copies the operator label of the matching truth event (drop tick equal to
// global_start + drop_offset) onto outage instances, canonicalizing it.
void attach_labels(std::vector<Instance>& instances, const synth::GroundTruth& truth);

struct Geometry {
  int lookback = 30;
  int gap = 30;
  int horizon = 60;
  int stride = 1;

  int span() const { return lookback + gap + horizon; }
  // Throws ErrorCode::Geometry when the windows do not fit `length` ticks.
  void validate(std::int64_t length) const;
  std::int64_t window_count(std::int64_t length) const;

  bool operator==(const Geometry&) const = default;
};

struct WindowSample {
  Geometry geometry;
  std::int64_t start = 0;         // first look-back tick within the instance
  std::vector<double> lookback;   // row-major [lookback x n_readings]
  std::vector<double> target;     // [horizon] permit values
  double reference_permit = 1.0;  // permit at start + lookback + gap - 1
  std::size_t n_features = 0;

  // Tick (within the instance) of the last look-back sample.
  std::int64_t lookback_end() const { return start + geometry.lookback - 1; }
};

std::vector<WindowSample> make_windows(const Instance& instance, const Geometry& geometry);
std::vector<WindowSample> make_windows(std::span<const Instance> instances, const Geometry& geometry);

enum class Split { Train, Val, Test };
std::string_view to_string(Split s);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Split>> assignments;  // in input order
  // counts[kind][split]
  std::array<std::array<std::size_t, 3>, 2> counts{};

  std::optional<Split> split_of(std::string_view id) const;
};

// Seeded shuffle and partition, stratified by instance kind. Per-kind counts
// are floor(fraction * n) with the remainder handed out by largest fraction.
SplitManifest split_instances(std::span<const Instance> instances, const SplitFractions& fractions,
                              std::uint64_t seed);

std::vector<Instance> select(std::span<const Instance> instances, const SplitManifest& manifest,
                             Split split);

nlohmann::json to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);

// Instance store: one FHF1 mini-frame per instance plus instances.json.
void save_instances(std::span<const Instance> instances, const std::filesystem::path& dir);
std::vector<Instance> load_instances(const std::filesystem::path& dir);

}  // namespace ps::dataset
