#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ps/core.hpp"

namespace ps::synth {

enum class PrecursorShape { Ramp, OscillationGrowth, StepNoise };

std::string_view to_string(PrecursorShape s);
PrecursorShape precursor_shape_from_string(std::string_view s);

// Device indices in templates are relative to their kind: affected_readings
// index the Reading devices, bit signatures index the StatusBits devices.
struct BitSignature {
  std::size_t status_device = 0;
  std::uint32_t mask = 0;
};

struct FaultTemplate {
  LabelClass label = LabelClass::Other;
  std::int64_t precursor_lead_ticks = 0;  // 0 = abrupt
  std::vector<std::size_t> affected_readings;
  PrecursorShape precursor_shape = PrecursorShape::Ramp;
  std::vector<BitSignature> bit_signature;
  std::int64_t min_duration_ticks = kMinOutageTicks;
  std::int64_t max_duration_ticks = 1800;
  std::vector<std::string> raw_labels;  // operator labels to attach, one drawn per event
};

struct NoiseConfig {
  double ar_coefficient = 0.9;
  double amplitude = 0.1;  // innovation std relative to the device scale
};

struct SynthConfig {
  std::size_t n_reading = 40;
  std::size_t n_setting = 16;
  std::size_t n_status = 6;
  std::size_t n_permit = 2;
  int hours = 1;
  // Event counts are round(rate * hours), placed uniformly without overlap.
  double outage_rate_per_hour = 1.0;
  double fluctuation_rate_per_hour = 2.0;
  std::vector<FaultTemplate> templates;
  NoiseConfig noise;
  std::uint64_t seed = 1;
  std::uint64_t start_time = 1'700'000'000;

  double abrupt_fraction = 0.25;
  // Amplitudes are in units of each device's stationary noise sigma.
  double precursor_amplitude = 8.0;
  double trip_amplitude = 8.0;
  double sinusoid_amplitude = 2.0;
  double beam_coupled_fraction = 0.25;
  double beam_coupled_drop = 6.0;
  std::int64_t bit_onset_max_ticks = 15;
  std::int64_t fluctuation_min_ticks = 1;
  std::int64_t fluctuation_max_ticks = kMinOutageTicks - 1;

  void validate() const;
};

// Five-class template set (KRF1, KRF2, KRF5, LRF, Other) with disjoint
// affected readings and distinct status bits.
std::vector<FaultTemplate> default_templates();
SynthConfig default_config();

DeviceCatalog make_catalog(const SynthConfig& config);

struct TruthEvent {
  OutageEvent event;
  std::int64_t precursor_lead_ticks = 0;
  PrecursorShape precursor_shape = PrecursorShape::Ramp;
  std::vector<std::size_t> affected_devices;  // catalog indices
  std::size_t template_index = 0;
};

struct Fluctuation {
  std::int64_t start_tick = 0;
  std::int64_t duration_ticks = 0;
};

struct GroundTruth {
  std::uint32_t tick_rate_hz = kDefaultTickRate;
  std::vector<TruthEvent> events;  // sorted by start tick, non-overlapping
  std::vector<Fluctuation> fluctuations;
};

// Absolute-unit description of one permit drop and its side effects.
struct EventRealization {
  std::int64_t drop_tick = 0;  // global tick
  std::int64_t duration_ticks = 0;
  std::int64_t lead_ticks = 0;
  PrecursorShape shape = PrecursorShape::Ramp;
  struct Affected {
    std::size_t device = 0;  // catalog index
    double precursor_amplitude = 0.0;
    double trip_offset = 0.0;
  };
  std::vector<Affected> affected;
  std::vector<std::pair<std::size_t, double>> beam_coupled;  // (device, offset while down)
  std::vector<std::pair<std::size_t, std::uint32_t>> bits;   // (device, mask)
  std::int64_t bit_onset_ticks = 0;
  std::uint64_t noise_seed = 0;
};

// Applies an event to the part of `frame` it overlaps. `frame_start_tick` is
// the global tick of the frame's first sample.
void apply_event(HourFrame& frame, std::int64_t frame_start_tick, const EventRealization& event);

struct InjectionOptions {
  double precursor_amplitude = 1.0;  // absolute units
  double trip_amplitude = 0.0;
  std::int64_t bit_onset_max_ticks = 15;
};

// Injects one outage drawn from `tmpl` at a local tick of a single frame.
HourFrame inject_outage(const HourFrame& frame, const FaultTemplate& tmpl, std::int64_t drop_tick,
                        const InjectionOptions& options, std::mt19937_64& rng);

// Deterministic corpus generator. Events are scheduled once up front; each
// hour then draws from its own (seed, hour) stream, so hours can be produced
// in any order with identical results.
class CorpusGenerator {
 public:
  explicit CorpusGenerator(SynthConfig config);

  const SynthConfig& config() const { return config_; }
  const DeviceCatalog& catalog() const { return catalog_; }
  const GroundTruth& truth() const { return truth_; }
  int hours() const { return config_.hours; }

  HourFrame hour(int index) const;

 private:
  struct DeviceModel {
    double level = 0.0;
    double scale = 1.0;
    double sigma = 1.0;  // stationary noise sigma
    double sin_amplitude = 0.0;
    double sin_period_ticks = 1.0;
    double sin_phase = 0.0;
    bool beam_coupled = false;
    std::uint32_t status_base = 0;
  };

  void build_devices();
  void schedule();

  SynthConfig config_;
  DeviceCatalog catalog_;
  std::vector<DeviceModel> devices_;
  std::vector<EventRealization> realizations_;
  GroundTruth truth_;
};

struct Corpus {
  std::vector<HourFrame> frames;
  GroundTruth truth;
};

Corpus generate_corpus(const SynthConfig& config);

// Writes hour_%05d.fhf files plus truth.json into `dir`.
GroundTruth write_corpus(const SynthConfig& config, const std::filesystem::path& dir);

// Status bits used by the generator for background chatter; templates must
// not use them.
inline constexpr std::uint32_t kChatterMask = 0x0F00;
inline constexpr std::uint32_t kStaticMask = 0xF0000;

}  // namespace ps::synth
