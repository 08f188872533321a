#include "ps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "ps/hour_frame_io.hpp"
#include "ps/json_io.hpp"
#include "ps/rng.hpp"

namespace ps::synth {
namespace {

constexpr std::uint64_t kDeviceStream = 0xD1CE;
constexpr std::uint64_t kHourStream = 0x4B0B;
constexpr std::uint64_t kScheduleStream = 0x5C4E;
constexpr std::uint64_t kEventStream = 0xE7E7;

// Ticks reserved around each event so that windows never see two events.
constexpr std::int64_t kGuardBefore = 600;
constexpr std::int64_t kGuardAfter = 300;
constexpr int kMaxPlacementAttempts = 20000;

constexpr double kSettingStepProbability = 0.3;
constexpr double kChatterEventsPerHour = 6.0;
constexpr double kMissingRate = 1e-4;
constexpr double kOscillationPeriodTicks = 8.0;

double precursor_offset(PrecursorShape shape, std::int64_t k, std::int64_t lead, double amplitude,
                        double noise) {
  // k counts ticks into the precursor: 0 at drop - lead, lead - 1 at drop - 1.
  switch (shape) {
    case PrecursorShape::Ramp:
      return lead <= 1 ? amplitude
                       : amplitude * static_cast<double>(k) / static_cast<double>(lead - 1);
    case PrecursorShape::OscillationGrowth: {
      const double growth = static_cast<double>(k + 1) / static_cast<double>(lead);
      return amplitude * growth *
             std::sin(2.0 * std::numbers::pi * static_cast<double>(k + 1) / kOscillationPeriodTicks);
    }
    case PrecursorShape::StepNoise:
      return amplitude * (0.5 + noise / 3.0);
  }
  return 0.0;
}

std::int64_t log_uniform(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) return lo;
  std::uniform_real_distribution<double> u(std::log(static_cast<double>(lo)),
                                           std::log(static_cast<double>(hi) + 1.0));
  return std::clamp(static_cast<std::int64_t>(std::exp(u(rng))), lo, hi);
}

}  // namespace

std::string_view to_string(PrecursorShape s) {
  switch (s) {
    case PrecursorShape::Ramp: return "ramp";
    case PrecursorShape::OscillationGrowth: return "oscillation_growth";
    case PrecursorShape::StepNoise: return "step_noise";
  }
  return "ramp";
}

PrecursorShape precursor_shape_from_string(std::string_view s) {
  if (s == "ramp") return PrecursorShape::Ramp;
  if (s == "oscillation_growth") return PrecursorShape::OscillationGrowth;
  if (s == "step_noise") return PrecursorShape::StepNoise;
  throw Error(ErrorCode::Config, "unknown precursor shape '" + std::string(s) + "'");
}

void SynthConfig::validate() const {
  if (hours < 1) throw Error(ErrorCode::Config, "hours must be >= 1");
  if (n_reading == 0) throw Error(ErrorCode::Config, "at least one reading device is required");
  if (n_permit < 1 || n_permit > 2) throw Error(ErrorCode::Config, "n_permit must be 1 or 2");
  if (outage_rate_per_hour < 0 || fluctuation_rate_per_hour < 0)
    throw Error(ErrorCode::Config, "event rates must be non-negative");
  if (abrupt_fraction < 0 || abrupt_fraction > 1)
    throw Error(ErrorCode::Config, "abrupt_fraction must lie in [0, 1]");
  if (noise.ar_coefficient <= -1 || noise.ar_coefficient >= 1 || noise.amplitude < 0)
    throw Error(ErrorCode::Config, "AR(1) noise needs |coefficient| < 1 and amplitude >= 0");
  if (fluctuation_min_ticks < 1 || fluctuation_max_ticks >= kMinOutageTicks ||
      fluctuation_min_ticks > fluctuation_max_ticks)
    throw Error(ErrorCode::Config, "fluctuations must last 1..149 ticks");
  if (bit_onset_max_ticks < 0 || bit_onset_max_ticks > 30)
    throw Error(ErrorCode::Config, "bit onset must fall within 2 s (30 ticks) of the drop");
  if (outage_rate_per_hour > 0 && templates.empty())
    throw Error(ErrorCode::Config, "outages requested but no fault templates configured");

  std::vector<std::pair<std::size_t, std::uint32_t>> seen;
  for (const auto& t : templates) {
    if (t.label == LabelClass::Unlabeled)
      throw Error(ErrorCode::Config, "fault templates need an assignable class");
    if (t.precursor_lead_ticks < 0 || t.precursor_lead_ticks > 450)
      throw Error(ErrorCode::Config, "precursor lead must lie in [0, 450] ticks");
    if (t.min_duration_ticks < kMinOutageTicks || t.max_duration_ticks < t.min_duration_ticks ||
        t.max_duration_ticks > kTicksPerHour)
      throw Error(ErrorCode::Config, "template durations must satisfy 150 <= min <= max <= 54000");
    for (auto r : t.affected_readings)
      if (r >= n_reading) throw Error(ErrorCode::Config, "affected reading index out of range");
    for (const auto& b : t.bit_signature) {
      if (b.status_device >= n_status)
        throw Error(ErrorCode::Config, "bit signature device index out of range");
      if (b.mask == 0 || (b.mask & (kChatterMask | kStaticMask)) != 0 || b.mask >= kMaxStatusValue)
        throw Error(ErrorCode::Config, "bit signature masks must be non-zero and avoid reserved bits");
      for (const auto& [dev, mask] : seen)
        if (dev == b.status_device && mask == b.mask)
          throw Error(ErrorCode::Config, "bit signatures must be distinct across templates");
    }
    for (const auto& b : t.bit_signature) seen.emplace_back(b.status_device, b.mask);
  }
}

std::vector<FaultTemplate> default_templates() {
  auto make = [](LabelClass c, std::int64_t lead, std::vector<std::size_t> readings,
                 PrecursorShape shape, BitSignature bits, std::int64_t max_dur,
                 std::vector<std::string> labels) {
    FaultTemplate t;
    t.label = c;
    t.precursor_lead_ticks = lead;
    t.affected_readings = std::move(readings);
    t.precursor_shape = shape;
    t.bit_signature = {bits};
    t.min_duration_ticks = kMinOutageTicks;
    t.max_duration_ticks = max_dur;
    t.raw_labels = std::move(labels);
    return t;
  };
  return {
      make(LabelClass::KRF1, 45, {0, 1, 2}, PrecursorShape::Ramp, {0, 0x01}, 9000,
           {"KRF1 CS Fault"}),
      make(LabelClass::KRF2, 60, {3, 4, 5}, PrecursorShape::OscillationGrowth, {0, 0x02}, 9000,
           {"KRF2 CS Fault"}),
      make(LabelClass::KRF5, 30, {6, 7, 8}, PrecursorShape::StepNoise, {1, 0x01}, 4500,
           {"KRF5 CS Fault"}),
      make(LabelClass::LRF, 50, {9, 10, 11}, PrecursorShape::Ramp, {1, 0x04}, 18000,
           {"L3 ZOV Voltage Trip", "L3 ZOV driver/voltage trip", "LRF1 trip", "L4 VXI reboot"}),
      make(LabelClass::Other, 40, {12, 13, 14}, PrecursorShape::StepNoise, {2, 0x08}, 27000,
           {"KRF4 Gun Spark", "Roof leak on KRF7 PFN"}),
  };
}

SynthConfig default_config() {
  SynthConfig c;
  c.templates = default_templates();
  return c;
}

DeviceCatalog make_catalog(const SynthConfig& config) {
  DeviceCatalog cat;
  char name[32];
  for (std::size_t i = 0; i < config.n_reading; ++i) {
    std::snprintf(name, sizeof name, "L:RD%03zu", i);
    cat.devices.push_back({name, DeviceKind::Reading});
  }
  for (std::size_t i = 0; i < config.n_setting; ++i) {
    std::snprintf(name, sizeof name, "L:ST%03zu", i);
    cat.devices.push_back({name, DeviceKind::Setting});
  }
  for (std::size_t i = 0; i < config.n_status; ++i) {
    std::snprintf(name, sizeof name, "L:SB%03zu", i);
    cat.devices.push_back({name, DeviceKind::StatusBits});
  }
  for (std::size_t i = 0; i < config.n_permit; ++i) {
    std::snprintf(name, sizeof name, "L:BPM%zu", i);
    cat.devices.push_back({name, DeviceKind::Permit});
  }
  cat.tick_rate_hz = kDefaultTickRate;
  return cat;
}

void apply_event(HourFrame& frame, std::int64_t frame_start_tick, const EventRealization& ev) {
  const std::int64_t n = frame.n_ticks;
  const auto local = [&](std::int64_t global) { return global - frame_start_tick; };

  const std::int64_t pre_begin = std::max<std::int64_t>(0, local(ev.drop_tick - ev.lead_ticks));
  const std::int64_t pre_end = std::min<std::int64_t>(n, local(ev.drop_tick));
  for (std::int64_t t = pre_begin; t < pre_end; ++t) {
    const std::int64_t k = frame_start_tick + t - (ev.drop_tick - ev.lead_ticks);
    for (const auto& a : ev.affected) {
      const double noise = ev.shape == PrecursorShape::StepNoise
                               ? hashed_normal(ev.noise_seed, static_cast<std::uint64_t>(k), a.device)
                               : 0.0;
      frame.at(static_cast<std::size_t>(t), a.device) += static_cast<float>(
          precursor_offset(ev.shape, k, ev.lead_ticks, a.precursor_amplitude, noise));
    }
  }

  const std::int64_t down_begin = std::max<std::int64_t>(0, local(ev.drop_tick));
  const std::int64_t down_end = std::min<std::int64_t>(n, local(ev.drop_tick + ev.duration_ticks));
  const auto permits = frame.catalog.indices_of(DeviceKind::Permit);
  for (std::int64_t t = down_begin; t < down_end; ++t) {
    const auto tick = static_cast<std::size_t>(t);
    for (auto p : permits) frame.at(tick, p) = 0.0f;
    for (const auto& a : ev.affected) frame.at(tick, a.device) += static_cast<float>(a.trip_offset);
    for (const auto& [dev, off] : ev.beam_coupled) frame.at(tick, dev) += static_cast<float>(off);
  }

  const std::int64_t bits_begin =
      std::max<std::int64_t>(0, local(ev.drop_tick + ev.bit_onset_ticks));
  for (std::int64_t t = bits_begin; t < down_end; ++t) {
    for (const auto& [dev, mask] : ev.bits) {
      auto& v = frame.at(static_cast<std::size_t>(t), dev);
      v = static_cast<float>(static_cast<std::uint32_t>(v) | mask);
    }
  }
}

HourFrame inject_outage(const HourFrame& frame, const FaultTemplate& tmpl, std::int64_t drop_tick,
                        const InjectionOptions& options, std::mt19937_64& rng) {
  if (drop_tick < 0 || drop_tick >= static_cast<std::int64_t>(frame.n_ticks))
    throw Error(ErrorCode::Bounds, "drop tick " + std::to_string(drop_tick) + " outside frame");
  const auto readings = frame.catalog.indices_of(DeviceKind::Reading);
  const auto status = frame.catalog.indices_of(DeviceKind::StatusBits);

  EventRealization ev;
  ev.drop_tick = drop_tick;
  ev.duration_ticks = log_uniform(rng, tmpl.min_duration_ticks, tmpl.max_duration_ticks);
  ev.lead_ticks = tmpl.precursor_lead_ticks;
  ev.shape = tmpl.precursor_shape;
  for (std::size_t k = 0; k < tmpl.affected_readings.size(); ++k) {
    const auto r = tmpl.affected_readings[k];
    if (r >= readings.size()) throw Error(ErrorCode::Bounds, "affected reading index out of range");
    const double sign = (k + static_cast<std::size_t>(tmpl.label)) % 2 == 0 ? 1.0 : -1.0;
    ev.affected.push_back({readings[r], options.precursor_amplitude, sign * options.trip_amplitude});
  }
  for (const auto& b : tmpl.bit_signature) {
    if (b.status_device >= status.size())
      throw Error(ErrorCode::Bounds, "bit signature device index out of range");
    ev.bits.emplace_back(status[b.status_device], b.mask);
  }
  std::uniform_int_distribution<std::int64_t> onset(0, options.bit_onset_max_ticks);
  ev.bit_onset_ticks = onset(rng);
  ev.noise_seed = rng();

  HourFrame out = frame;
  apply_event(out, 0, ev);
  return out;
}

CorpusGenerator::CorpusGenerator(SynthConfig config)
    : config_(std::move(config)), catalog_(make_catalog(config_)) {
  config_.validate();
  build_devices();
  schedule();
}

void CorpusGenerator::build_devices() {
  std::mt19937_64 rng(derive_seed(config_.seed, {kDeviceStream}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phi = config_.noise.ar_coefficient;

  std::vector<bool> templated(config_.n_reading, false);
  for (const auto& t : config_.templates)
    for (auto r : t.affected_readings) templated[r] = true;

  devices_.resize(catalog_.size());
  std::size_t reading_index = 0;
  for (std::size_t d = 0; d < catalog_.size(); ++d) {
    auto& m = devices_[d];
    switch (catalog_.devices[d].kind) {
      case DeviceKind::Reading: {
        m.level = -5.0 + 10.0 * unit(rng);
        m.scale = 0.5 + 4.5 * unit(rng);
        m.sigma = config_.noise.amplitude * m.scale / std::sqrt(1.0 - phi * phi);
        if (m.sigma <= 0.0) m.sigma = m.scale;
        m.sin_amplitude = config_.sinusoid_amplitude * m.sigma;
        m.sin_period_ticks = (300.0 + 1500.0 * unit(rng)) * kDefaultTickRate;
        m.sin_phase = 2.0 * std::numbers::pi * unit(rng);
        const bool coupled = unit(rng) < config_.beam_coupled_fraction;
        m.beam_coupled = coupled && !templated[reading_index];
        ++reading_index;
        break;
      }
      case DeviceKind::Setting:
        m.level = -10.0 + 20.0 * unit(rng);
        m.scale = 0.1 + 1.9 * unit(rng);
        break;
      case DeviceKind::StatusBits:
        m.status_base = static_cast<std::uint32_t>(rng()) & kStaticMask;
        break;
      case DeviceKind::Permit:
        break;
    }
  }
}

void CorpusGenerator::schedule() {
  std::mt19937_64 rng(derive_seed(config_.seed, {kScheduleStream}));
  const std::int64_t total = static_cast<std::int64_t>(config_.hours) * kTicksPerHour;
  const auto n_outages = static_cast<std::int64_t>(std::llround(config_.outage_rate_per_hour * config_.hours));
  const auto n_fluct =
      static_cast<std::int64_t>(std::llround(config_.fluctuation_rate_per_hour * config_.hours));

  std::vector<std::pair<std::int64_t, std::int64_t>> reserved;
  auto place = [&](std::int64_t duration) -> std::int64_t {
    const std::int64_t lo = kGuardBefore;
    const std::int64_t hi = total - duration - kGuardAfter;
    if (hi < lo) throw Error(ErrorCode::Config, "corpus too short for the requested event duration");
    std::uniform_int_distribution<std::int64_t> pick(lo, hi);
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const std::int64_t drop = pick(rng);
      const std::int64_t a = drop - kGuardBefore, b = drop + duration + kGuardAfter;
      const bool clash = std::any_of(reserved.begin(), reserved.end(), [&](const auto& r) {
        return a < r.second && r.first < b;
      });
      if (!clash) {
        reserved.emplace_back(a, b);
        return drop;
      }
    }
    throw Error(ErrorCode::Config, "event density infeasible: could not place events without overlap");
  };

  const auto readings = catalog_.indices_of(DeviceKind::Reading);
  const auto status = catalog_.indices_of(DeviceKind::StatusBits);
  std::vector<std::pair<std::size_t, double>> coupled;
  for (auto r : readings)
    if (devices_[r].beam_coupled)
      coupled.emplace_back(r, -config_.beam_coupled_drop * devices_[r].sigma);

  std::bernoulli_distribution abrupt(config_.abrupt_fraction);
  std::uniform_int_distribution<std::int64_t> onset(0, config_.bit_onset_max_ticks);
  for (std::int64_t i = 0; i < n_outages; ++i) {
    std::uniform_int_distribution<std::size_t> pick_template(0, config_.templates.size() - 1);
    const auto ti = pick_template(rng);
    const auto& tmpl = config_.templates[ti];
    const bool is_abrupt = abrupt(rng);
    const auto duration = log_uniform(rng, tmpl.min_duration_ticks, tmpl.max_duration_ticks);
    const auto drop = place(duration);

    EventRealization ev;
    ev.drop_tick = drop;
    ev.duration_ticks = duration;
    ev.lead_ticks = is_abrupt ? 0 : tmpl.precursor_lead_ticks;
    ev.shape = tmpl.precursor_shape;
    for (std::size_t k = 0; k < tmpl.affected_readings.size(); ++k) {
      const auto dev = readings[tmpl.affected_readings[k]];
      const double sigma = devices_[dev].sigma;
      const double sign = (k + static_cast<std::size_t>(tmpl.label)) % 2 == 0 ? 1.0 : -1.0;
      ev.affected.push_back(
          {dev, config_.precursor_amplitude * sigma, sign * config_.trip_amplitude * sigma});
    }
    ev.beam_coupled = coupled;
    for (const auto& b : tmpl.bit_signature) ev.bits.emplace_back(status[b.status_device], b.mask);
    ev.bit_onset_ticks = onset(rng);
    ev.noise_seed = derive_seed(config_.seed, {kEventStream, static_cast<std::uint64_t>(i)});

    TruthEvent te;
    te.event.start_tick = drop;
    te.event.duration_ticks = duration;
    te.event.label = tmpl.label;
    if (!tmpl.raw_labels.empty()) {
      std::uniform_int_distribution<std::size_t> pick_label(0, tmpl.raw_labels.size() - 1);
      te.event.raw_label = tmpl.raw_labels[pick_label(rng)];
    }
    te.precursor_lead_ticks = ev.lead_ticks;
    te.precursor_shape = tmpl.precursor_shape;
    for (const auto& a : ev.affected) te.affected_devices.push_back(a.device);
    te.template_index = ti;
    truth_.events.push_back(std::move(te));
    realizations_.push_back(std::move(ev));
  }

  std::uniform_int_distribution<std::int64_t> fl_dur(config_.fluctuation_min_ticks,
                                                      config_.fluctuation_max_ticks);
  for (std::int64_t i = 0; i < n_fluct; ++i) {
    const auto duration = fl_dur(rng);
    const auto drop = place(duration);
    EventRealization ev;
    ev.drop_tick = drop;
    ev.duration_ticks = duration;
    ev.beam_coupled = coupled;
    truth_.fluctuations.push_back({drop, duration});
    realizations_.push_back(std::move(ev));
  }

  std::sort(truth_.events.begin(), truth_.events.end(), [](const auto& a, const auto& b) {
    return a.event.start_tick < b.event.start_tick;
  });
  std::sort(truth_.fluctuations.begin(), truth_.fluctuations.end(),
            [](const auto& a, const auto& b) { return a.start_tick < b.start_tick; });
  std::sort(realizations_.begin(), realizations_.end(),
            [](const auto& a, const auto& b) { return a.drop_tick < b.drop_tick; });
}

HourFrame CorpusGenerator::hour(int index) const {
  if (index < 0 || index >= config_.hours)
    throw Error(ErrorCode::Bounds, "hour index " + std::to_string(index) + " out of range");
  const auto n = static_cast<std::uint32_t>(kTicksPerHour);
  HourFrame frame(catalog_, config_.start_time + static_cast<std::uint64_t>(index) * 3600, n);
  const std::int64_t start_tick = static_cast<std::int64_t>(index) * kTicksPerHour;

  std::mt19937_64 rng(derive_seed(config_.seed, {kHourStream, static_cast<std::uint64_t>(index)}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::poisson_distribution<int> chatter_events(kChatterEventsPerHour);
  std::uniform_int_distribution<std::uint32_t> any_tick(0, n - 1);
  const double phi = config_.noise.ar_coefficient;

  for (std::size_t d = 0; d < catalog_.size(); ++d) {
    const auto& m = devices_[d];
    auto col = frame.column(d);
    switch (catalog_.devices[d].kind) {
      case DeviceKind::Reading: {
        double x = m.sigma * gauss(rng);
        const double innovation = config_.noise.amplitude * m.scale;
        for (std::uint32_t t = 0; t < n; ++t) {
          const double g = static_cast<double>(start_tick + t);
          const double wave =
              m.sin_amplitude * std::sin(2.0 * std::numbers::pi * g / m.sin_period_ticks + m.sin_phase);
          col[t] = static_cast<float>(m.level + wave + x);
          x = phi * x + innovation * gauss(rng);
        }
        break;
      }
      case DeviceKind::Setting: {
        std::fill(col.begin(), col.end(), static_cast<float>(m.level));
        if (unit(rng) < kSettingStepProbability) {
          const auto at = any_tick(rng);
          const double step = m.scale * gauss(rng);
          for (std::uint32_t t = at; t < n; ++t) col[t] = static_cast<float>(m.level + step);
        }
        break;
      }
      case DeviceKind::StatusBits: {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> toggles;
        const int count = chatter_events(rng);
        for (int i = 0; i < count; ++i) {
          const auto bit = 8u + static_cast<std::uint32_t>(unit(rng) * 4.0);
          toggles.emplace_back(any_tick(rng), 1u << std::min(bit, 11u));
        }
        std::sort(toggles.begin(), toggles.end());
        std::uint32_t state = m.status_base;
        std::size_t next = 0;
        for (std::uint32_t t = 0; t < n; ++t) {
          while (next < toggles.size() && toggles[next].first == t) state ^= toggles[next++].second;
          col[t] = static_cast<float>(state);
        }
        break;
      }
      case DeviceKind::Permit:
        std::fill(col.begin(), col.end(), 1.0f);
        break;
    }
  }

  // Sparse missing samples on analogue channels; preprocessing fills them.
  for (std::size_t d = 0; d < catalog_.size(); ++d) {
    const auto kind = catalog_.devices[d].kind;
    if (kind != DeviceKind::Reading && kind != DeviceKind::Setting) continue;
    std::poisson_distribution<int> missing(kMissingRate * n);
    const int count = missing(rng);
    for (int i = 0; i < count; ++i) frame.at(any_tick(rng), d) = std::numeric_limits<float>::quiet_NaN();
  }

  const std::int64_t end_tick = start_tick + n;
  for (const auto& ev : realizations_) {
    if (ev.drop_tick - ev.lead_ticks >= end_tick) break;
    if (ev.drop_tick + ev.duration_ticks <= start_tick) continue;
    apply_event(frame, start_tick, ev);
  }
  return frame;
}

Corpus generate_corpus(const SynthConfig& config) {
  CorpusGenerator gen(config);
  Corpus corpus;
  corpus.truth = gen.truth();
  corpus.frames.reserve(static_cast<std::size_t>(gen.hours()));
  for (int h = 0; h < gen.hours(); ++h) corpus.frames.push_back(gen.hour(h));
  return corpus;
}

GroundTruth write_corpus(const SynthConfig& config, const std::filesystem::path& dir) {
  CorpusGenerator gen(config);
  std::filesystem::create_directories(dir);
  char name[32];
  for (int h = 0; h < gen.hours(); ++h) {
    std::snprintf(name, sizeof name, "hour_%05d.fhf", h);
    save_hour_frame(gen.hour(h), dir / name);
  }
  save_json(to_json(gen.truth()), dir / "truth.json");
  return gen.truth();
}

}  // namespace ps::synth
