#include "ps/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ps/hour_frame_io.hpp"
#include "ps/json_io.hpp"
#include "ps/rng.hpp"

namespace ps::dataset {

std::string_view to_string(InstanceKind k) {
  return k == InstanceKind::Outage ? "outage" : "non_outage";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::size_t default_permit_device(const DeviceCatalog& catalog) {
  const auto permits = catalog.indices_of(DeviceKind::Permit);
  if (permits.empty()) throw Error(ErrorCode::Invariant, "catalog has no permit device");
  return permits.front();
}

namespace {

bool permit_up(float v) { return v >= 0.5f; }

std::string make_id(InstanceKind kind, std::int64_t global_start) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%010lld", kind == InstanceKind::Outage ? "o" : "n",
                static_cast<long long>(global_start));
  return buf;
}

}  // namespace

InstanceExtractor::InstanceExtractor(std::optional<std::size_t> permit_device)
    : permit_device_(permit_device) {}

const InstanceExtractor::Held& InstanceExtractor::holder(std::int64_t global) const {
  for (const auto& h : held_)
    if (global >= h.global_start && global < h.global_start + h.frame.n_ticks) return h;
  throw Error(ErrorCode::Bounds, "tick " + std::to_string(global) + " is no longer buffered");
}

float InstanceExtractor::permit_at(std::int64_t global) const {
  const auto& h = holder(global);
  return h.frame.at(static_cast<std::size_t>(global - h.global_start), permit_);
}

void InstanceExtractor::push(const HourFrame& frame, std::string source_name) {
  if (!held_.empty()) {
    const auto& last = held_.back().frame;
    if (!(last.catalog == frame.catalog))
      throw Error(ErrorCode::Gap, "frame catalog differs from the previous frame");
    const auto rate = std::uint64_t{frame.catalog.tick_rate_hz};
    if (frame.start_time * rate != last.start_time * rate + last.n_ticks)
      throw Error(ErrorCode::Gap, "frame starting at " + std::to_string(frame.start_time) +
                                      " does not continue the previous frame");
  } else {
    permit_ = permit_device_ ? *permit_device_ : default_permit_device(frame.catalog);
    if (permit_ >= frame.n_devices() || frame.catalog.devices[permit_].kind != DeviceKind::Permit)
      throw Error(ErrorCode::Invariant, "designated permit device is not a Permit column");
  }
  if (source_name.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "hour_%05zu.fhf", held_.size());
    source_name = buf;
  }
  held_.push_back({frame, std::move(source_name), total_ticks_});
  const auto& held = held_.back();
  const std::int64_t begin = held.global_start;
  total_ticks_ += frame.n_ticks;

  for (std::int64_t t = std::max<std::int64_t>(begin, 1); t < total_ticks_; ++t) {
    const float prev = t == begin ? permit_at(t - 1) : held.frame.at(t - 1 - begin, permit_);
    const float cur = held.frame.at(static_cast<std::size_t>(t - begin), permit_);
    if (permit_up(prev) && !permit_up(cur)) pending_drops_.push_back(t);
  }
  resolve_pending();
  crop_non_outage(held);
  trim();
}

void InstanceExtractor::resolve_pending() {
  std::vector<std::int64_t> still_pending;
  for (auto drop : pending_drops_) {
    if (drop + kPostDropTicks > total_ticks_) {
      still_pending.push_back(drop);
      continue;
    }
    bool long_enough = true;
    for (std::int64_t t = drop; t < drop + kMinOutageTicks && long_enough; ++t)
      long_enough = !permit_up(permit_at(t));
    if (!long_enough || drop < kPreDropTicks) continue;
    auto inst = crop(drop - kPreDropTicks, InstanceKind::Outage);
    inst.drop_offset = kPreDropTicks;
    inst.source_file = holder(drop).name;
    outages_.push_back(std::move(inst));
  }
  pending_drops_ = std::move(still_pending);
}

void InstanceExtractor::crop_non_outage(const Held& held) {
  const auto n = static_cast<std::int64_t>(held.frame.n_ticks);
  std::int64_t run_start = -1;
  for (std::int64_t t = 0; t <= n; ++t) {
    const bool up = t < n && permit_up(held.frame.at(static_cast<std::size_t>(t), permit_));
    if (up && run_start < 0) run_start = t;
    if (!up && run_start >= 0) {
      if (t - run_start >= kNonOutageMinRunTicks) {
        auto inst = crop(held.global_start + run_start + kNonOutageOffsetTicks, InstanceKind::NonOutage);
        inst.source_file = held.name;
        non_outages_.push_back(std::move(inst));
        return;  // at most one per file
      }
      run_start = -1;
    }
  }
}

Instance InstanceExtractor::crop(std::int64_t global_start, InstanceKind kind) const {
  const auto& first = holder(global_start);
  Instance inst;
  inst.kind = kind;
  inst.global_start = global_start;
  inst.id = make_id(kind, global_start);
  inst.permit_device = permit_;
  const auto rate = first.frame.catalog.tick_rate_hz;
  inst.frame = HourFrame(first.frame.catalog,
                         first.frame.start_time +
                             static_cast<std::uint64_t>((global_start - first.global_start) / rate),
                         static_cast<std::uint32_t>(kInstanceTicks));
  for (std::int64_t k = 0; k < kInstanceTicks; ++k) {
    const auto& h = holder(global_start + k);
    const auto local = static_cast<std::size_t>(global_start + k - h.global_start);
    for (std::size_t d = 0; d < inst.frame.n_devices(); ++d)
      inst.frame.at(static_cast<std::size_t>(k), d) = h.frame.at(local, d);
  }
  return inst;
}

void InstanceExtractor::trim() {
  std::int64_t needed = total_ticks_ - kPreDropTicks;
  for (auto d : pending_drops_) needed = std::min(needed, d - kPreDropTicks);
  while (held_.size() > 1 && held_.front().global_start + held_.front().frame.n_ticks <= needed)
    held_.pop_front();
}

void InstanceExtractor::finish() { pending_drops_.clear(); }

std::vector<Instance> InstanceExtractor::take_outages() { return std::exchange(outages_, {}); }
std::vector<Instance> InstanceExtractor::take_non_outages() { return std::exchange(non_outages_, {}); }

std::vector<Instance> extract_outage_instances(std::span<const HourFrame> frames,
                                               std::optional<std::size_t> permit_device) {
  InstanceExtractor ex(permit_device);
  for (const auto& f : frames) ex.push(f);
  ex.finish();
  return ex.take_outages();
}

std::vector<Instance> extract_nonoutage_instances(std::span<const HourFrame> frames,
                                                  std::optional<std::size_t> permit_device) {
  InstanceExtractor ex(permit_device);
  for (const auto& f : frames) ex.push(f);
  ex.finish();
  return ex.take_non_outages();
}

void attach_labels(std::vector<Instance>& instances, const synth::GroundTruth& truth) {
  for (auto& inst : instances) {
    if (inst.kind != InstanceKind::Outage || !inst.drop_offset) continue;
    const auto drop = inst.global_start + *inst.drop_offset;
    const auto it = std::lower_bound(
        truth.events.begin(), truth.events.end(), drop,
        [](const synth::TruthEvent& e, std::int64_t tick) { return e.event.start_tick < tick; });
    if (it == truth.events.end() || it->event.start_tick != drop) continue;
    if (it->event.raw_label) {
      inst.raw_label = it->event.raw_label;
      inst.label = canonicalize_label(*it->event.raw_label);
    } else {
      inst.label = it->event.label;
    }
  }
}

void Geometry::validate(std::int64_t length) const {
  if (lookback < 1) throw Error(ErrorCode::Geometry, "look-back must be >= 1 tick");
  if (horizon < 1) throw Error(ErrorCode::Geometry, "look-forward window must be >= 1 tick");
  if (gap < 0) throw Error(ErrorCode::Geometry, "gap must be >= 0");
  if (stride < 1) throw Error(ErrorCode::Geometry, "stride must be >= 1");
  if (span() > length)
    throw Error(ErrorCode::Geometry, "look-back + gap + look-forward (" + std::to_string(span()) +
                                         ") exceeds " + std::to_string(length) + " ticks");
}

std::int64_t Geometry::window_count(std::int64_t length) const {
  validate(length);
  return (length - span()) / stride + 1;
}

std::vector<WindowSample> make_windows(const Instance& instance, const Geometry& g) {
  const auto count = g.window_count(instance.length());
  const auto readings = instance.frame.catalog.indices_of(DeviceKind::Reading);
  const auto& f = instance.frame;
  std::vector<WindowSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    WindowSample w;
    w.geometry = g;
    w.start = i * g.stride;
    w.n_features = readings.size();
    w.lookback.resize(static_cast<std::size_t>(g.lookback) * readings.size());
    for (int t = 0; t < g.lookback; ++t)
      for (std::size_t r = 0; r < readings.size(); ++r)
        w.lookback[static_cast<std::size_t>(t) * readings.size() + r] =
            f.at(static_cast<std::size_t>(w.start + t), readings[r]);
    const auto target_start = w.start + g.lookback + g.gap;
    w.target.resize(static_cast<std::size_t>(g.horizon));
    for (int k = 0; k < g.horizon; ++k)
      w.target[static_cast<std::size_t>(k)] =
          f.at(static_cast<std::size_t>(target_start + k), instance.permit_device);
    w.reference_permit = f.at(static_cast<std::size_t>(target_start - 1), instance.permit_device);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<WindowSample> make_windows(std::span<const Instance> instances, const Geometry& g) {
  std::vector<WindowSample> out;
  for (const auto& inst : instances) {
    auto w = make_windows(inst, g);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

std::optional<Split> SplitManifest::split_of(std::string_view id) const {
  for (const auto& [name, split] : assignments)
    if (name == id) return split;
  return std::nullopt;
}

SplitManifest split_instances(std::span<const Instance> instances, const SplitFractions& fr,
                              std::uint64_t seed) {
  if (instances.empty()) throw Error(ErrorCode::Invariant, "cannot split an empty instance list");
  if (fr.train < 0 || fr.val < 0 || fr.test < 0 || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9)
    throw Error(ErrorCode::Config, "split fractions must be non-negative and sum to 1");

  SplitManifest m;
  m.seed = seed;
  std::vector<Split> assignment(instances.size(), Split::Train);
  const double fractions[3] = {fr.train, fr.val, fr.test};
  for (auto kind : {InstanceKind::Outage, InstanceKind::NonOutage}) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (instances[i].kind != kind) continue;
      std::uint64_t h = derive_seed(seed, {0x5B11});
      for (char c : instances[i].id) h = splitmix64(h ^ static_cast<unsigned char>(c));
      keyed.emplace_back(h, i);
    }
    std::sort(keyed.begin(), keyed.end());
    const auto n = keyed.size();
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = fractions[s] * static_cast<double>(n);
      quota[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      remainder[s] = exact - static_cast<double>(quota[s]);
      assigned += quota[s];
    }
    while (assigned < n) {
      const auto best = static_cast<std::size_t>(
          std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
      ++quota[best];
      remainder[best] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < quota[s]; ++k) assignment[keyed[pos++].second] = static_cast<Split>(s);
    m.counts[static_cast<int>(kind)] = quota;
  }
  for (std::size_t i = 0; i < instances.size(); ++i) m.assignments.emplace_back(instances[i].id, assignment[i]);
  return m;
}

std::vector<Instance> select(std::span<const Instance> instances, const SplitManifest& manifest,
                             Split split) {
  std::vector<Instance> out;
  for (const auto& inst : instances)
    if (manifest.split_of(inst.id) == split) out.push_back(inst);
  return out;
}

nlohmann::json to_json(const SplitManifest& m) {
  Json assignments = Json::object();
  for (const auto& [id, s] : m.assignments) assignments[id] = std::string(to_string(s));
  Json counts = Json::object();
  for (auto kind : {InstanceKind::Outage, InstanceKind::NonOutage}) {
    const auto& c = m.counts[static_cast<int>(kind)];
    counts[std::string(to_string(kind))] = {{"train", c[0]}, {"val", c[1]}, {"test", c[2]}};
  }
  Json order = Json::array();
  for (const auto& a : m.assignments) order.push_back(a.first);
  return {{"version", kSchemaVersion}, {"seed", m.seed}, {"order", order},
          {"assignments", assignments}, {"counts", counts}};
}

SplitManifest manifest_from_json(const nlohmann::json& j) {
  SplitManifest m;
  m.seed = require(j, "seed").get<std::uint64_t>();
  const auto& assignments = require(j, "assignments");
  for (const auto& id : require(j, "order")) {
    const auto name = id.get<std::string>();
    const auto s = require(assignments, name.c_str()).get<std::string>();
    Split split = s == "train" ? Split::Train : s == "val" ? Split::Val : Split::Test;
    if (s != "train" && s != "val" && s != "test") throw Error(ErrorCode::Format, "unknown split " + s);
    m.assignments.emplace_back(name, split);
  }
  const auto& counts = require(j, "counts");
  for (auto kind : {InstanceKind::Outage, InstanceKind::NonOutage}) {
    const auto& c = require(counts, std::string(to_string(kind)).c_str());
    m.counts[static_cast<int>(kind)] = {c.at("train").get<std::size_t>(), c.at("val").get<std::size_t>(),
                                        c.at("test").get<std::size_t>()};
  }
  return m;
}

void save_instances(std::span<const Instance> instances, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json index = Json::array();
  for (const auto& inst : instances) {
    const auto file = "inst_" + inst.id + ".fhf";
    save_hour_frame(inst.frame, dir / file);
    Json e = {{"id", inst.id},
              {"kind", std::string(to_string(inst.kind))},
              {"file", file},
              {"source_file", inst.source_file},
              {"global_start", inst.global_start},
              {"permit_device", inst.permit_device}};
    e["drop_offset"] = inst.drop_offset ? Json(*inst.drop_offset) : Json(nullptr);
    e["class"] = inst.label ? Json(std::string(to_string(*inst.label))) : Json(nullptr);
    e["raw_label"] = inst.raw_label ? Json(*inst.raw_label) : Json(nullptr);
    index.push_back(std::move(e));
  }
  save_json({{"version", kSchemaVersion}, {"instances", index}}, dir / "instances.json");
}

std::vector<Instance> load_instances(const std::filesystem::path& dir) {
  const auto index = load_json(dir / "instances.json");
  std::vector<Instance> out;
  for (const auto& e : require(index, "instances")) {
    Instance inst;
    inst.id = require(e, "id").get<std::string>();
    const auto kind = require(e, "kind").get<std::string>();
    inst.kind = kind == "outage" ? InstanceKind::Outage : InstanceKind::NonOutage;
    inst.frame = load_hour_frame(dir / require(e, "file").get<std::string>());
    inst.source_file = e.value("source_file", "");
    inst.global_start = e.value("global_start", std::int64_t{0});
    inst.permit_device = e.contains("permit_device") ? e["permit_device"].get<std::size_t>()
                                                     : default_permit_device(inst.frame.catalog);
    if (e.contains("drop_offset") && !e["drop_offset"].is_null())
      inst.drop_offset = e["drop_offset"].get<std::int64_t>();
    if (e.contains("class") && !e["class"].is_null())
      inst.label = label_class_from_string(e["class"].get<std::string>());
    if (e.contains("raw_label") && !e["raw_label"].is_null())
      inst.raw_label = e["raw_label"].get<std::string>();
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace ps::dataset
