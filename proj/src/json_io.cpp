#include "ps/json_io.hpp"

#include <fstream>

namespace ps {

void save_json(const Json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

const Json& require(const Json& doc, const char* field) {
  if (!doc.is_object() || !doc.contains(field))
    throw Error(ErrorCode::Format, std::string("missing JSON field '") + field + "'");
  return doc.at(field);
}

Json to_json(const OutageEvent& e) {
  Json j;
  j["start_tick"] = e.start_tick;
  j["duration_ticks"] = e.duration_ticks;
  j["raw_label"] = e.raw_label ? Json(*e.raw_label) : Json(nullptr);
  j["class"] = e.label ? Json(std::string(to_string(*e.label))) : Json(nullptr);
  j["confidence"] = e.confidence ? Json(*e.confidence) : Json(nullptr);
  return j;
}

OutageEvent outage_event_from_json(const Json& j) {
  OutageEvent e;
  e.start_tick = require(j, "start_tick").get<std::int64_t>();
  e.duration_ticks = require(j, "duration_ticks").get<std::int64_t>();
  if (j.contains("raw_label") && !j["raw_label"].is_null())
    e.raw_label = j["raw_label"].get<std::string>();
  if (j.contains("class") && !j["class"].is_null()) {
    e.label = label_class_from_string(j["class"].get<std::string>());
    if (!e.label) throw Error(ErrorCode::Format, "unknown outage class in JSON");
  }
  if (j.contains("confidence") && !j["confidence"].is_null())
    e.confidence = j["confidence"].get<double>();
  return e;
}

Json to_json(const DeviceCatalog& c) {
  Json devices = Json::array();
  for (const auto& d : c.devices)
    devices.push_back({{"name", d.name}, {"kind", std::string(to_string(d.kind))}});
  return {{"tick_rate_hz", c.tick_rate_hz}, {"devices", devices}};
}

DeviceCatalog catalog_from_json(const Json& j) {
  DeviceCatalog c;
  c.tick_rate_hz = require(j, "tick_rate_hz").get<std::uint32_t>();
  for (const auto& d : require(j, "devices")) {
    const auto kind = require(d, "kind").get<std::string>();
    DeviceSpec spec{require(d, "name").get<std::string>(), DeviceKind::Reading};
    if (kind == "reading") spec.kind = DeviceKind::Reading;
    else if (kind == "setting") spec.kind = DeviceKind::Setting;
    else if (kind == "status") spec.kind = DeviceKind::StatusBits;
    else if (kind == "permit") spec.kind = DeviceKind::Permit;
    else throw Error(ErrorCode::Format, "unknown device kind '" + kind + "'");
    c.devices.push_back(std::move(spec));
  }
  return c;
}

Json to_json(const synth::GroundTruth& truth) {
  Json events = Json::array();
  for (const auto& te : truth.events) {
    Json e = to_json(te.event);
    e["precursor_lead_ticks"] = te.precursor_lead_ticks;
    e["precursor_shape"] = std::string(synth::to_string(te.precursor_shape));
    e["affected_devices"] = te.affected_devices;
    e["template_index"] = te.template_index;
    events.push_back(std::move(e));
  }
  Json fluct = Json::array();
  for (const auto& f : truth.fluctuations)
    fluct.push_back({{"start_tick", f.start_tick}, {"duration_ticks", f.duration_ticks}});
  return {{"version", kSchemaVersion},
          {"tick_rate_hz", truth.tick_rate_hz},
          {"events", events},
          {"fluctuations", fluct}};
}

synth::GroundTruth ground_truth_from_json(const Json& j) {
  synth::GroundTruth truth;
  truth.tick_rate_hz = j.value("tick_rate_hz", kDefaultTickRate);
  for (const auto& e : require(j, "events")) {
    synth::TruthEvent te;
    te.event = outage_event_from_json(e);
    te.precursor_lead_ticks = e.value("precursor_lead_ticks", std::int64_t{0});
    te.precursor_shape = synth::precursor_shape_from_string(e.value("precursor_shape", "ramp"));
    te.affected_devices = e.value("affected_devices", std::vector<std::size_t>{});
    te.template_index = e.value("template_index", std::size_t{0});
    truth.events.push_back(std::move(te));
  }
  if (j.contains("fluctuations"))
    for (const auto& f : j["fluctuations"])
      truth.fluctuations.push_back(
          {require(f, "start_tick").get<std::int64_t>(), require(f, "duration_ticks").get<std::int64_t>()});
  return truth;
}

namespace {

Json template_to_json(const synth::FaultTemplate& t) {
  Json bits = Json::array();
  for (const auto& b : t.bit_signature) bits.push_back({{"status_device", b.status_device}, {"mask", b.mask}});
  return {{"class", std::string(to_string(t.label))},
          {"precursor_lead_ticks", t.precursor_lead_ticks},
          {"affected_readings", t.affected_readings},
          {"precursor_shape", std::string(synth::to_string(t.precursor_shape))},
          {"bit_signature", bits},
          {"min_duration_ticks", t.min_duration_ticks},
          {"max_duration_ticks", t.max_duration_ticks},
          {"raw_labels", t.raw_labels}};
}

synth::FaultTemplate template_from_json(const Json& j) {
  synth::FaultTemplate t;
  const auto cls = label_class_from_string(require(j, "class").get<std::string>());
  if (!cls) throw Error(ErrorCode::Config, "unknown template class");
  t.label = *cls;
  t.precursor_lead_ticks = j.value("precursor_lead_ticks", std::int64_t{0});
  t.affected_readings = j.value("affected_readings", std::vector<std::size_t>{});
  t.precursor_shape = synth::precursor_shape_from_string(j.value("precursor_shape", "ramp"));
  if (j.contains("bit_signature"))
    for (const auto& b : j["bit_signature"])
      t.bit_signature.push_back(
          {require(b, "status_device").get<std::size_t>(), require(b, "mask").get<std::uint32_t>()});
  t.min_duration_ticks = j.value("min_duration_ticks", kMinOutageTicks);
  t.max_duration_ticks = j.value("max_duration_ticks", std::int64_t{1800});
  t.raw_labels = j.value("raw_labels", std::vector<std::string>{});
  return t;
}

}  // namespace

Json to_json(const synth::SynthConfig& c) {
  Json templates = Json::array();
  for (const auto& t : c.templates) templates.push_back(template_to_json(t));
  return {{"version", kSchemaVersion},
          {"n_reading", c.n_reading},
          {"n_setting", c.n_setting},
          {"n_status", c.n_status},
          {"n_permit", c.n_permit},
          {"hours", c.hours},
          {"outage_rate_per_hour", c.outage_rate_per_hour},
          {"fluctuation_rate_per_hour", c.fluctuation_rate_per_hour},
          {"templates", templates},
          {"noise", {{"ar_coefficient", c.noise.ar_coefficient}, {"amplitude", c.noise.amplitude}}},
          {"seed", c.seed},
          {"start_time", c.start_time},
          {"abrupt_fraction", c.abrupt_fraction},
          {"precursor_amplitude", c.precursor_amplitude},
          {"trip_amplitude", c.trip_amplitude},
          {"sinusoid_amplitude", c.sinusoid_amplitude},
          {"beam_coupled_fraction", c.beam_coupled_fraction},
          {"beam_coupled_drop", c.beam_coupled_drop},
          {"bit_onset_max_ticks", c.bit_onset_max_ticks},
          {"fluctuation_min_ticks", c.fluctuation_min_ticks},
          {"fluctuation_max_ticks", c.fluctuation_max_ticks}};
}

synth::SynthConfig synth_config_from_json(const Json& j) {
  synth::SynthConfig c = synth::default_config();
  if (!j.is_object()) throw Error(ErrorCode::Config, "synth config must be a JSON object");
  try {
    c.n_reading = j.value("n_reading", c.n_reading);
    c.n_setting = j.value("n_setting", c.n_setting);
    c.n_status = j.value("n_status", c.n_status);
    c.n_permit = j.value("n_permit", c.n_permit);
    c.hours = j.value("hours", c.hours);
    c.outage_rate_per_hour = j.value("outage_rate_per_hour", c.outage_rate_per_hour);
    c.fluctuation_rate_per_hour = j.value("fluctuation_rate_per_hour", c.fluctuation_rate_per_hour);
    if (j.contains("templates")) {
      c.templates.clear();
      for (const auto& t : j["templates"]) c.templates.push_back(template_from_json(t));
    }
    if (j.contains("noise")) {
      c.noise.ar_coefficient = j["noise"].value("ar_coefficient", c.noise.ar_coefficient);
      c.noise.amplitude = j["noise"].value("amplitude", c.noise.amplitude);
    }
    c.seed = j.value("seed", c.seed);
    c.start_time = j.value("start_time", c.start_time);
    c.abrupt_fraction = j.value("abrupt_fraction", c.abrupt_fraction);
    c.precursor_amplitude = j.value("precursor_amplitude", c.precursor_amplitude);
    c.trip_amplitude = j.value("trip_amplitude", c.trip_amplitude);
    c.sinusoid_amplitude = j.value("sinusoid_amplitude", c.sinusoid_amplitude);
    c.beam_coupled_fraction = j.value("beam_coupled_fraction", c.beam_coupled_fraction);
    c.beam_coupled_drop = j.value("beam_coupled_drop", c.beam_coupled_drop);
    c.bit_onset_max_ticks = j.value("bit_onset_max_ticks", c.bit_onset_max_ticks);
    c.fluctuation_min_ticks = j.value("fluctuation_min_ticks", c.fluctuation_min_ticks);
    c.fluctuation_max_ticks = j.value("fluctuation_max_ticks", c.fluctuation_max_ticks);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ps
