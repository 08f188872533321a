#include "ps/detect.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "ps/error.hpp"

namespace ps::detect {

using nlohmann::json;

std::vector<std::vector<double>> ModelForecaster::predict(std::span<const WindowSample> windows) const {
  return forecast::forward_batch(model_, windows);
}

std::vector<std::vector<double>> OracleForecaster::predict(std::span<const WindowSample> windows) const {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (const auto& w : windows)
    out.emplace_back(static_cast<std::size_t>(w.geometry.horizon), w.reference_permit);
  return out;
}

std::vector<std::vector<double>> ConstantForecaster::predict(std::span<const WindowSample> windows) const {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.emplace_back(static_cast<std::size_t>(w.geometry.horizon), value_);
  return out;
}

double detection_statistic(std::span<const double> forecast, bool logits) {
  if (forecast.empty()) throw Error(ErrorCode::Shape, "empty forecast");
  double m = *std::min_element(forecast.begin(), forecast.end());
  if (logits) return 1.0 / (1.0 + std::exp(-m));  // logistic is monotone, so min commutes
  return std::clamp(m, 0.0, 1.0);
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Early: return "early";
    case Outcome::Late: return "late";
    case Outcome::Missed: return "missed";
  }
  return "?";
}

namespace {

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw Error(ErrorCode::Config, "threshold must lie in (0, 1)");
}

}  // namespace

InstanceResult detect_on_instance(const Forecaster& model, const Instance& instance, const Geometry& geometry,
                                  double threshold) {
  check_threshold(threshold);
  Geometry g = geometry;
  g.stride = 1;
  g.validate(instance.length());
  const auto windows = dataset::make_windows(instance, g);
  const auto forecasts = model.predict(windows);
  if (forecasts.size() != windows.size()) throw Error(ErrorCode::Shape, "forecaster returned wrong batch size");

  InstanceResult r;
  r.kind = instance.kind;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& f = forecasts[i];
    const auto& t = windows[i].target;
    if (f.size() != t.size()) throw Error(ErrorCode::Shape, "forecast length differs from horizon");
    for (std::size_t k = 0; k < f.size(); ++k) r.squared_error += (f[k] - t[k]) * (f[k] - t[k]);
    r.n_values += f.size();
    if (!r.first_alarm_tick && detection_statistic(f, model.emits_logits()) < threshold)
      r.first_alarm_tick = windows[i].lookback_end();
  }

  if (instance.kind == dataset::InstanceKind::Outage) {
    if (!instance.drop_offset) throw Error(ErrorCode::Invariant, "outage instance without drop offset");
    Detection d;
    if (r.first_alarm_tick) {
      d.detect_tick = r.first_alarm_tick;
      const auto diff = *r.first_alarm_tick - *instance.drop_offset;
      d.time_diff_s = static_cast<double>(diff) / static_cast<double>(instance.frame.catalog.tick_rate_hz);
      d.outcome = diff < 0 ? Outcome::Early : Outcome::Late;
    }
    r.detection = d;
  } else {
    r.false_positive = r.first_alarm_tick.has_value();
  }
  return r;
}

bool DetectionReport::counters_consistent() const {
  return n_detected == n_early + n_late && n_outages == n_detected + false_negatives &&
         false_positives <= n_non_outages;
}

DetectionReport evaluate(const Forecaster& model, std::span<const Instance> instances, const Geometry& geometry,
                         double threshold) {
  if (instances.empty()) throw Error(ErrorCode::Invariant, "evaluation needs a non-empty test set");
  check_threshold(threshold);

  std::vector<InstanceResult> results(instances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      try {
        results[i] = detect_on_instance(model, instances[i], geometry, threshold);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n_threads =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), instances.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  // Merge in input order so the floating-point sums do not depend on scheduling.
  DetectionReport rep;
  rep.threshold = threshold;
  double sq = 0.0, diff_sum = 0.0;
  std::size_t n_values = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& r = results[i];
    sq += r.squared_error;
    n_values += r.n_values;
    if (r.kind == dataset::InstanceKind::NonOutage) {
      ++rep.n_non_outages;
      if (r.false_positive) ++rep.false_positives;
      continue;
    }
    ++rep.n_outages;
    const auto& d = *r.detection;
    ClassRate* cls = instances[i].label ? &rep.per_class[*instances[i].label] : nullptr;
    if (cls) ++cls->n;
    if (d.outcome == Outcome::Missed) {
      ++rep.false_negatives;
      continue;
    }
    ++rep.n_detected;
    diff_sum += d.time_diff_s;
    if (cls) ++cls->n_detected;
    if (d.outcome == Outcome::Early) {
      ++rep.n_early;
      if (cls) ++cls->n_early;
    } else {
      ++rep.n_late;
    }
  }
  rep.mse_test = n_values ? sq / static_cast<double>(n_values) : 0.0;
  if (rep.n_detected) rep.mean_time_diff_s = diff_sum / static_cast<double>(rep.n_detected);
  return rep;
}

json to_json(const DetectionReport& r) {
  json per_class = json::object();
  for (const auto& [cls, rate] : r.per_class)
    per_class[std::string(to_string(cls))] = {
        {"n", rate.n}, {"n_detected", rate.n_detected}, {"n_early", rate.n_early}, {"early_rate", rate.early_rate()}};
  return {{"version", 1},
          {"units", {{"mean_time_diff", "s"}, {"mse_test", "permit^2"}, {"threshold", "probability"}}},
          {"threshold", r.threshold},
          {"mse_test", r.mse_test},
          {"n_outages", r.n_outages},
          {"n_detected", r.n_detected},
          {"mean_time_diff_s", r.mean_time_diff_s ? json(*r.mean_time_diff_s) : json(nullptr)},
          {"n_early", r.n_early},
          {"n_late", r.n_late},
          {"false_negatives", r.false_negatives},
          {"n_non_outages", r.n_non_outages},
          {"false_positives", r.false_positives},
          {"per_class", per_class}};
}

DetectionReport detection_report_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::UnsupportedVersion, "report version");
    DetectionReport r;
    r.threshold = j.at("threshold").get<double>();
    r.mse_test = j.at("mse_test").get<double>();
    r.n_outages = j.at("n_outages").get<std::size_t>();
    r.n_detected = j.at("n_detected").get<std::size_t>();
    if (!j.at("mean_time_diff_s").is_null()) r.mean_time_diff_s = j.at("mean_time_diff_s").get<double>();
    r.n_early = j.at("n_early").get<std::size_t>();
    r.n_late = j.at("n_late").get<std::size_t>();
    r.false_negatives = j.at("false_negatives").get<std::size_t>();
    r.n_non_outages = j.at("n_non_outages").get<std::size_t>();
    r.false_positives = j.at("false_positives").get<std::size_t>();
    for (const auto& [name, v] : j.at("per_class").items()) {
      auto cls = label_class_from_string(name);
      if (!cls) throw Error(ErrorCode::Format, "unknown class in report: " + name);
      ClassRate rate;
      rate.n = v.at("n").get<std::size_t>();
      rate.n_detected = v.at("n_detected").get<std::size_t>();
      rate.n_early = v.at("n_early").get<std::size_t>();
      r.per_class[*cls] = rate;
    }
    if (!r.counters_consistent()) throw Error(ErrorCode::Format, "report counters are inconsistent");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed detection report: ") + e.what());
  }
}

std::string_view to_string(SweepKind k) {
  switch (k) {
    case SweepKind::Threshold: return "threshold";
    case SweepKind::Lookback: return "lookback";
    case SweepKind::Gap: return "gap";
    case SweepKind::Loss: return "loss";
  }
  return "?";
}

SweepKind sweep_kind_from_string(std::string_view s) {
  for (auto k : {SweepKind::Threshold, SweepKind::Lookback, SweepKind::Gap, SweepKind::Loss})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::Config, "unknown sweep kind: " + std::string(s));
}

std::unique_ptr<Forecaster> train_forecaster(const CellSetup& setup, const SweepBase& base) {
  if (setup.spec.kind == forecast::ModelKind::Persistence)
    return std::make_unique<ModelForecaster>(forecast::zero_model(setup.spec));
  Geometry g = setup.geometry;
  g.stride = base.train_stride;
  const auto train_w = dataset::make_windows(base.train_instances, g);
  const auto val_w = dataset::make_windows(base.val_instances, g);
  return std::make_unique<ModelForecaster>(forecast::train(setup.spec, train_w, val_w, setup.train));
}

namespace {

CellSetup cell_setup(SweepKind kind, const SweepValue& value, const SweepBase& base) {
  CellSetup c{base.spec, base.train, base.geometry};
  auto as_int = [&](const char* what) {
    const auto* v = std::get_if<double>(&value);
    if (!v || *v < 0 || *v != std::floor(*v)) throw Error(ErrorCode::Config, std::string("bad ") + what + " value");
    return static_cast<int>(*v);
  };
  switch (kind) {
    case SweepKind::Threshold: break;
    case SweepKind::Lookback: c.geometry.lookback = as_int("lookback"); break;
    case SweepKind::Gap: c.geometry.gap = as_int("gap"); break;
    case SweepKind::Loss: {
      const auto* l = std::get_if<forecast::LossKind>(&value);
      if (!l) throw Error(ErrorCode::Config, "loss sweep needs loss values");
      c.train.loss = *l;
      c.spec.head = *l == forecast::LossKind::BCEL ? forecast::OutputHead::Logits : forecast::OutputHead::Raw;
      break;
    }
  }
  c.spec.lookback = c.geometry.lookback;
  c.spec.gap = c.geometry.gap;
  c.spec.horizon = c.geometry.horizon;
  return c;
}

void record_history(SweepCell& cell, const Forecaster& f) {
  if (const auto* m = dynamic_cast<const ModelForecaster*>(&f)) cell.history = m->model().history;
}

}  // namespace

SweepReport sweep(SweepKind kind, std::span<const SweepValue> grid, const SweepBase& base,
                  const ForecasterFactory& factory) {
  if (grid.empty()) throw Error(ErrorCode::Config, "sweep grid is empty");
  if (base.test_instances.empty()) throw Error(ErrorCode::Invariant, "sweep needs test instances");
  SweepReport report(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    report[i].kind = kind;
    report[i].value = grid[i];
  }

  if (kind == SweepKind::Threshold) {
    std::unique_ptr<Forecaster> model;
    std::string build_error;
    try {
      model = factory(cell_setup(kind, grid[0], base), base);
    } catch (const std::exception& e) {
      build_error = e.what();
    }
    for (auto& cell : report) {
      if (!model) {
        cell.error = build_error;
        continue;
      }
      try {
        const auto* t = std::get_if<double>(&cell.value);
        if (!t) throw Error(ErrorCode::Config, "threshold sweep needs numeric values");
        cell.report = evaluate(*model, base.test_instances, base.geometry, *t);
        record_history(cell, *model);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
    return report;
  }

  // Cells are independent; each trains with the base seed, so results do not
  // depend on how many run at once.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.size(); i = next++) {
      auto& cell = report[i];
      try {
        const auto setup = cell_setup(kind, cell.value, base);
        const auto model = factory(setup, base);
        cell.report = evaluate(*model, base.test_instances, setup.geometry, base.threshold);
        record_history(cell, *model);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), report.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  return report;
}

json to_json(const SweepReport& r) {
  json cells = json::array();
  for (const auto& c : r) {
    json value = std::holds_alternative<double>(c.value)
                     ? json(std::get<double>(c.value))
                     : json(std::string(forecast::to_string(std::get<forecast::LossKind>(c.value))));
    json history = json::array();
    for (const auto& e : c.history)
      history.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"learning_rate", e.learning_rate}});
    cells.push_back({{"parameter", std::string(to_string(c.kind))},
                     {"value", value},
                     {"ok", c.ok},
                     {"error", c.ok ? json(nullptr) : json(c.error)},
                     {"report", c.report ? to_json(*c.report) : json(nullptr)},
                     {"epochs", c.history.size()},
                     {"history", history}});
  }
  return {{"version", 1}, {"cells", cells}};
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchReport bench(const forecast::ModelSpec& spec, std::span<const WindowSample> train_windows,
                  std::span<const WindowSample> instance_windows, const BenchOptions& options) {
  if (options.warmup < 3) throw Error(ErrorCode::Config, "bench needs at least 3 warm-up iterations");
  if (options.repetitions < 10) throw Error(ErrorCode::Config, "bench needs at least 10 repetitions");
  if (instance_windows.empty()) throw Error(ErrorCode::Invariant, "bench needs instance windows");
  spec.validate();
  using clock = std::chrono::steady_clock;

  BenchReport rep;
  const auto model = forecast::init_model(spec, options.seed);
  rep.n_parameters = forecast::param_count(spec);
  rep.model_size_bytes = forecast::encode_model(model).size();

  std::vector<double> infer;
  volatile double sink = 0.0;
  for (int i = 0; i < options.warmup + options.repetitions; ++i) {
    const auto t0 = clock::now();
    const auto out = forecast::forward_batch(model, instance_windows);
    const auto t1 = clock::now();
    sink = sink + out.front().front();
    if (i >= options.warmup) infer.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  rep.inference_time_per_instance_s = median(infer);

  if (rep.n_parameters > 0 && !train_windows.empty()) {
    forecast::TrainConfig cfg;
    cfg.seed = options.seed;
    cfg.max_epochs = options.warmup + options.repetitions;
    cfg.early_stop.patience = cfg.max_epochs + 1;
    forecast::Trainer trainer(spec, cfg, train_windows, train_windows);
    std::vector<double> epochs;
    for (int i = 0; i < options.warmup + options.repetitions; ++i) {
      const auto t0 = clock::now();
      trainer.run_epoch();
      const auto t1 = clock::now();
      if (i >= options.warmup) epochs.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    rep.train_time_per_epoch_s = median(epochs);
  }
  return rep;
}

json to_json(const BenchReport& r) {
  return {{"version", 1},
          {"units", {{"model_size", "bytes"}, {"train_time_per_epoch", "s"}, {"inference_time_per_instance", "s"}}},
          {"model_size_bytes", r.model_size_bytes},
          {"n_parameters", r.n_parameters},
          {"train_time_per_epoch_s", r.train_time_per_epoch_s},
          {"inference_time_per_instance_s", r.inference_time_per_instance_s}};
}

DurationHistogram outage_stats(std::span<const OutageEvent> events, std::uint32_t tick_rate_hz, std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorCode::Config, "histogram needs at least one bin");
  if (tick_rate_hz == 0) throw Error(ErrorCode::Config, "tick rate must be positive");
  constexpr double kMinSeconds = 10.0;
  DurationHistogram h;
  for (std::size_t k = 0; k <= n_bins; ++k)
    h.bin_edges_s.push_back(kMinSeconds * std::pow(kMaxOutageSeconds / kMinSeconds,
                                                   static_cast<double>(k) / static_cast<double>(n_bins)));
  h.bin_edges_s.back() = kMaxOutageSeconds;
  const double log_span = std::log(kMaxOutageSeconds / kMinSeconds);
  for (const auto& e : events) {
    const double secs = std::clamp(static_cast<double>(e.duration_ticks) / tick_rate_hz, kMinSeconds, kMaxOutageSeconds);
    auto bin = static_cast<std::size_t>(std::floor(std::log(secs / kMinSeconds) / log_span * static_cast<double>(n_bins)));
    bin = std::min(bin, n_bins - 1);
    // Guard against log rounding at the edges.
    while (bin > 0 && secs < h.bin_edges_s[bin]) --bin;
    while (bin + 1 < n_bins && secs >= h.bin_edges_s[bin + 1]) ++bin;
    auto& counts = h.counts[e.label.value_or(LabelClass::Unlabeled)];
    counts.resize(n_bins, 0);
    ++counts[bin];
  }
  return h;
}

json to_json(const DurationHistogram& h) {
  json counts = json::object();
  for (const auto& [cls, c] : h.counts) counts[std::string(to_string(cls))] = c;
  return {{"version", 1}, {"units", {{"bin_edges", "s"}}}, {"bin_edges_s", h.bin_edges_s}, {"counts", counts}};
}

WindowSample online_window(std::span<const double> lookback_rows, std::size_t n_features, const Geometry& geometry,
                           double last_permit) {
  if (lookback_rows.size() != n_features * static_cast<std::size_t>(geometry.lookback))
    throw Error(ErrorCode::Shape, "look-back buffer does not match geometry");
  WindowSample w;
  w.geometry = geometry;
  w.geometry.stride = 1;
  w.lookback.assign(lookback_rows.begin(), lookback_rows.end());
  w.target.assign(static_cast<std::size_t>(geometry.horizon), 0.0);
  w.reference_permit = last_permit;
  w.n_features = n_features;
  return w;
}

std::vector<Alert> sliding_alerts(const Forecaster& model, std::span<const HourFrame> frames, const Geometry& geometry,
                                  double threshold, std::optional<std::int64_t> max_ticks,
                                  std::optional<std::size_t> permit_device) {
  check_threshold(threshold);
  if (frames.empty()) return {};
  const auto& catalog = frames.front().catalog;
  const auto readings = catalog.indices_of(DeviceKind::Reading);
  const auto permit = permit_device.value_or(dataset::default_permit_device(catalog));
  const auto n = readings.size();
  const auto lb = static_cast<std::size_t>(geometry.lookback);

  std::vector<Alert> alerts;
  std::vector<double> history;  // rolling rows, trimmed in chunks
  std::vector<WindowSample> batch;
  std::int64_t tick = 0;
  constexpr std::size_t kChunk = 256;

  auto flush = [&] {
    if (batch.empty()) return;
    const auto out = model.predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double s = detection_statistic(out[i], model.emits_logits());
      if (s < threshold)
        alerts.push_back({batch[i].start + geometry.lookback - 1, *std::min_element(out[i].begin(), out[i].end())});
    }
    batch.clear();
  };

  std::size_t rows = 0;
  for (const auto& f : frames) {
    if (!(f.catalog == catalog)) throw Error(ErrorCode::Shape, "frames do not share a catalog");
    for (std::size_t t = 0; t < f.n_ticks; ++t, ++tick) {
      if (max_ticks && tick >= *max_ticks) {
        flush();
        return alerts;
      }
      for (auto d : readings) history.push_back(f.at(t, d));
      ++rows;
      if (rows >= lb) {
        const auto first = (rows - lb) * n;
        auto w = online_window(std::span(history).subspan(first, lb * n), n, geometry, f.at(t, permit));
        w.start = tick - static_cast<std::int64_t>(lb) + 1;
        batch.push_back(std::move(w));
        if (batch.size() == kChunk) flush();
      }
      if (rows > 4 * lb + kChunk) {
        const auto drop = rows - lb;
        history.erase(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(drop * n));
        rows = lb;
      }
    }
  }
  flush();
  return alerts;
}

}  // namespace ps::detect
