#include "ps/replay.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <thread>

#include "ps/error.hpp"
#include "ps/hour_frame_io.hpp"
#include "ps/preprocess.hpp"

namespace ps::cli {

namespace {

struct Tick {
  std::int64_t index = 0;
  std::vector<float> readings;
  float permit = 0.0f;
};

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

std::size_t ReplayStats::alert_episodes() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < alerts.size(); ++i)
    if (i == 0 || alerts[i].tick != alerts[i - 1].tick + 1) ++n;
  return n;
}

FrameSource frames_from_dir(const std::filesystem::path& dir) {
  auto files = std::make_shared<std::vector<std::filesystem::path>>(list_frame_files(dir));
  if (files->empty()) throw Error(ErrorCode::Io, "no hour files in " + dir.string());
  auto next = std::make_shared<std::size_t>(0);
  return [files, next]() -> std::optional<HourFrame> {
    if (*next >= files->size()) return std::nullopt;
    return load_hour_frame((*files)[(*next)++]);
  };
}

FrameSource frames_from_memory(std::vector<HourFrame> frames) {
  auto held = std::make_shared<std::vector<HourFrame>>(std::move(frames));
  auto next = std::make_shared<std::size_t>(0);
  return [held, next]() -> std::optional<HourFrame> {
    if (*next >= held->size()) return std::nullopt;
    return std::move((*held)[(*next)++]);
  };
}

ReplayStats replay(FrameSource source, const detect::Forecaster& model, const ReplayOptions& options) {
  using clock = std::chrono::steady_clock;
  if (options.speed < 0) throw Error(ErrorCode::Config, "replay speed must be >= 0");
  if (!(options.threshold > 0 && options.threshold < 1)) throw Error(ErrorCode::Config, "threshold must lie in (0, 1)");
  if (options.queue_capacity == 0) throw Error(ErrorCode::Config, "queue capacity must be positive");
  const auto& g = options.geometry;
  if (g.lookback < 1 || g.horizon < 1 || g.gap < 0) throw Error(ErrorCode::Geometry, "invalid replay geometry");

  // Catalog checks happen before any thread starts.
  auto first = source();
  if (!first) throw Error(ErrorCode::Io, "replay source is empty");
  const DeviceCatalog catalog = first->catalog;
  const auto readings = catalog.indices_of(DeviceKind::Reading);
  const auto permit = options.permit_device.value_or(dataset::default_permit_device(catalog));
  if (permit >= catalog.size() || catalog.devices[permit].kind != DeviceKind::Permit)
    throw Error(ErrorCode::Shape, "replay permit device is not a permit");
  if (options.expected_features && *options.expected_features != readings.size())
    throw Error(ErrorCode::Shape, "model expects " + std::to_string(*options.expected_features) +
                                      " readings, catalog has " + std::to_string(readings.size()));

  const double tick_rate = static_cast<double>(catalog.tick_rate_hz);
  const double period_s = 1.0 / (tick_rate * (options.speed > 0 ? options.speed : 1.0));
  BoundedQueue<Tick> queue(options.queue_capacity);
  ReplayStats stats;
  std::exception_ptr producer_error;

  std::jthread producer([&] {
    try {
      std::optional<HourFrame> raw = std::move(first);
      std::int64_t index = 0;
      const auto t0 = clock::now();
      while (raw) {
        if (!(raw->catalog == catalog)) throw Error(ErrorCode::Shape, "hour files do not share a catalog");
        // Each hour is normalized with its own statistics when it is loaded.
        const auto frame = preprocess_frame(*raw);
        for (std::size_t t = 0; t < frame.n_ticks; ++t, ++index) {
          if (options.max_ticks && index >= *options.max_ticks) {
            raw.reset();
            break;
          }
          if (options.speed > 0)
            std::this_thread::sleep_until(t0 + std::chrono::duration_cast<clock::duration>(
                                                   std::chrono::duration<double>(period_s * static_cast<double>(index))));
          Tick tick;
          tick.index = index;
          tick.readings.reserve(readings.size());
          for (auto d : readings) tick.readings.push_back(frame.at(t, d));
          tick.permit = frame.at(t, permit);
          if (queue.push(std::move(tick))) ++stats.queue_full_events;
          ++stats.ticks_emitted;
        }
        if (raw) raw = source();
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  const auto n = readings.size();
  const auto lb = static_cast<std::size_t>(g.lookback);
  std::deque<std::vector<float>> buffer;
  std::vector<double> rows(lb * n);
  std::vector<double> latencies;
  std::int64_t expected = 0;
  std::exception_ptr consumer_error;
  while (auto tick = queue.pop()) {
    if (consumer_error) continue;  // keep draining so the producer can finish
    try {
      const auto start = clock::now();
      if (tick->index != expected) stats.out_of_order = true;
      expected = tick->index + 1;
      buffer.push_back(std::move(tick->readings));
      if (buffer.size() > lb) buffer.pop_front();
      if (buffer.size() < lb) continue;
      for (std::size_t r = 0; r < lb; ++r)
        std::copy(buffer[r].begin(), buffer[r].end(), rows.begin() + static_cast<std::ptrdiff_t>(r * n));
      auto w = detect::online_window(rows, n, g, tick->permit);
      w.start = tick->index - g.lookback + 1;
      const auto out = model.predict(std::span(&w, 1));
      const double s = detect::detection_statistic(out.front(), model.emits_logits());
      if (s < options.threshold)
        stats.alerts.push_back({tick->index, *std::min_element(out.front().begin(), out.front().end())});
      const double latency = std::chrono::duration<double>(clock::now() - start).count();
      latencies.push_back(latency);
      if (latency > period_s) ++stats.deadline_misses;
      ++stats.ticks_processed;
    } catch (...) {
      consumer_error = std::current_exception();
    }
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  if (consumer_error) std::rethrow_exception(consumer_error);

  std::sort(latencies.begin(), latencies.end());
  stats.latency_p50_s = percentile(latencies, 0.50);
  stats.latency_p95_s = percentile(latencies, 0.95);
  stats.latency_max_s = latencies.empty() ? 0.0 : latencies.back();
  return stats;
}

nlohmann::json to_json(const ReplayStats& s) {
  nlohmann::json alerts = nlohmann::json::array();
  for (const auto& a : s.alerts) alerts.push_back({{"tick", a.tick}, {"min_forecast", a.min_forecast}});
  return {{"version", 1},
          {"units", {{"latency", "s"}, {"tick", "index"}}},
          {"ticks_emitted", s.ticks_emitted},
          {"ticks_processed", s.ticks_processed},
          {"latency_p50_s", s.latency_p50_s},
          {"latency_p95_s", s.latency_p95_s},
          {"latency_max_s", s.latency_max_s},
          {"deadline_misses", s.deadline_misses},
          {"queue_full_events", s.queue_full_events},
          {"alert_episodes", s.alert_episodes()},
          {"alerts", alerts}};
}

}  // namespace ps::cli
