#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "json.hpp"
#include "ps/detect.hpp"

namespace ps::cli {

// Blocking FIFO with a fixed capacity. push() reports whether it had to wait
// for room; close() lets the consumer drain and then see end of stream.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    const bool waited = items_.size() >= capacity_;
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return waited;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct ReplayOptions {
  detect::Geometry geometry;
  double threshold = 0.5;
  double speed = 0.0;  // 0 = as fast as possible, else ticks at 15 * speed Hz
  std::optional<std::int64_t> max_ticks;
  std::size_t queue_capacity = 64;
  std::optional<std::size_t> permit_device;
  std::optional<std::size_t> expected_features;  // checked against the catalog before streaming
};

struct ReplayStats {
  std::int64_t ticks_emitted = 0;
  std::int64_t ticks_processed = 0;  // ticks that ran inference
  std::vector<detect::Alert> alerts;
  double latency_p50_s = 0.0;
  double latency_p95_s = 0.0;
  double latency_max_s = 0.0;
  std::int64_t deadline_misses = 0;  // inference latency above one tick period
  std::int64_t queue_full_events = 0;  // producer had to wait for room
  bool out_of_order = false;

  // Number of maximal runs of consecutive alert ticks.
  std::size_t alert_episodes() const;
};

// Yields raw hour frames in stream order; nullopt ends the stream.
using FrameSource = std::function<std::optional<HourFrame>()>;

FrameSource frames_from_dir(const std::filesystem::path& dir);
FrameSource frames_from_memory(std::vector<HourFrame> frames);

// A producer thread preprocesses each hour as it is loaded and emits its ticks;
// the consumer keeps the rolling look-back and runs the detector on every tick
// once it is full.
ReplayStats replay(FrameSource source, const detect::Forecaster& model, const ReplayOptions& options);

nlohmann::json to_json(const ReplayStats& s);

}  // namespace ps::cli
