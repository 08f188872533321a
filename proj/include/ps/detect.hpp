#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ps/dataset.hpp"
#include "ps/forecast.hpp"

namespace ps::detect {

using dataset::Geometry;
using dataset::Instance;
using dataset::WindowSample;

// Anything that maps a look-back window to L_f permit forecasts.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::vector<std::vector<double>> predict(std::span<const WindowSample> windows) const = 0;
  // True when outputs are logits and must pass through the logistic function.
  virtual bool emits_logits() const { return false; }
};

class ModelForecaster final : public Forecaster {
 public:
  explicit ModelForecaster(forecast::TrainedModel model) : model_(std::move(model)) {}
  std::vector<std::vector<double>> predict(std::span<const WindowSample> windows) const override;
  bool emits_logits() const override { return model_.spec.head == forecast::OutputHead::Logits; }
  const forecast::TrainedModel& model() const { return model_; }

 private:
  forecast::TrainedModel model_;
};

// Knows the true permit G ticks past the last look-back tick and holds it over
// the horizon, so it raises an alarm exactly G ticks before every drop.
class OracleForecaster final : public Forecaster {
 public:
  std::vector<std::vector<double>> predict(std::span<const WindowSample> windows) const override;
};

class ConstantForecaster final : public Forecaster {
 public:
  explicit ConstantForecaster(double value) : value_(value) {}
  std::vector<std::vector<double>> predict(std::span<const WindowSample> windows) const override;

 private:
  double value_;
};

// Raw outputs are clamped to [0, 1]; logits go through the logistic function.
double detection_statistic(std::span<const double> forecast, bool logits);

enum class Outcome { Early, Late, Missed };
std::string_view to_string(Outcome o);

struct Detection {
  Outcome outcome = Outcome::Missed;
  double time_diff_s = 0.0;  // detection tick - drop tick, in seconds; < 0 is early
  std::optional<std::int64_t> detect_tick;  // last look-back tick of the first alarming window
};

struct InstanceResult {
  dataset::InstanceKind kind = dataset::InstanceKind::Outage;
  std::optional<Detection> detection;  // outage instances
  bool false_positive = false;         // non-outage instances
  std::optional<std::int64_t> first_alarm_tick;
  double squared_error = 0.0;          // summed over all windows and horizon steps
  std::size_t n_values = 0;
};

// Slides the forecaster over the instance with stride 1; the first window whose
// minimum forecast falls below `threshold` is the detection.
InstanceResult detect_on_instance(const Forecaster& model, const Instance& instance,
                                  const Geometry& geometry, double threshold);

struct ClassRate {
  std::size_t n = 0;
  std::size_t n_detected = 0;
  std::size_t n_early = 0;
  double early_rate() const { return n == 0 ? 0.0 : static_cast<double>(n_early) / static_cast<double>(n); }
};

struct DetectionReport {
  double threshold = 0.5;
  double mse_test = 0.0;
  std::size_t n_outages = 0;
  std::size_t n_detected = 0;
  std::optional<double> mean_time_diff_s;  // over detected outages only
  std::size_t n_early = 0;
  std::size_t n_late = 0;
  std::size_t false_negatives = 0;
  std::size_t n_non_outages = 0;
  std::size_t false_positives = 0;
  std::map<LabelClass, ClassRate> per_class;

  // n_detected = n_early + n_late, n_outages = n_detected + FN, FP <= n_non.
  bool counters_consistent() const;
};

DetectionReport evaluate(const Forecaster& model, std::span<const Instance> instances,
                         const Geometry& geometry, double threshold);

nlohmann::json to_json(const DetectionReport& r);
DetectionReport detection_report_from_json(const nlohmann::json& j);

enum class SweepKind { Threshold, Lookback, Gap, Loss };
std::string_view to_string(SweepKind k);
SweepKind sweep_kind_from_string(std::string_view s);

using SweepValue = std::variant<double, forecast::LossKind>;

struct SweepBase {
  forecast::ModelSpec spec;
  forecast::TrainConfig train;
  Geometry geometry;
  double threshold = 0.5;
  int train_stride = 1;
  std::span<const Instance> train_instances;
  std::span<const Instance> val_instances;
  std::span<const Instance> test_instances;
};

struct CellSetup {
  forecast::ModelSpec spec;
  forecast::TrainConfig train;
  Geometry geometry;
};

struct SweepCell {
  SweepKind kind = SweepKind::Threshold;
  SweepValue value;
  bool ok = false;
  std::string error;
  std::optional<DetectionReport> report;
  std::vector<forecast::EpochRecord> history;
};

using SweepReport = std::vector<SweepCell>;

// Builds the forecaster for one cell; the default trains base.spec on the
// base train/val instances with the cell's geometry and loss.
using ForecasterFactory = std::function<std::unique_ptr<Forecaster>(const CellSetup&, const SweepBase&)>;
std::unique_ptr<Forecaster> train_forecaster(const CellSetup& setup, const SweepBase& base);

// Threshold sweeps build one forecaster and reuse it; the other kinds build
// one per cell. A cell whose build fails is recorded as failed.
SweepReport sweep(SweepKind kind, std::span<const SweepValue> grid, const SweepBase& base,
                  const ForecasterFactory& factory = train_forecaster);

nlohmann::json to_json(const SweepReport& r);

struct BenchOptions {
  int warmup = 3;
  int repetitions = 10;
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::size_t model_size_bytes = 0;
  std::size_t n_parameters = 0;
  double train_time_per_epoch_s = 0.0;
  double inference_time_per_instance_s = 0.0;
};

// Medians over the repetitions. `train_windows` drives one epoch per repetition
// (skipped for parameter-free models); `instance_windows` are the windows of
// one instance, all scored per repetition.
BenchReport bench(const forecast::ModelSpec& spec, std::span<const WindowSample> train_windows,
                  std::span<const WindowSample> instance_windows, const BenchOptions& options = {});

nlohmann::json to_json(const BenchReport& r);

struct DurationHistogram {
  std::vector<double> bin_edges_s;  // n_bins + 1 log-spaced edges, 10 s .. 3600 s
  std::map<LabelClass, std::vector<std::size_t>> counts;
};

inline constexpr double kMaxOutageSeconds = 3600.0;

DurationHistogram outage_stats(std::span<const OutageEvent> events, std::uint32_t tick_rate_hz = 15,
                               std::size_t n_bins = 12);
nlohmann::json to_json(const DurationHistogram& h);

struct Alert {
  std::int64_t tick = 0;  // global tick of the last look-back sample
  double min_forecast = 0.0;
  bool operator==(const Alert&) const = default;
};

// Window over a contiguous stream ending at a given tick. Online windows have
// no known future: the target is zero-filled and the reference permit is the
// last observed one.
WindowSample online_window(std::span<const double> lookback_rows, std::size_t n_features,
                           const Geometry& geometry, double last_permit);

// Offline counterpart of streaming replay: every tick once the look-back is
// full, over contiguous preprocessed frames.
std::vector<Alert> sliding_alerts(const Forecaster& model, std::span<const HourFrame> frames,
                                  const Geometry& geometry, double threshold,
                                  std::optional<std::int64_t> max_ticks = std::nullopt,
                                  std::optional<std::size_t> permit_device = std::nullopt);

}  // namespace ps::detect
