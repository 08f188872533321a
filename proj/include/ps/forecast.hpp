#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps/dataset.hpp"

namespace ps::forecast {

enum class ModelKind { Persistence, Linear, MLP, LSTM };
enum class OutputHead { Raw, Logits };
enum class LossKind { MSE, MAE, BCEL };

std::string_view to_string(ModelKind k);
std::string_view to_string(OutputHead h);
std::string_view to_string(LossKind k);
ModelKind model_kind_from_string(std::string_view s);
LossKind loss_kind_from_string(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::LSTM;
  std::size_t input_dim = 1;  // N, Reading devices per tick
  int lookback = 30;
  int gap = 30;  // carried so model files describe the windows they were trained on
  int horizon = 60;
  int hidden = 25;
  int layers = 2;
  OutputHead head = OutputHead::Raw;

  static ModelSpec persistence(std::size_t n, int lookback, int horizon);
  static ModelSpec linear(std::size_t n, int lookback, int horizon);
  static ModelSpec mlp(std::size_t n, int lookback, int horizon, int hidden = 64);
  static ModelSpec lstm(std::size_t n, int lookback, int horizon, int hidden = 25, int layers = 2);

  dataset::Geometry geometry(int stride = 1) const { return {lookback, gap, horizon, stride}; }
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

// Persistence: 0. Linear: (L_b N) L_f + L_f. MLP: (L_b N) h + h + h L_f + L_f.
// LSTM (two bias vectors per layer): sum_l 4 (h in_l + h h + 2h) + h L_f + L_f.
std::size_t param_count(const ModelSpec& spec);

struct EarlyStopConfig {
  double min_delta = 1e-6;
  int patience = 10;
  bool restore_best = true;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  double clip_value = 0.5;
  double clip_norm = 1.0;
  std::size_t batch_size = 254;
  int max_epochs = 500;
  EarlyStopConfig early_stop;
  double lr_gamma = 0.999;
  LossKind loss = LossKind::MSE;
  std::uint64_t seed = 0;

  void validate() const;
};

// Learning rate in effect during `epoch` (0-based): lr * gamma^epoch.
double learning_rate_at(const TrainConfig& cfg, int epoch);

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainedModel {
  ModelSpec spec;
  std::vector<double> params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;

  bool operator==(const TrainedModel&) const = default;
};

// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
TrainedModel init_model(const ModelSpec& spec, std::uint64_t seed);
TrainedModel zero_model(const ModelSpec& spec);

// Raw network outputs (logits for a Logits head); no clamping here.
std::vector<double> forward(const TrainedModel& model, const dataset::WindowSample& window);
std::vector<std::vector<double>> forward_batch(const TrainedModel& model,
                                               std::span<const dataset::WindowSample> windows);

double loss(LossKind kind, std::span<const double> predictions, std::span<const double> targets);

// Mean loss over a batch and its gradient with respect to the flat parameters.
double loss_and_gradient(const ModelSpec& spec, std::span<const double> params,
                         std::span<const dataset::WindowSample> windows, LossKind kind,
                         std::span<double> gradient);

// Element-wise clip to +-clip_value, then rescale to global L2 norm <= clip_norm.
void clip_gradient(std::span<double> gradient, double clip_value, double clip_norm);

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// numeric by central differences with step 1e-5.
double grad_check(const ModelSpec& spec, const dataset::WindowSample& sample, LossKind kind,
                  std::uint64_t seed);

// Epoch-at-a-time trainer; train() drives it to completion.
class Trainer {
 public:
  Trainer(const ModelSpec& spec, const TrainConfig& cfg,
          std::span<const dataset::WindowSample> train, std::span<const dataset::WindowSample> val);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Throws TrainingError on a non-finite loss.
  EpochRecord run_epoch();
  bool done() const;
  int epochs_run() const;
  TrainedModel finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

TrainedModel train(const ModelSpec& spec, std::span<const dataset::WindowSample> train_windows,
                   std::span<const dataset::WindowSample> val_windows, const TrainConfig& cfg);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// PSM1: "PSM1" | u32 version | u32 header length | JSON header | f64 params (LE).
std::vector<std::byte> encode_model(const TrainedModel& model);
TrainedModel decode_model(std::span<const std::byte> bytes);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace ps::forecast
