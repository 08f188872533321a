#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ps/core.hpp"
#include "ps/dataset.hpp"

namespace ps::label {

inline constexpr int kLabelLookback = 6;
inline constexpr std::int64_t kBitWindowTicks = 30;  // 2 s at 15 Hz

// Per non-permit device: value at t_prime minus the mean of the `k` ticks
// before it. Requires lookback + 1 ticks ending at t_prime; k == lookback.
std::vector<double> aggregate_features(const HourFrame& frame, std::int64_t t_prime, int lookback = kLabelLookback,
                                       int k = kLabelLookback);
// Features of an outage instance taken at its drop tick.
std::vector<double> outage_features(const dataset::Instance& instance);

double gini(std::span<const std::size_t> class_counts);

struct ForestConfig {
  int n_estimators = 200;
  int min_samples_split = 2;
  std::optional<int> max_features;  // default floor(sqrt(n_features)), at least 1
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // samples with x <= threshold go left
  int left = -1;
  int right = -1;
  std::vector<std::uint32_t> counts;  // per entry of ForestModel::classes

  bool leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  // Index into the forest's class list of the reached leaf's majority.
  std::size_t predict(std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<LabelClass> classes;  // sorted in enum order
  std::size_t n_features = 0;
  ForestConfig config;
  std::vector<DecisionTree> trees;
  bool degenerate = false;  // trained on a single class

  bool operator==(const ForestModel& o) const {
    return classes == o.classes && n_features == o.n_features && trees == o.trees && degenerate == o.degenerate;
  }
};

ForestModel train_forest(std::span<const std::vector<double>> features, std::span<const LabelClass> labels,
                         const ForestConfig& cfg = {});

struct Classification {
  LabelClass label = LabelClass::Unlabeled;
  double confidence = 0.0;  // fraction of trees voting for `label`
  std::vector<std::size_t> votes;  // per forest class
};

Classification classify_forest(const ForestModel& forest, std::span<const double> features);

nlohmann::json to_json(const ForestModel& f);
ForestModel forest_from_json(const nlohmann::json& j);
// PSF1: "PSF1" | u32 version | u32 length | JSON.
std::vector<std::byte> encode_forest(const ForestModel& f);
ForestModel decode_forest(std::span<const std::byte> bytes);
void save_forest(const ForestModel& f, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

// Confusion matrix rows are true classes, columns predictions, both over `classes`.
struct Confusion {
  std::vector<LabelClass> classes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  double accuracy() const;
  // Unweighted mean of per-class F1 over classes that occur as truth or
  // prediction; an undefined F1 counts as 0.
  double macro_f1() const;
};

Confusion confusion(std::span<const LabelClass> truth, std::span<const LabelClass> predicted,
                    std::vector<LabelClass> classes);

struct CVConfig {
  int folds = 8;
  int repeats = 10;
  std::uint64_t seed = 0;
  ForestConfig forest;
};

struct CVReport {
  int folds = 0;
  int repeats = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
  Confusion pooled;  // over every fold of every repeat
  std::vector<std::size_t> fold_sizes;  // of the first repeat
};

// Stratified folds: each repeat shuffles, groups by class and deals samples
// round-robin. Mean and population std are taken over all folds x repeats.
CVReport cross_validate(std::span<const std::vector<double>> features, std::span<const LabelClass> labels,
                        const CVConfig& cfg = {});

nlohmann::json to_json(const Confusion& c);
nlohmann::json to_json(const CVReport& r);

struct BitSignature {
  std::size_t device = 0;  // catalog index of a StatusBits device
  std::uint32_t mask = 0;
  bool operator==(const BitSignature&) const = default;
};

struct BitPatternTable {
  std::map<LabelClass, std::vector<BitSignature>> signatures;  // absent class: unmatchable
  bool operator==(const BitPatternTable&) const = default;
};

// Per status device: OR over [t_prime, t_prime + window] of value XOR value at t_prime - 1.
std::vector<BitSignature> flip_masks(const HourFrame& frame, std::int64_t t_prime,
                                     std::int64_t window = kBitWindowTicks);

// Keeps, per class, the bits flipped in every one of its outages and in no
// outage of another class. Unlabeled outages and outages without flips are ignored.
BitPatternTable learn_bit_patterns(std::span<const dataset::Instance> outages);

// Unique matching class, else Unlabeled.
LabelClass bit_label(const dataset::Instance& outage, const BitPatternTable& table);

nlohmann::json to_json(const BitPatternTable& t, const DeviceCatalog& catalog);
BitPatternTable bit_table_from_json(const nlohmann::json& j);

struct ConsistencyMatrix {
  // counts[rf][bit], indexed by LabelClass value including Unlabeled.
  std::array<std::array<std::size_t, kNumLabelClasses>, kNumLabelClasses> counts{};

  std::size_t total() const;
  // Outages both labelers assigned a class.
  std::size_t jointly_labeled() const;
  // Share of jointly labeled outages on which they agree; 0 when there are none.
  double diagonal_fraction() const;
};

ConsistencyMatrix compare_labelers(std::span<const dataset::Instance> outages, const ForestModel& forest,
                                   const BitPatternTable& table);
nlohmann::json to_json(const ConsistencyMatrix& m);

}  // namespace ps::label
