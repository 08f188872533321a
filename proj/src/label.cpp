#include "ps/label.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "ps/error.hpp"
#include "ps/json_io.hpp"
#include "ps/rng.hpp"

namespace ps::label {

std::vector<double> aggregate_features(const HourFrame& frame, std::int64_t t_prime, int lookback, int k) {
  if (lookback < 1 || k < 1 || k > lookback) throw Error(ErrorCode::Config, "invalid aggregation window");
  if (t_prime < lookback || t_prime >= static_cast<std::int64_t>(frame.n_ticks))
    throw Error(ErrorCode::History, "not enough history before t' for feature aggregation");
  std::vector<double> out;
  for (auto d : frame.catalog.non_permit_indices()) {
    const auto col = frame.column(d);
    double sum = 0.0;
    for (std::int64_t t = t_prime - k; t < t_prime; ++t) sum += col[static_cast<std::size_t>(t)];
    const double v = col[static_cast<std::size_t>(t_prime)] - sum / k;
    if (!std::isfinite(v)) throw Error(ErrorCode::Invariant, "non-finite aggregated feature");
    out.push_back(v);
  }
  return out;
}

std::vector<double> outage_features(const dataset::Instance& instance) {
  if (!instance.drop_offset) throw Error(ErrorCode::Invariant, "features need an outage instance");
  return aggregate_features(instance.frame, *instance.drop_offset);
}

double gini(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0) return 0.0;
  double s = 0.0;
  for (auto c : class_counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

namespace {

constexpr double kMinDecrease = 1e-12;

struct Fitter {
  std::span<const std::vector<double>> x;
  std::span<const std::size_t> y;  // class indices
  std::size_t n_classes;
  std::size_t n_features;
  int min_samples_split;
  std::size_t max_features;
  std::mt19937_64 rng;

  std::vector<std::size_t> counts_of(std::span<const std::size_t> idx) const {
    std::vector<std::size_t> c(n_classes, 0);
    for (auto i : idx) ++c[y[i]];
    return c;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  // Lowest weighted Gini over midpoints of one feature; ties (within
  // kMinDecrease) keep the lowest threshold.
  std::optional<Split> best_on(std::vector<std::size_t>& idx, std::size_t f) const {
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a][f] < x[b][f]; });
    std::vector<std::size_t> left(n_classes, 0), right = counts_of(idx);
    const double n = static_cast<double>(idx.size());
    std::optional<Split> best;
    for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
      ++left[y[idx[j]]];
      --right[y[idx[j]]];
      const double a = x[idx[j]][f], b = x[idx[j + 1]][f];
      if (!(a < b)) continue;
      const double nl = static_cast<double>(j + 1);
      const double imp = (nl * gini(left) + (n - nl) * gini(right)) / n;
      if (!best || imp < best->impurity - kMinDecrease) {
        double thr = a + (b - a) / 2.0;
        if (!(thr < b)) thr = a;
        best = Split{static_cast<int>(f), thr, imp};
      }
    }
    return best;
  }

  DecisionTree fit(std::vector<std::size_t> root) {
    DecisionTree tree;
    struct Work {
      std::vector<std::size_t> idx;
      int node;
    };
    std::vector<Work> stack;
    tree.nodes.emplace_back();
    stack.push_back({std::move(root), 0});
    std::vector<std::size_t> order(n_features);
    while (!stack.empty()) {
      auto [idx, node] = std::move(stack.back());
      stack.pop_back();
      const auto counts = counts_of(idx);
      auto& leaf = tree.nodes[static_cast<std::size_t>(node)];
      leaf.counts.assign(counts.begin(), counts.end());
      const double parent = gini(counts);
      if (idx.size() < static_cast<std::size_t>(min_samples_split) || parent == 0.0) continue;

      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      std::optional<Split> best;
      for (std::size_t visited = 0; visited < order.size(); ++visited) {
        // Past the feature budget, keep looking only while nothing useful was found.
        if (visited >= max_features && best && parent - best->impurity > kMinDecrease) break;
        auto s = best_on(idx, order[visited]);
        if (s && (!best || s->impurity < best->impurity - kMinDecrease)) best = s;
      }
      if (!best || parent - best->impurity <= kMinDecrease) continue;

      std::vector<std::size_t> l, r;
      const auto f = static_cast<std::size_t>(best->feature);
      for (auto i : idx) (x[i][f] <= best->threshold ? l : r).push_back(i);
      const int li = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& n = tree.nodes[static_cast<std::size_t>(node)];
      n.feature = best->feature;
      n.threshold = best->threshold;
      n.left = li;
      n.right = li + 1;
      stack.push_back({std::move(r), li + 1});
      stack.push_back({std::move(l), li});
    }
    return tree;
  }
};

std::size_t argmax_first(std::span<const std::uint32_t> c) {
  return static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
}

}  // namespace

std::size_t DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].leaf())
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                      : nodes[i].right);
  return argmax_first(nodes[i].counts);
}

ForestModel train_forest(std::span<const std::vector<double>> features, std::span<const LabelClass> labels,
                         const ForestConfig& cfg) {
  if (features.empty()) throw Error(ErrorCode::Invariant, "forest needs training samples");
  if (features.size() != labels.size()) throw Error(ErrorCode::Shape, "feature and label counts differ");
  if (cfg.n_estimators < 1 || cfg.min_samples_split < 2) throw Error(ErrorCode::Config, "invalid forest config");
  const auto n_features = features.front().size();
  if (n_features == 0) throw Error(ErrorCode::Shape, "empty feature vectors");
  for (const auto& f : features) {
    if (f.size() != n_features) throw Error(ErrorCode::Shape, "feature vectors differ in length");
    for (double v : f)
      if (!std::isfinite(v)) throw Error(ErrorCode::Invariant, "non-finite feature");
  }

  ForestModel model;
  model.config = cfg;
  model.n_features = n_features;
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  model.degenerate = model.classes.size() < 2;
  std::vector<std::size_t> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    y[i] = static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), labels[i]) -
                                    model.classes.begin());

  std::size_t max_features = cfg.max_features
                                 ? static_cast<std::size_t>(std::max(1, *cfg.max_features))
                                 : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(n_features))));
  max_features = std::min(max_features, n_features);

  model.trees.resize(static_cast<std::size_t>(cfg.n_estimators));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < model.trees.size(); t = next++) {
      Fitter fitter{features, y, model.classes.size(), n_features, cfg.min_samples_split, max_features,
                    std::mt19937_64(derive_seed(cfg.seed, {0x7E3E, t}))};
      std::vector<std::size_t> sample(features.size());
      if (cfg.bootstrap) {
        std::uniform_int_distribution<std::size_t> pick(0, features.size() - 1);
        for (auto& s : sample) s = pick(fitter.rng);
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      model.trees[t] = fitter.fit(std::move(sample));
    }
  };
  const auto n_threads =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), model.trees.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
  }
  return model;
}

Classification classify_forest(const ForestModel& forest, std::span<const double> features) {
  if (features.size() != forest.n_features) throw Error(ErrorCode::Shape, "feature length does not match the forest");
  if (forest.trees.empty()) throw Error(ErrorCode::Invariant, "forest has no trees");
  Classification c;
  c.votes.assign(forest.classes.size(), 0);
  for (const auto& t : forest.trees) ++c.votes[t.predict(features)];
  // classes are in enum order, so the first maximum is the tie-break winner
  const auto best = static_cast<std::size_t>(std::max_element(c.votes.begin(), c.votes.end()) - c.votes.begin());
  c.label = forest.classes[best];
  c.confidence = static_cast<double>(c.votes[best]) / static_cast<double>(forest.trees.size());
  return c;
}

Json to_json(const ForestModel& f) {
  Json classes = Json::array();
  for (auto c : f.classes) classes.push_back(std::string(to_string(c)));
  Json trees = Json::array();
  for (const auto& t : f.trees) {
    Json nodes = Json::array();
    for (const auto& n : t.nodes) nodes.push_back(Json::array({n.feature, n.threshold, n.left, n.right, n.counts}));
    trees.push_back(nodes);
  }
  Json cfg = {{"n_estimators", f.config.n_estimators},
              {"min_samples_split", f.config.min_samples_split},
              {"max_features", f.config.max_features ? Json(*f.config.max_features) : Json(nullptr)},
              {"bootstrap", f.config.bootstrap},
              {"seed", f.config.seed}};
  return {{"version", kSchemaVersion}, {"classes", classes},     {"n_features", f.n_features},
          {"config", cfg},             {"degenerate", f.degenerate}, {"trees", trees}};
}

ForestModel forest_from_json(const Json& j) {
  try {
    if (require(j, "version").get<int>() > kSchemaVersion)
      throw Error(ErrorCode::UnsupportedVersion, "forest version not supported");
    ForestModel f;
    for (const auto& c : require(j, "classes")) {
      auto cls = label_class_from_string(c.get<std::string>());
      if (!cls) throw Error(ErrorCode::Format, "unknown class in forest");
      f.classes.push_back(*cls);
    }
    f.n_features = require(j, "n_features").get<std::size_t>();
    const auto& cfg = require(j, "config");
    f.config.n_estimators = cfg.at("n_estimators").get<int>();
    f.config.min_samples_split = cfg.at("min_samples_split").get<int>();
    if (!cfg.at("max_features").is_null()) f.config.max_features = cfg.at("max_features").get<int>();
    f.config.bootstrap = cfg.at("bootstrap").get<bool>();
    f.config.seed = cfg.at("seed").get<std::uint64_t>();
    f.degenerate = j.value("degenerate", false);
    for (const auto& t : require(j, "trees")) {
      DecisionTree tree;
      for (const auto& n : t) {
        TreeNode node{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                      n.at(4).get<std::vector<std::uint32_t>>()};
        if (node.counts.size() != f.classes.size()) throw Error(ErrorCode::Format, "leaf counts do not match classes");
        tree.nodes.push_back(std::move(node));
      }
      const auto n_nodes = static_cast<int>(tree.nodes.size());
      if (n_nodes == 0) throw Error(ErrorCode::Format, "empty tree");
      for (const auto& n : tree.nodes)
        if (!n.leaf() && (n.left <= 0 || n.right <= 0 || n.left >= n_nodes || n.right >= n_nodes ||
                          static_cast<std::size_t>(n.feature) >= f.n_features))
          throw Error(ErrorCode::Format, "tree node out of range");
      f.trees.push_back(std::move(tree));
    }
    return f;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed forest: ") + e.what());
  }
}

namespace {
constexpr char kForestMagic[4] = {'P', 'S', 'F', '1'};
constexpr std::uint32_t kForestVersion = 1;
}  // namespace

std::vector<std::byte> encode_forest(const ForestModel& f) {
  const auto text = to_json(f).dump();
  std::vector<std::byte> out(12 + text.size());
  std::memcpy(out.data(), kForestMagic, 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  std::memcpy(out.data() + 4, &kForestVersion, 4);
  std::memcpy(out.data() + 8, &len, 4);
  std::memcpy(out.data() + 12, text.data(), text.size());
  return out;
}

ForestModel decode_forest(std::span<const std::byte> bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::Truncated, "PSF1 header truncated");
  if (std::memcmp(bytes.data(), kForestMagic, 4) != 0) throw Error(ErrorCode::Format, "not a PSF1 forest");
  std::uint32_t version = 0, length = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&length, bytes.data() + 8, 4);
  if (version > kForestVersion) throw Error(ErrorCode::UnsupportedVersion, "PSF1 version not supported");
  if (bytes.size() != 12 + std::size_t{length}) throw Error(ErrorCode::Truncated, "PSF1 body truncated");
  try {
    return forest_from_json(Json::parse(reinterpret_cast<const char*>(bytes.data() + 12),
                                        reinterpret_cast<const char*>(bytes.data() + 12 + length)));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Format, std::string("PSF1 body: ") + e.what());
  }
}

void save_forest(const ForestModel& f, const std::filesystem::path& path) {
  const auto bytes = encode_forest(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

ForestModel load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_forest(std::as_bytes(std::span(raw)));
}

std::size_t Confusion::total() const {
  std::size_t t = 0;
  for (const auto& r : counts) t += std::accumulate(r.begin(), r.end(), std::size_t{0});
  return t;
}

double Confusion::accuracy() const {
  const auto t = total();
  if (t == 0) return 0.0;
  std::size_t d = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) d += counts[i][i];
  return static_cast<double>(d) / static_cast<double>(t);
}

double Confusion::macro_f1() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::size_t tp = counts[c][c], actual = 0, predicted = 0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      actual += counts[c][k];
      predicted += counts[k][c];
    }
    if (actual == 0 && predicted == 0) continue;
    ++n;
    sum += 2.0 * static_cast<double>(tp) / static_cast<double>(actual + predicted);
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Confusion confusion(std::span<const LabelClass> truth, std::span<const LabelClass> predicted,
                    std::vector<LabelClass> classes) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::Shape, "truth and prediction counts differ");
  Confusion c;
  c.classes = std::move(classes);
  c.counts.assign(c.classes.size(), std::vector<std::size_t>(c.classes.size(), 0));
  auto index = [&](LabelClass l) {
    auto it = std::find(c.classes.begin(), c.classes.end(), l);
    if (it == c.classes.end()) throw Error(ErrorCode::Invariant, "class missing from confusion axes");
    return static_cast<std::size_t>(it - c.classes.begin());
  };
  for (std::size_t i = 0; i < truth.size(); ++i) ++c.counts[index(truth[i])][index(predicted[i])];
  return c;
}

CVReport cross_validate(std::span<const std::vector<double>> features, std::span<const LabelClass> labels,
                        const CVConfig& cfg) {
  const auto n = features.size();
  if (n != labels.size()) throw Error(ErrorCode::Shape, "feature and label counts differ");
  if (cfg.folds < 2 || cfg.repeats < 1) throw Error(ErrorCode::Config, "need folds >= 2 and repeats >= 1");
  if (static_cast<std::size_t>(cfg.folds) > n) throw Error(ErrorCode::Config, "more folds than samples");
  std::vector<LabelClass> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  CVReport rep;
  rep.folds = cfg.folds;
  rep.repeats = cfg.repeats;
  rep.pooled = confusion({}, {}, classes);
  std::vector<double> accs, f1s;
  for (int r = 0; r < cfg.repeats; ++r) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg.seed, {0xC5, static_cast<std::uint64_t>(r)}));
    std::shuffle(idx.begin(), idx.end(), rng);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
    std::vector<int> fold_of(n);
    for (std::size_t p = 0; p < n; ++p) fold_of[idx[p]] = static_cast<int>(p % static_cast<std::size_t>(cfg.folds));

    for (int k = 0; k < cfg.folds; ++k) {
      std::vector<std::vector<double>> xtr;
      std::vector<LabelClass> ytr, yte, ypred;
      std::vector<std::size_t> test;
      for (std::size_t i = 0; i < n; ++i) {
        if (fold_of[i] == k) {
          test.push_back(i);
        } else {
          xtr.push_back(features[i]);
          ytr.push_back(labels[i]);
        }
      }
      if (r == 0) rep.fold_sizes.push_back(test.size());
      auto fc = cfg.forest;
      fc.seed = derive_seed(cfg.forest.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)});
      const auto forest = train_forest(xtr, ytr, fc);
      for (auto i : test) {
        yte.push_back(labels[i]);
        ypred.push_back(classify_forest(forest, features[i]).label);
      }
      const auto c = confusion(yte, ypred, classes);
      accs.push_back(c.accuracy());
      f1s.push_back(c.macro_f1());
      for (std::size_t a = 0; a < classes.size(); ++a)
        for (std::size_t b = 0; b < classes.size(); ++b) rep.pooled.counts[a][b] += c.counts[a][b];
    }
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
  };
  std::tie(rep.accuracy_mean, rep.accuracy_std) = mean_std(accs);
  std::tie(rep.macro_f1_mean, rep.macro_f1_std) = mean_std(f1s);
  return rep;
}

Json to_json(const Confusion& c) {
  Json classes = Json::array();
  for (auto l : c.classes) classes.push_back(std::string(to_string(l)));
  return {{"classes", classes}, {"rows", "true"}, {"columns", "predicted"}, {"counts", c.counts}};
}

Json to_json(const CVReport& r) {
  return {{"version", kSchemaVersion},
          {"folds", r.folds},
          {"repeats", r.repeats},
          {"accuracy", {{"mean", r.accuracy_mean}, {"std", r.accuracy_std}}},
          {"macro_f1", {{"mean", r.macro_f1_mean}, {"std", r.macro_f1_std}}},
          {"fold_sizes", r.fold_sizes},
          {"confusion", to_json(r.pooled)}};
}

std::vector<BitSignature> flip_masks(const HourFrame& frame, std::int64_t t_prime, std::int64_t window) {
  if (t_prime < 1 || t_prime + window >= static_cast<std::int64_t>(frame.n_ticks))
    throw Error(ErrorCode::History, "bit window does not fit the frame");
  std::vector<BitSignature> out;
  for (auto d : frame.catalog.indices_of(DeviceKind::StatusBits)) {
    const auto col = frame.column(d);
    const auto before = static_cast<std::uint32_t>(col[static_cast<std::size_t>(t_prime - 1)]);
    std::uint32_t mask = 0;
    for (auto t = t_prime; t <= t_prime + window; ++t)
      mask |= static_cast<std::uint32_t>(col[static_cast<std::size_t>(t)]) ^ before;
    out.push_back({d, mask});
  }
  return out;
}

namespace {

std::vector<BitSignature> outage_flips(const dataset::Instance& o) {
  if (!o.drop_offset) throw Error(ErrorCode::Invariant, "bit labeling needs outage instances");
  return flip_masks(o.frame, *o.drop_offset);
}

}  // namespace

BitPatternTable learn_bit_patterns(std::span<const dataset::Instance> outages) {
  std::map<LabelClass, std::map<std::size_t, std::uint32_t>> common;  // AND over a class's outages
  std::map<LabelClass, std::map<std::size_t, std::uint32_t>> any;     // OR over a class's outages
  for (const auto& o : outages) {
    if (!o.label || *o.label == LabelClass::Unlabeled) continue;
    const auto flips = outage_flips(o);
    if (std::all_of(flips.begin(), flips.end(), [](const auto& s) { return s.mask == 0; })) continue;
    const bool first = !common.contains(*o.label);
    auto& c = common[*o.label];
    auto& a = any[*o.label];
    for (const auto& s : flips) {
      c[s.device] = first ? s.mask : (c[s.device] & s.mask);
      a[s.device] |= s.mask;
    }
  }
  BitPatternTable table;
  for (const auto& [cls, masks] : common) {
    std::vector<BitSignature> sigs;
    for (auto [device, mask] : masks) {
      std::uint32_t keep = mask;
      for (const auto& [other, other_masks] : any) {
        if (other == cls) continue;
        if (auto it = other_masks.find(device); it != other_masks.end()) keep &= ~it->second;
      }
      if (keep) sigs.push_back({device, keep});
    }
    if (!sigs.empty()) table.signatures[cls] = std::move(sigs);
  }
  return table;
}

LabelClass bit_label(const dataset::Instance& outage, const BitPatternTable& table) {
  const auto flips = outage_flips(outage);
  std::optional<LabelClass> match;
  for (const auto& [cls, sigs] : table.signatures) {
    const bool all = std::all_of(sigs.begin(), sigs.end(), [&](const BitSignature& s) {
      auto it = std::find_if(flips.begin(), flips.end(), [&](const auto& f) { return f.device == s.device; });
      return it != flips.end() && (it->mask & s.mask) == s.mask;
    });
    if (!all) continue;
    if (match) return LabelClass::Unlabeled;
    match = cls;
  }
  return match.value_or(LabelClass::Unlabeled);
}

Json to_json(const BitPatternTable& t, const DeviceCatalog& catalog) {
  Json classes = Json::object();
  for (const auto& [cls, sigs] : t.signatures) {
    Json arr = Json::array();
    for (const auto& s : sigs)
      arr.push_back({{"device", s.device},
                     {"name", s.device < catalog.size() ? catalog.devices[s.device].name : std::string()},
                     {"mask", s.mask}});
    classes[std::string(to_string(cls))] = arr;
  }
  return {{"version", kSchemaVersion}, {"window_ticks", kBitWindowTicks}, {"signatures", classes}};
}

BitPatternTable bit_table_from_json(const Json& j) {
  try {
    if (require(j, "version").get<int>() > kSchemaVersion)
      throw Error(ErrorCode::UnsupportedVersion, "bit table version not supported");
    BitPatternTable t;
    for (const auto& [name, arr] : require(j, "signatures").items()) {
      auto cls = label_class_from_string(name);
      if (!cls) throw Error(ErrorCode::Format, "unknown class in bit table: " + name);
      auto& sigs = t.signatures[*cls];
      for (const auto& s : arr) sigs.push_back({s.at("device").get<std::size_t>(), s.at("mask").get<std::uint32_t>()});
    }
    return t;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed bit table: ") + e.what());
  }
}

std::size_t ConsistencyMatrix::total() const {
  std::size_t t = 0;
  for (const auto& r : counts) t += std::accumulate(r.begin(), r.end(), std::size_t{0});
  return t;
}

std::size_t ConsistencyMatrix::jointly_labeled() const {
  const auto u = static_cast<std::size_t>(LabelClass::Unlabeled);
  std::size_t t = 0;
  for (std::size_t a = 0; a < u; ++a)
    for (std::size_t b = 0; b < u; ++b) t += counts[a][b];
  return t;
}

double ConsistencyMatrix::diagonal_fraction() const {
  const auto joint = jointly_labeled();
  if (joint == 0) return 0.0;
  std::size_t d = 0;
  for (std::size_t a = 0; a < static_cast<std::size_t>(LabelClass::Unlabeled); ++a) d += counts[a][a];
  return static_cast<double>(d) / static_cast<double>(joint);
}

ConsistencyMatrix compare_labelers(std::span<const dataset::Instance> outages, const ForestModel& forest,
                                   const BitPatternTable& table) {
  ConsistencyMatrix m;
  for (const auto& o : outages) {
    const auto rf = classify_forest(forest, outage_features(o)).label;
    const auto bits = bit_label(o, table);
    ++m.counts[static_cast<std::size_t>(rf)][static_cast<std::size_t>(bits)];
  }
  return m;
}

Json to_json(const ConsistencyMatrix& m) {
  Json classes = Json::array();
  for (std::size_t c = 0; c < kNumLabelClasses; ++c) classes.push_back(std::string(to_string(static_cast<LabelClass>(c))));
  return {{"version", kSchemaVersion},
          {"classes", classes},
          {"rows", "forest"},
          {"columns", "bits"},
          {"counts", m.counts},
          {"total", m.total()},
          {"jointly_labeled", m.jointly_labeled()},
          {"diagonal_fraction", m.diagonal_fraction()}};
}

}  // namespace ps::label
