// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ps/detect.hpp"
#include "ps/error.hpp"
#include "ps/forecast.hpp"
#include "ps/hour_frame_io.hpp"
#include "ps/label.hpp"
#include "ps/preprocess.hpp"
#include "ps/replay.hpp"
#include "ps/synth.hpp"

using namespace ps;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared corpora

struct Extracted {
  synth::GroundTruth truth;
  DeviceCatalog catalog;
  std::vector<dataset::Instance> outages;
  std::vector<dataset::Instance> non_outages;
  std::vector<HourFrame> frames;  // preprocessed, only when kept
};

Extracted generate_and_extract(const synth::SynthConfig& cfg, bool keep_frames = false) {
  synth::CorpusGenerator gen(cfg);
  dataset::InstanceExtractor ex;
  Extracted out;
  for (int h = 0; h < cfg.hours; ++h) {
    auto f = preprocess_frame(gen.hour(h));
    ex.push(f, "hour_" + std::to_string(h));
    if (keep_frames) out.frames.push_back(std::move(f));
  }
  ex.finish();
  out.truth = gen.truth();
  out.catalog = gen.catalog();
  out.outages = ex.take_outages();
  out.non_outages = ex.take_non_outages();
  dataset::attach_labels(out.outages, out.truth);
  return out;
}

// Corpus for the prediction criteria: 80% of outages carry a 2-4 s precursor.
synth::SynthConfig precursor_config() {
  auto cfg = synth::default_config();
  cfg.hours = 800;
  cfg.outage_rate_per_hour = 0.5;
  cfg.abrupt_fraction = 0.2;
  // A large slow sinusoid lets the network key on baseline levels instead of
  // precursors, which shows up as confident alarms on quiet non-outage crops.
  cfg.sinusoid_amplitude = 0.5;
  cfg.seed = 5;
  for (auto& t : cfg.templates) t.max_duration_ticks = std::min<std::int64_t>(t.max_duration_ticks, 1800);
  return cfg;
}

struct PredictionSetup {
  Extracted data;
  std::vector<dataset::Instance> train, val, test;
  std::set<std::int64_t> precursor_drops;  // global drop ticks of precursor-bearing events
  double setup_seconds = 0.0;
};

constexpr int kTrainStride = 10;

PredictionSetup& prediction_setup() {
  static PredictionSetup s = [] {
    const auto t0 = Clock::now();
    PredictionSetup p;
    p.data = generate_and_extract(precursor_config());
    for (const auto& e : p.data.truth.events)
      if (e.precursor_lead_ticks > 0) p.precursor_drops.insert(e.event.start_tick);
    std::vector<dataset::Instance> all = p.data.outages;
    all.insert(all.end(), p.data.non_outages.begin(), p.data.non_outages.end());
    const auto m = dataset::split_instances(all, {0.6, 0.15, 0.25}, 3);
    p.train = dataset::select(all, m, dataset::Split::Train);
    p.val = dataset::select(all, m, dataset::Split::Val);
    p.test = dataset::select(all, m, dataset::Split::Test);
    p.setup_seconds = seconds_since(t0);
    return p;
  }();
  return s;
}

forecast::TrainedModel train_lstm(const PredictionSetup& p, int gap) {
  auto spec = forecast::ModelSpec::lstm(p.data.catalog.count(DeviceKind::Reading), 30, 60, 25, 2);
  spec.gap = gap;
  const auto tw = dataset::make_windows(p.train, spec.geometry(kTrainStride));
  const auto vw = dataset::make_windows(p.val, spec.geometry(kTrainStride));
  forecast::TrainConfig tc;  // default recipe
  tc.seed = 1;
  return forecast::train(spec, tw, vw, tc);
}

struct EarlyCount {
  std::size_t precursor_outages = 0;
  std::size_t precursor_early = 0;
  std::size_t n_early = 0;
  std::size_t non_outages = 0;
  std::size_t false_positives = 0;
};

EarlyCount count_early(const detect::Forecaster& m, const PredictionSetup& p, const dataset::Geometry& g) {
  const auto report = detect::evaluate(m, p.test, g, 0.5);
  EarlyCount c;
  c.n_early = report.n_early;
  c.non_outages = report.n_non_outages;
  c.false_positives = report.false_positives;
  for (const auto& i : p.test) {
    if (i.kind != dataset::InstanceKind::Outage) continue;
    if (!p.precursor_drops.contains(i.global_start + *i.drop_offset)) continue;
    ++c.precursor_outages;
    const auto r = detect::detect_on_instance(m, i, g, 0.5);
    c.precursor_early += r.detection->outcome == detect::Outcome::Early;
  }
  return c;
}

std::map<int, forecast::TrainedModel>& gap_models() {
  static std::map<int, forecast::TrainedModel> models;
  return models;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome c1_param_count() {
  const auto n = forecast::param_count(forecast::ModelSpec::lstm(1719, 30, 60, 25, 2));
  return {n == 181'360 && n >= 180'000 && n <= 182'000, fmt("param_count = %zu", n)};
}

Outcome c2_gradients() {
  using forecast::LossKind;
  using forecast::ModelSpec;
  double worst = 0.0;
  std::string where;
  for (int which = 0; which < 3; ++which)
    for (auto loss : {LossKind::MSE, LossKind::MAE, LossKind::BCEL})
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ModelSpec s = which == 0 ? ModelSpec::linear(3, 4, 5)
                    : which == 1 ? ModelSpec::mlp(3, 4, 5, 6)
                                 : ModelSpec::lstm(3, 4, 5, 4, 2);
        if (loss == LossKind::BCEL) s.head = forecast::OutputHead::Logits;
        std::mt19937_64 rng(seed + 100);
        std::normal_distribution<double> nd;
        dataset::WindowSample w;
        w.geometry = {4, 0, 5, 1};
        w.n_features = 3;
        w.lookback.resize(12);
        for (auto& v : w.lookback) v = nd(rng);
        w.target.resize(5);
        for (auto& v : w.target) v = nd(rng) > 0 ? 1.0 : 0.0;
        const double e = forecast::grad_check(s, w, loss, seed);
        if (e > worst) {
          worst = e;
          where = fmt("%s/%s seed %d", std::string(forecast::to_string(s.kind)).c_str(),
                      std::string(forecast::to_string(loss)).c_str(), static_cast<int>(seed));
        }
      }
  return {worst < 1e-4, fmt("max relative error %.3g (%s) over 90 checks", worst, where.c_str())};
}

Outcome c3_extraction() {
  auto cfg = synth::default_config();
  cfg.hours = 24;
  cfg.outage_rate_per_hour = 20.0 / 24.0;
  cfg.fluctuation_rate_per_hour = 40.0 / 24.0;
  cfg.seed = 33;
  const auto d = generate_and_extract(cfg);
  std::set<std::int64_t> truth, found;
  for (const auto& e : d.truth.events) truth.insert(e.event.start_tick);
  for (const auto& o : d.outages) found.insert(o.global_start + *o.drop_offset);
  std::size_t tp = 0;
  for (auto t : found) tp += truth.contains(t);
  const double precision = found.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(found.size());
  const double recall = truth.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
  std::map<std::string, int> per_file;
  for (const auto& n : d.non_outages) ++per_file[n.source_file];
  const bool capped = std::all_of(per_file.begin(), per_file.end(), [](const auto& kv) { return kv.second <= 1; });
  const bool ok = d.catalog.size() == 64 && truth.size() == 20 && d.truth.fluctuations.size() == 40 &&
                  precision == 1.0 && recall == 1.0 && capped && !d.non_outages.empty();
  return {ok, fmt("%zu devices, %zu events, %zu fluctuations, precision %.3f recall %.3f, %zu non-outages in %zu files",
                  d.catalog.size(), truth.size(), d.truth.fluctuations.size(), precision, recall,
                  d.non_outages.size(), per_file.size())};
}

Outcome c4_window_count() {
  auto cfg = synth::default_config();
  cfg.hours = 1;
  cfg.outage_rate_per_hour = 0.0;
  cfg.fluctuation_rate_per_hour = 0.0;
  const auto d = generate_and_extract(cfg);
  if (d.non_outages.empty()) return {false, "no instance to window"};
  const auto& inst = d.non_outages.front();
  int checked = 0;
  bool ok = true;
  for (int lb : {30, 45, 60, 90})
    for (int gap : {0, 15, 30, 60}) {
      const dataset::Geometry g{lb, gap, 60, 1};
      std::int64_t brute = 0;
      for (std::int64_t s = 0; s + lb + gap + 60 <= inst.length(); ++s) ++brute;
      const auto w = dataset::make_windows(inst, g);
      ok = ok && static_cast<std::int64_t>(w.size()) == brute && g.window_count(inst.length()) == brute;
      ++checked;
    }
  return {ok, fmt("%d geometries on a %lld-tick instance", checked, static_cast<long long>(inst.length()))};
}

Outcome c5_end_to_end() {
  const auto t0 = Clock::now();
  auto& p = prediction_setup();
  const auto model = train_lstm(p, 30);
  gap_models()[30] = model;
  const detect::ModelForecaster m(model);
  const auto c = count_early(m, p, model.spec.geometry());
  const double runtime = p.setup_seconds + seconds_since(t0);
  std::size_t n_outages = p.data.outages.size(), with_precursor = 0;
  for (const auto& o : p.data.outages) with_precursor += p.precursor_drops.contains(o.global_start + *o.drop_offset);
  const double share = static_cast<double>(with_precursor) / static_cast<double>(n_outages);
  const double early = static_cast<double>(c.precursor_early) / static_cast<double>(c.precursor_outages);
  const double fp = static_cast<double>(c.false_positives) / static_cast<double>(c.non_outages);
  const bool ok = p.data.catalog.size() == 64 && share >= 0.75 && early >= 0.70 && fp <= 0.20 && runtime <= 900.0;
  return {ok, fmt("early %zu/%zu (%.1f%%), FP %zu/%zu (%.1f%%), precursor share %.1f%%, %d epochs, %.0f s",
                  c.precursor_early, c.precursor_outages, 100 * early, c.false_positives, c.non_outages, 100 * fp,
                  100 * share, static_cast<int>(model.history.size()), runtime)};
}

Outcome c6_gap_trend() {
  const auto t0 = Clock::now();
  auto& p = prediction_setup();
  // Oracle: exact mean time_diff per gap.
  detect::SweepBase base;
  base.spec = forecast::ModelSpec::persistence(p.data.catalog.count(DeviceKind::Reading), 30, 60);
  base.geometry = {30, 30, 60, 1};
  base.test_instances = p.test;
  const detect::ForecasterFactory oracle = [](const detect::CellSetup&, const detect::SweepBase&) {
    return std::make_unique<detect::OracleForecaster>();
  };
  const std::vector<detect::SweepValue> grid{0.0, 30.0, 60.0};
  const auto cells = detect::sweep(detect::SweepKind::Gap, grid, base, oracle);
  const double expected[] = {0.0, -2.0, -4.0};
  bool oracle_ok = cells.size() == 3;
  std::string oracle_txt;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto v = cells[i].ok ? cells[i].report->mean_time_diff_s : std::nullopt;
    oracle_ok = oracle_ok && v && *v == expected[i];
    oracle_txt += fmt("%s%.3f", i ? "/" : "", v.value_or(NAN));
  }
  // Trained LSTM per gap.
  std::vector<EarlyCount> counts;
  for (int gap : {0, 30, 60}) {
    if (!gap_models().contains(gap)) gap_models()[gap] = train_lstm(p, gap);
    const auto& model = gap_models()[gap];
    counts.push_back(count_early(detect::ModelForecaster(model), p, model.spec.geometry()));
  }
  const bool trend = counts[0].n_early <= counts[1].n_early && counts[1].n_early <= counts[2].n_early;
  const double runtime = seconds_since(t0);
  // Precursor-bearing and FP counts are reported alongside, not judged.
  return {oracle_ok && trend && runtime <= 1800.0,
          fmt("oracle mean time_diff %s s; LSTM n_early %zu/%zu/%zu at G=0/30/60 "
              "(precursor-bearing %zu/%zu/%zu of %zu, FP %zu/%zu/%zu); %.0f s",
              oracle_txt.c_str(), counts[0].n_early, counts[1].n_early, counts[2].n_early, counts[0].precursor_early,
              counts[1].precursor_early, counts[2].precursor_early, counts[0].precursor_outages,
              counts[0].false_positives, counts[1].false_positives, counts[2].false_positives, runtime)};
}

Outcome c7_threshold_monotonicity() {
  auto& p = prediction_setup();
  std::vector<std::unique_ptr<detect::Forecaster>> models;
  const auto n = p.data.catalog.count(DeviceKind::Reading);
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    models.push_back(std::make_unique<detect::ModelForecaster>(
        forecast::init_model(forecast::ModelSpec::linear(n, 30, 60), seed)));
  if (gap_models().contains(30)) models.push_back(std::make_unique<detect::ModelForecaster>(gap_models()[30]));
  const auto subset = std::span(p.test).first(std::min<std::size_t>(p.test.size(), 60));
  bool ok = true;
  std::size_t cells = 0;
  for (const auto& m : models) {
    std::size_t det = 0, fp = 0;
    for (int k = 1; k <= 9; ++k) {
      const auto r = detect::evaluate(*m, subset, {30, 30, 60, 1}, k / 10.0);
      ok = ok && r.n_detected >= det && r.false_positives >= fp && r.counters_consistent();
      det = r.n_detected;
      fp = r.false_positives;
      ++cells;
    }
  }
  return {ok, fmt("%zu models x 9 thresholds on %zu instances", models.size(), subset.size())};
}

// Exhaustive single-tree oracle in exact integer arithmetic.
struct OracleTree {
  // Weighted Gini times n, as the fraction num/den.
  struct Frac {
    std::int64_t num, den;
  };
  static Frac weighted(const std::vector<int>& c) {
    std::int64_t n = 0, sq = 0;
    for (int v : c) {
      n += v;
      sq += static_cast<std::int64_t>(v) * v;
    }
    return n == 0 ? Frac{0, 1} : Frac{n * n - sq, n};  // n * gini = n - sq/n
  }
  static Frac add(Frac a, Frac b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  static bool less(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }

  std::vector<double> thresholds;  // in-order split points, for debugging
  // Returns the predicted class index for query q.
  static int predict(const std::vector<double>& x, const std::vector<int>& y, int k, double q) {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int v : y) ++counts[static_cast<std::size_t>(v)];
    const auto majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (x.size() < 2) return majority;
    const Frac parent = weighted(counts);
    if (parent.num == 0) return majority;
    std::vector<double> values(x.begin(), x.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::optional<double> best_thr;
    Frac best{0, 1};
    for (std::size_t j = 0; j + 1 < values.size(); ++j) {
      const double thr = (values[j] + values[j + 1]) / 2.0;
      std::vector<int> l(static_cast<std::size_t>(k), 0), r(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < x.size(); ++i) ++(x[i] <= thr ? l : r)[static_cast<std::size_t>(y[i])];
      const Frac w = add(weighted(l), weighted(r));
      if (!best_thr || less(w, best)) {
        best = w;
        best_thr = thr;
      }
    }
    if (!best_thr || !less(best, parent)) return majority;
    std::vector<double> xs;
    std::vector<int> ys;
    for (std::size_t i = 0; i < x.size(); ++i)
      if ((x[i] <= *best_thr) == (q <= *best_thr)) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    return predict(xs, ys, k, q);
  }
};

Outcome c8_forest() {
  // (a) every 1-D dataset with n <= 6: value patterns with ties, three classes, shuffled order.
  std::size_t datasets = 0, mismatches = 0;
  std::mt19937_64 rng(8);
  for (int n = 1; n <= 6; ++n) {
    for (int pattern = 0; pattern < (1 << (n - 1)); ++pattern) {
      std::vector<double> xv(static_cast<std::size_t>(n));
      for (int i = 1; i < n; ++i) xv[static_cast<std::size_t>(i)] = xv[static_cast<std::size_t>(i) - 1] + ((pattern >> (i - 1)) & 1);
      int total = 1;
      for (int i = 0; i < n; ++i) total *= 3;
      for (int code = 0; code < total; ++code) {
        std::vector<int> yv(static_cast<std::size_t>(n));
        for (int i = 0, c = code; i < n; ++i, c /= 3) yv[static_cast<std::size_t>(i)] = c % 3;
        std::vector<std::size_t> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<double>> feats;
        std::vector<LabelClass> labels;
        for (auto i : perm) {
          feats.push_back({xv[i]});
          labels.push_back(kAssignableClasses[yv[i]]);
        }
        label::ForestConfig cfg;
        cfg.n_estimators = 1;
        cfg.bootstrap = false;
        cfg.max_features = 1;
        const auto forest = label::train_forest(feats, labels, cfg);
        // Oracle class indices follow the forest's (sorted, present-only) class list.
        std::vector<int> yo;
        for (auto l : labels)
          yo.push_back(static_cast<int>(std::find(forest.classes.begin(), forest.classes.end(), l) - forest.classes.begin()));
        std::vector<double> xo;
        for (const auto& f : feats) xo.push_back(f[0]);
        std::vector<double> queries{-1.0, xv.back() + 1.0};
        for (double v = 0.0; v <= xv.back(); v += 0.5) queries.push_back(v);
        for (double q : queries) {
          const auto got = label::classify_forest(forest, std::vector<double>{q}).label;
          const auto want = forest.classes[static_cast<std::size_t>(
              OracleTree::predict(xo, yo, static_cast<int>(forest.classes.size()), q))];
          mismatches += got != want;
        }
        ++datasets;
      }
    }
  }
  // (b) 5-class synthetic outages.
  auto cfg = synth::default_config();
  cfg.hours = 40;
  cfg.outage_rate_per_hour = 2.0;
  cfg.seed = 88;
  const auto d = generate_and_extract(cfg);
  std::vector<std::vector<double>> x;
  std::vector<LabelClass> y;
  for (const auto& o : d.outages) {
    if (!o.label || *o.label == LabelClass::Unlabeled) continue;
    x.push_back(label::outage_features(o));
    y.push_back(*o.label);
  }
  label::CVConfig cv;
  cv.seed = 8;
  const auto r = label::cross_validate(x, y, cv);
  label::ForestConfig fc;
  fc.seed = 8;
  const auto forest = label::train_forest(x, y, fc);
  std::vector<double> times;
  for (const auto& o : std::span(d.outages).first(std::min<std::size_t>(10, d.outages.size()))) {
    const auto t0 = Clock::now();
    const auto f = label::outage_features(o);
    (void)label::classify_forest(forest, f);
    times.push_back(seconds_since(t0));
  }
  const double worst = times.empty() ? INFINITY : *std::max_element(times.begin(), times.end());
  const std::set<LabelClass> classes(y.begin(), y.end());
  const bool ok = mismatches == 0 && x.size() == 80 && classes.size() == 5 && r.accuracy_mean >= 0.95 &&
                  r.macro_f1_mean >= 0.90 && worst <= 0.1;
  return {ok, fmt("(a) %zu datasets, %zu mismatches; (b) %zu outages, %zu classes, accuracy %.3f, macro-F1 %.3f, "
                  "inference max %.4f s",
                  datasets, mismatches, x.size(), classes.size(), r.accuracy_mean, r.macro_f1_mean, worst)};
}

Outcome c9_bit_labeler() {
  auto cfg = synth::default_config();
  cfg.hours = 40;
  cfg.outage_rate_per_hour = 2.0;
  cfg.seed = 99;
  const auto d = generate_and_extract(cfg);
  std::vector<dataset::Instance> learn, apply;
  for (std::size_t i = 0; i < d.outages.size(); ++i) (i % 2 ? apply : learn).push_back(d.outages[i]);
  const auto table = label::learn_bit_patterns(learn);
  std::size_t labeled = 0, wrong = 0, eligible = 0;
  for (const auto& o : apply) {
    if (!o.label || *o.label == LabelClass::Unlabeled) continue;
    ++eligible;
    const auto b = label::bit_label(o, table);
    if (b == LabelClass::Unlabeled) continue;
    ++labeled;
    wrong += b != *o.label;
  }
  std::vector<std::vector<double>> x;
  std::vector<LabelClass> y;
  for (const auto& o : learn) {
    x.push_back(label::outage_features(o));
    y.push_back(o.label.value_or(LabelClass::Unlabeled));
  }
  label::ForestConfig fc;
  fc.seed = 9;
  const auto forest = label::train_forest(x, y, fc);
  const auto m = label::compare_labelers(apply, forest, table);
  const double coverage = eligible ? static_cast<double>(labeled) / static_cast<double>(eligible) : 0.0;
  const bool ok = wrong == 0 && coverage >= 0.9 && m.diagonal_fraction() >= 0.9;
  return {ok, fmt("%zu mislabels, coverage %zu/%zu (%.1f%%), consistency diagonal %.3f over %zu jointly labeled", wrong,
                  labeled, eligible, 100 * coverage, m.diagonal_fraction(), m.jointly_labeled())};
}

Outcome c10_replay() {
  auto cfg = synth::default_config();
  cfg.hours = 2;
  cfg.outage_rate_per_hour = 3.0;
  cfg.seed = 1010;
  synth::CorpusGenerator gen(cfg);
  std::vector<HourFrame> raw, pre;
  for (int h = 0; h < cfg.hours; ++h) {
    raw.push_back(gen.hour(h));
    pre.push_back(preprocess_frame(raw.back()));
  }
  const auto n = gen.catalog().count(DeviceKind::Reading);
  // Linear model fitted briefly on the corpus's own instances.
  auto inst = dataset::extract_outage_instances(pre);
  const auto non = dataset::extract_nonoutage_instances(pre);
  inst.insert(inst.end(), non.begin(), non.end());
  const auto spec = forecast::ModelSpec::linear(n, 30, 60);
  const auto windows = dataset::make_windows(inst, spec.geometry());
  forecast::TrainConfig tc;
  tc.max_epochs = 30;
  tc.learning_rate = 1e-2;
  const detect::ModelForecaster model(forecast::train(spec, windows, windows, tc));

  const std::int64_t ticks = 20'000;
  const auto offline = detect::sliding_alerts(model, pre, spec.geometry(), 0.5, ticks);
  cli::ReplayOptions opts;
  opts.geometry = spec.geometry();
  opts.max_ticks = ticks;
  const auto fast = cli::replay(cli::frames_from_memory(raw), model, opts);
  const bool same = fast.alerts == offline;

  opts.speed = 1.0;
  opts.max_ticks = 900;  // one minute of real time
  const auto live = cli::replay(cli::frames_from_memory(raw), model, opts);
  // Equivalence is only informative when some ticks alarm and others do not.
  const bool mixed = !offline.empty() && static_cast<std::int64_t>(offline.size()) < fast.ticks_processed;
  const bool ok = same && mixed && live.latency_p95_s < 1.0 / 15.0 && live.deadline_misses == 0 &&
                  !live.out_of_order && gen.catalog().size() == 64;
  return {ok, fmt("speed 0: %zu alerts vs %zu offline over %lld ticks (%s); speed 1: p95 %.3f ms, max %.3f ms, %lld deadline misses",
                  fast.alerts.size(), offline.size(), static_cast<long long>(fast.ticks_processed), same ? "identical" : "DIFFERENT", 1e3 * live.latency_p95_s,
                  1e3 * live.latency_max_s, static_cast<long long>(live.deadline_misses))};
}

Outcome c11_round_trips() {
  std::size_t frames = 0, models = 0, forests = 0, failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::mt19937_64 rng(11'000 + static_cast<std::uint64_t>(trial));
    // Frame with random catalog, arbitrary reading bits and NaN holes.
    DeviceCatalog cat;
    cat.tick_rate_hz = 1 + static_cast<std::uint32_t>(rng() % 30);
    const int others = static_cast<int>(rng() % 8);
    for (int i = 0; i < others; ++i)
      cat.devices.push_back({"dev" + std::to_string(i) + std::string(rng() % 5, 'x'), static_cast<DeviceKind>(rng() % 3)});
    for (int i = 0; i < 1 + static_cast<int>(rng() % 2); ++i) cat.devices.push_back({"permit" + std::to_string(i), DeviceKind::Permit});
    std::shuffle(cat.devices.begin(), cat.devices.end(), rng);
    HourFrame f(cat, rng(), static_cast<std::uint32_t>(rng() % 400));
    for (std::size_t d = 0; d < cat.size(); ++d)
      for (auto& v : f.column(d)) {
        const auto kind = cat.devices[d].kind;
        v = kind == DeviceKind::Permit       ? static_cast<float>(rng() % 2)
            : kind == DeviceKind::StatusBits ? static_cast<float>(rng() % kMaxStatusValue)
                                             : std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
        if (rng() % 7 == 0) v = std::nanf("");
      }
    const auto fb = encode_hour_frame(f);
    failures += !(bit_equal(decode_hour_frame(fb), f) && encode_hour_frame(decode_hour_frame(fb)) == fb);
    ++frames;

    // Model with random shape and parameter bits.
    const auto k = 1 + rng() % 5;
    auto spec = trial % 3 == 0   ? forecast::ModelSpec::linear(k, 1 + rng() % 6, 1 + rng() % 6)
                : trial % 3 == 1 ? forecast::ModelSpec::mlp(k, 1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6)
                                 : forecast::ModelSpec::lstm(k, 1 + rng() % 6, 1 + rng() % 6, 1 + rng() % 6,
                                                             1 + rng() % 3);
    spec.gap = static_cast<int>(rng() % 90);
    auto m = forecast::zero_model(spec);
    for (auto& v : m.params) v = std::bit_cast<double>(rng());
    const auto mb = forecast::encode_model(m);
    const auto back = forecast::decode_model(mb);
    failures += !(back.spec == m.spec && back.params.size() == m.params.size() &&
                  std::memcmp(back.params.data(), m.params.data(), m.params.size() * sizeof(double)) == 0 &&
                  forecast::encode_model(back) == mb);
    ++models;

    if (trial % 20 == 0) {
      std::normal_distribution<double> nd;
      std::vector<std::vector<double>> x(30);
      std::vector<LabelClass> y;
      for (auto& row : x) {
        for (int j = 0; j < 3; ++j) row.push_back(nd(rng));
        y.push_back(kAssignableClasses[rng() % 5]);
      }
      label::ForestConfig fc;
      fc.n_estimators = 5;
      const auto forest = label::train_forest(x, y, fc);
      failures += !(label::decode_forest(label::encode_forest(forest)) == forest);
      ++forests;
    }
  }
  return {failures == 0, fmt("%zu frames, %zu models, %zu forests, %zu failures", frames, models, forests, failures)};
}

}  // namespace

// Optional arguments select criteria by number.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 parameter count", c1_param_count},
      {"2 gradient check", c2_gradients},
      {"3 extraction oracle", c3_extraction},
      {"4 window count", c4_window_count},
      {"5 end-to-end prediction", c5_end_to_end},
      {"6 gap trend", c6_gap_trend},
      {"7 threshold monotonicity", c7_threshold_monotonicity},
      {"8 forest labeler", c8_forest},
      {"9 bit labeler", c9_bit_labeler},
      {"10 replay equivalence", c10_replay},
      {"11 round trips", c11_round_trips},
  };
  int failed = 0;
  int run = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.contains(std::atoi(name))) continue;
    ++run;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
