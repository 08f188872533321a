#include "ps/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "ps/detect.hpp"
#include "ps/error.hpp"
#include "ps/forecast.hpp"
#include "ps/hour_frame_io.hpp"
#include "ps/json_io.hpp"
#include "ps/label.hpp"
#include "ps/preprocess.hpp"
#include "ps/replay.hpp"
#include "ps/synth.hpp"

namespace ps::cli {

namespace fs = std::filesystem;

std::vector<dataset::Instance> load_instance_dir(const fs::path& dir, std::initializer_list<const char*> splits) {
  if (fs::exists(dir / "instances.json")) return dataset::load_instances(dir);
  std::vector<dataset::Instance> all;
  for (const char* s : splits) {
    if (!fs::exists(dir / s / "instances.json")) continue;
    auto part = dataset::load_instances(dir / s);
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  if (all.empty()) throw Error(ErrorCode::Io, "no instances found under " + dir.string());
  return all;
}

namespace {

struct GeometryFlags {
  int lookback = 30;
  int gap = 30;
  int horizon = 60;
  int stride = 1;

  void add(CLI::App* app) {
    app->add_option("--lookback", lookback, "Look-back ticks")->capture_default_str();
    app->add_option("--gap", gap, "Gap ticks")->capture_default_str();
    app->add_option("--horizon", horizon, "Forecast horizon ticks")->capture_default_str();
    app->add_option("--stride", stride, "Training window stride")->capture_default_str();
  }
  dataset::Geometry geometry() const { return {lookback, gap, horizon, stride}; }
};

struct ModelFlags {
  std::string kind = "lstm";
  std::string loss = "mse";
  int hidden = 25;
  int layers = 2;
  int epochs = 500;
  int patience = 10;
  std::size_t batch = 254;
  double lr = 5e-4;

  void add(CLI::App* app) {
    app->add_option("--model", kind, "persistence | linear | mlp | lstm")->capture_default_str();
    app->add_option("--loss", loss, "mse | mae | bcel")->capture_default_str();
    app->add_option("--hidden", hidden, "Hidden units (lstm, mlp)")->capture_default_str();
    app->add_option("--layers", layers, "LSTM layers")->capture_default_str();
    app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    app->add_option("--patience", patience, "Early-stopping patience")->capture_default_str();
    app->add_option("--batch-size", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
  }

  forecast::ModelSpec spec(std::size_t n, const dataset::Geometry& g) const {
    forecast::ModelSpec s;
    switch (forecast::model_kind_from_string(kind)) {
      case forecast::ModelKind::Persistence: s = forecast::ModelSpec::persistence(n, g.lookback, g.horizon); break;
      case forecast::ModelKind::Linear: s = forecast::ModelSpec::linear(n, g.lookback, g.horizon); break;
      case forecast::ModelKind::MLP: s = forecast::ModelSpec::mlp(n, g.lookback, g.horizon, hidden); break;
      case forecast::ModelKind::LSTM: s = forecast::ModelSpec::lstm(n, g.lookback, g.horizon, hidden, layers); break;
    }
    s.gap = g.gap;
    if (forecast::loss_kind_from_string(loss) == forecast::LossKind::BCEL) s.head = forecast::OutputHead::Logits;
    return s;
  }

  forecast::TrainConfig train(std::uint64_t seed) const {
    forecast::TrainConfig c;
    c.loss = forecast::loss_kind_from_string(loss);
    c.max_epochs = epochs;
    c.early_stop.patience = patience;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.seed = seed;
    return c;
  }
};

std::size_t reading_count(const std::vector<dataset::Instance>& v) {
  if (v.empty()) throw Error(ErrorCode::Invariant, "empty instance set");
  return v.front().frame.catalog.count(DeviceKind::Reading);
}

std::vector<dataset::Instance> outages_only(std::vector<dataset::Instance> v) {
  std::erase_if(v, [](const auto& i) { return i.kind != dataset::InstanceKind::Outage; });
  return v;
}

Json events_json(const std::vector<dataset::Instance>& outages, const std::vector<OutageEvent>& events) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto j = to_json(events[i]);
    j["instance"] = outages[i].id;
    arr.push_back(j);
  }
  return {{"version", kSchemaVersion}, {"events", arr}};
}

OutageEvent event_of(const dataset::Instance& o) {
  OutageEvent e;
  e.start_tick = o.global_start + o.drop_offset.value_or(0);
  e.duration_ticks = 0;
  e.raw_label = o.raw_label;
  return e;
}

std::vector<OutageEvent> events_from_json(const Json& doc) {
  const Json& arr = doc.is_array() ? doc : require(doc, "events");
  std::vector<OutageEvent> out;
  for (const auto& e : arr) out.push_back(outage_event_from_json(e.contains("event") ? e.at("event") : e));
  return out;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Beam-permit outage forecasting and labeling toolkit", args.empty() ? "psentinel" : args.front()};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Root seed (PS_SEED overrides)")->capture_default_str();

  std::string out_path, data_dir, config_path, instances_dir, model_path, truth_path, forest_path, table_path;
  int hours = 0;
  double threshold = 0.5;
  GeometryFlags geo;
  ModelFlags mf;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic hour-file corpus");
  synth_cmd->add_option("--config", config_path, "Generator config (JSON)");
  synth_cmd->add_option("--hours", hours, "Override the number of hours");
  synth_cmd->add_option("--seed", seed, "Generator seed (overrides the config)");
  synth_cmd->add_option("--out", out_path, "Output directory")->required();

  double f_train = 0.8, f_val = 0.1, f_test = 0.1;
  auto* extract_cmd = app.add_subcommand("extract", "Extract and split outage / non-outage instances");
  extract_cmd->add_option("--data", data_dir, "Hour-file directory")->required();
  extract_cmd->add_option("--truth", truth_path, "Label source (defaults to <data>/truth.json when present)");
  extract_cmd->add_option("--train", f_train)->capture_default_str();
  extract_cmd->add_option("--val", f_val)->capture_default_str();
  extract_cmd->add_option("--test", f_test)->capture_default_str();
  extract_cmd->add_option("--seed", seed, "Split seed");
  extract_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a permit forecaster");
  train_cmd->add_option("--windows,--instances", instances_dir, "Extract output (train/ and val/)")->required();
  train_cmd->add_option("--out", out_path, "Model file (PSM1)")->required();
  train_cmd->add_option("--seed", seed, "Training seed");
  mf.add(train_cmd);
  geo.add(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on test instances");
  eval_cmd->add_option("--model", model_path, "Model file")->required();
  eval_cmd->add_option("--instances", instances_dir, "Instance store or extract output")->required();
  eval_cmd->add_option("--threshold", threshold)->capture_default_str();
  eval_cmd->add_option("--out", out_path, "Report (JSON)")->required();

  std::string sweep_kind = "threshold";
  std::vector<std::string> grid;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sensitivity sweep over one parameter");
  sweep_cmd->add_option("--kind", sweep_kind, "threshold | lookback | gap | loss")->required();
  sweep_cmd->add_option("--grid", grid, "Grid values")->required()->delimiter(',');
  sweep_cmd->add_option("--windows,--instances", instances_dir, "Extract output")->required();
  sweep_cmd->add_option("--threshold", threshold)->capture_default_str();
  sweep_cmd->add_option("--seed", seed, "Training seed");
  sweep_cmd->add_option("--out", out_path, "Sweep report (JSON)")->required();
  mf.add(sweep_cmd);
  geo.add(sweep_cmd);

  std::size_t n_features = 64;
  std::size_t n_windows = 64;
  int reps = 10, warmup = 3;
  auto* bench_cmd = app.add_subcommand("bench", "Benchmark model size and speed");
  bench_cmd->add_option("--features", n_features, "Reading devices (ignored with --instances)")->capture_default_str();
  bench_cmd->add_option("--windows-per-instance", n_windows, "Synthetic windows per instance")->capture_default_str();
  bench_cmd->add_option("--instances", instances_dir, "Sample instances instead of random windows");
  bench_cmd->add_option("--repetitions", reps)->capture_default_str();
  bench_cmd->add_option("--warmup", warmup)->capture_default_str();
  bench_cmd->add_option("--seed", seed, "Initialisation seed");
  bench_cmd->add_option("--out", out_path, "Bench report (JSON)")->required();
  mf.add(bench_cmd);
  geo.add(bench_cmd);

  int folds = 8, repeats = 10, trees = 200;
  std::string cv_out;
  auto* ltrain_cmd = app.add_subcommand("label-train", "Train the random-forest outage labeler");
  ltrain_cmd->add_option("--instances", instances_dir, "Labeled outage instances")->required();
  ltrain_cmd->add_option("--trees", trees)->capture_default_str();
  ltrain_cmd->add_option("--cv-out", cv_out, "Also cross-validate and write the report here");
  ltrain_cmd->add_option("--folds", folds)->capture_default_str();
  ltrain_cmd->add_option("--repeats", repeats)->capture_default_str();
  ltrain_cmd->add_option("--seed", seed, "Forest seed");
  ltrain_cmd->add_option("--out", out_path, "Forest file (PSF1)")->required();

  auto* lapply_cmd = app.add_subcommand("label-apply", "Label outages with a trained forest");
  lapply_cmd->add_option("--forest", forest_path)->required();
  lapply_cmd->add_option("--instances", instances_dir)->required();
  lapply_cmd->add_option("--out", out_path, "Labeled events (JSON)")->required();

  auto* blearn_cmd = app.add_subcommand("bitlabel-learn", "Learn status-bit signatures per class");
  blearn_cmd->add_option("--instances", instances_dir)->required();
  blearn_cmd->add_option("--out", out_path, "Pattern table (JSON)")->required();

  auto* bapply_cmd = app.add_subcommand("bitlabel-apply", "Label outages from status-bit flips");
  bapply_cmd->add_option("--table", table_path)->required();
  bapply_cmd->add_option("--instances", instances_dir)->required();
  bapply_cmd->add_option("--out", out_path, "Labeled events (JSON)")->required();

  auto* compare_cmd = app.add_subcommand("compare-labelers", "Cross-tabulate forest and bit labels");
  compare_cmd->add_option("--forest", forest_path)->required();
  compare_cmd->add_option("--table", table_path)->required();
  compare_cmd->add_option("--instances", instances_dir)->required();
  compare_cmd->add_option("--out", out_path, "Consistency matrix (JSON)")->required();

  std::string events_path;
  std::size_t bins = 12;
  auto* stats_cmd = app.add_subcommand("stats", "Outage duration histogram by class");
  stats_cmd->add_option("--events", events_path, "truth.json or labeled events")->required();
  stats_cmd->add_option("--bins", bins)->capture_default_str();
  stats_cmd->add_option("--out", out_path, "Histogram (JSON)")->required();

  double speed = 0.0;
  std::int64_t max_ticks = -1;
  auto* replay_cmd = app.add_subcommand("replay", "Stream hour files through a model as if live");
  replay_cmd->add_option("--data", data_dir)->required();
  replay_cmd->add_option("--model", model_path)->required();
  replay_cmd->add_option("--threshold", threshold)->capture_default_str();
  replay_cmd->add_option("--speed", speed, "1 = real time, 0 = unthrottled")->capture_default_str();
  replay_cmd->add_option("--max-ticks", max_ticks, "Stop after this many ticks");
  replay_cmd->add_option("--out", out_path, "Replay stats (JSON)")->required();

  try {
    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  bool seed_given = app.count("--seed") > 0;
  for (auto* sub : app.get_subcommands())
    if (sub->get_option_no_throw("--seed") && sub->count("--seed")) seed_given = true;
  if (const char* env = std::getenv("PS_SEED")) {
    seed_given = true;
    try {
      seed = std::stoull(env);
    } catch (const std::exception&) {
      err << "error: PS_SEED is not an unsigned integer\n";
      return kExitUsage;
    }
  }

  try {
    if (synth_cmd->parsed()) {
      auto cfg = config_path.empty() ? synth::default_config() : synth_config_from_json(load_json(config_path));
      if (hours > 0) cfg.hours = hours;
      if (seed_given) cfg.seed = seed;
      const auto truth = write_corpus(cfg, out_path);
      out << "wrote " << cfg.hours << " hour files and " << truth.events.size() << " outages to " << out_path << "\n";
    } else if (extract_cmd->parsed()) {
      dataset::InstanceExtractor ex;
      for (const auto& file : list_frame_files(data_dir)) ex.push(preprocess_frame(load_hour_frame(file)), file.filename().string());
      ex.finish();
      auto instances = ex.take_outages();
      auto non = ex.take_non_outages();
      std::move(non.begin(), non.end(), std::back_inserter(instances));
      const fs::path truth = truth_path.empty() ? fs::path(data_dir) / "truth.json" : fs::path(truth_path);
      if (fs::exists(truth)) dataset::attach_labels(instances, ground_truth_from_json(load_json(truth)));
      const auto manifest = dataset::split_instances(instances, {f_train, f_val, f_test}, seed);
      fs::create_directories(out_path);
      for (auto split : {dataset::Split::Train, dataset::Split::Val, dataset::Split::Test})
        dataset::save_instances(dataset::select(instances, manifest, split), fs::path(out_path) / to_string(split));
      save_json(to_json(manifest), fs::path(out_path) / "split.json");
      out << "extracted " << instances.size() << " instances\n";
    } else if (train_cmd->parsed()) {
      const auto train_set = load_instance_dir(fs::path(instances_dir) / "train", {});
      const auto val_set = load_instance_dir(fs::path(instances_dir) / "val", {});
      const auto g = geo.geometry();
      const auto spec = mf.spec(reading_count(train_set), g);
      const auto tw = dataset::make_windows(train_set, g);
      const auto vw = dataset::make_windows(val_set, g);
      const auto model = spec.kind == forecast::ModelKind::Persistence ? forecast::zero_model(spec)
                                                                       : forecast::train(spec, tw, vw, mf.train(seed));
      forecast::save_model(model, out_path);
      out << "trained " << to_string(spec.kind) << " for " << model.history.size() << " epochs\n";
    } else if (eval_cmd->parsed()) {
      const detect::ModelForecaster model(forecast::load_model(model_path));
      const auto test = load_instance_dir(instances_dir, {"test"});
      const auto rep = detect::evaluate(model, test, model.model().spec.geometry(), threshold);
      save_json(to_json(rep), out_path);
      out << "detected " << rep.n_detected << "/" << rep.n_outages << " outages, " << rep.false_positives << "/"
          << rep.n_non_outages << " false positives\n";
    } else if (sweep_cmd->parsed()) {
      const auto train_set = load_instance_dir(fs::path(instances_dir) / "train", {});
      const auto val_set = load_instance_dir(fs::path(instances_dir) / "val", {});
      const auto test_set = load_instance_dir(fs::path(instances_dir) / "test", {});
      const auto kind = detect::sweep_kind_from_string(sweep_kind);
      std::vector<detect::SweepValue> values;
      for (const auto& v : grid) {
        if (kind == detect::SweepKind::Loss)
          values.emplace_back(forecast::loss_kind_from_string(v));
        else
          values.emplace_back(std::stod(v));
      }
      auto g = geo.geometry();
      detect::SweepBase base;
      base.spec = mf.spec(reading_count(train_set), g);
      base.train = mf.train(seed);
      base.train_stride = g.stride;
      g.stride = 1;
      base.geometry = g;
      base.threshold = threshold;
      base.train_instances = train_set;
      base.val_instances = val_set;
      base.test_instances = test_set;
      const auto rep = detect::sweep(kind, values, base);
      save_json(to_json(rep), out_path);
      std::size_t failed = 0;
      for (const auto& c : rep) failed += c.ok ? 0 : 1;
      out << "sweep finished: " << rep.size() - failed << " cells ok, " << failed << " failed\n";
    } else if (bench_cmd->parsed()) {
      const auto g = geo.geometry();
      std::vector<dataset::WindowSample> windows;
      if (!instances_dir.empty()) {
        const auto inst = load_instance_dir(instances_dir, {"test", "val", "train"});
        windows = dataset::make_windows(inst.front(), {g.lookback, g.gap, g.horizon, 1});
        n_features = reading_count(inst);
      } else {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        for (std::size_t i = 0; i < n_windows; ++i) {
          dataset::WindowSample w;
          w.geometry = g;
          w.start = static_cast<std::int64_t>(i);
          w.n_features = n_features;
          w.lookback.resize(n_features * static_cast<std::size_t>(g.lookback));
          for (auto& v : w.lookback) v = nd(rng);
          w.target.assign(static_cast<std::size_t>(g.horizon), 1.0);
          windows.push_back(std::move(w));
        }
      }
      const auto spec = mf.spec(n_features, g);
      const auto rep = detect::bench(spec, windows, windows, {warmup, reps, seed});
      save_json(to_json(rep), out_path);
      out << to_string(spec.kind) << ": " << rep.n_parameters << " parameters, " << rep.model_size_bytes << " bytes\n";
    } else if (ltrain_cmd->parsed()) {
      const auto outages = outages_only(load_instance_dir(instances_dir, {"train", "val", "test"}));
      std::vector<std::vector<double>> x;
      std::vector<LabelClass> y;
      for (const auto& o : outages) {
        if (!o.label || *o.label == LabelClass::Unlabeled) continue;
        x.push_back(label::outage_features(o));
        y.push_back(*o.label);
      }
      label::ForestConfig fc;
      fc.n_estimators = trees;
      fc.seed = seed;
      const auto forest = label::train_forest(x, y, fc);
      if (forest.degenerate) err << "warning: only one class present; every tree is a single leaf\n";
      label::save_forest(forest, out_path);
      if (!cv_out.empty()) {
        const auto cv = label::cross_validate(x, y, {folds, repeats, seed, fc});
        save_json(to_json(cv), cv_out);
        out << "cv accuracy " << cv.accuracy_mean << " +- " << cv.accuracy_std << ", macro-F1 " << cv.macro_f1_mean
            << " +- " << cv.macro_f1_std << "\n";
      }
      out << "trained forest on " << x.size() << " labeled outages\n";
    } else if (lapply_cmd->parsed()) {
      const auto forest = label::load_forest(forest_path);
      const auto outages = outages_only(load_instance_dir(instances_dir, {"train", "val", "test"}));
      std::vector<OutageEvent> events;
      for (const auto& o : outages) {
        auto e = event_of(o);
        const auto c = label::classify_forest(forest, label::outage_features(o));
        e.label = c.label;
        e.confidence = c.confidence;
        events.push_back(e);
      }
      save_json(events_json(outages, events), out_path);
      out << "labeled " << events.size() << " outages\n";
    } else if (blearn_cmd->parsed()) {
      const auto outages = outages_only(load_instance_dir(instances_dir, {"train", "val", "test"}));
      const auto table = label::learn_bit_patterns(outages);
      save_json(to_json(table, outages.front().frame.catalog), out_path);
      out << "learned signatures for " << table.signatures.size() << " classes\n";
    } else if (bapply_cmd->parsed()) {
      const auto table = label::bit_table_from_json(load_json(table_path));
      const auto outages = outages_only(load_instance_dir(instances_dir, {"train", "val", "test"}));
      std::vector<OutageEvent> events;
      std::size_t labeled = 0;
      for (const auto& o : outages) {
        auto e = event_of(o);
        e.label = label::bit_label(o, table);
        labeled += *e.label != LabelClass::Unlabeled;
        events.push_back(e);
      }
      save_json(events_json(outages, events), out_path);
      out << "bit-labeled " << labeled << " of " << events.size() << " outages\n";
    } else if (compare_cmd->parsed()) {
      const auto forest = label::load_forest(forest_path);
      const auto table = label::bit_table_from_json(load_json(table_path));
      const auto outages = outages_only(load_instance_dir(instances_dir, {"train", "val", "test"}));
      const auto m = label::compare_labelers(outages, forest, table);
      save_json(to_json(m), out_path);
      out << "diagonal fraction " << m.diagonal_fraction() << " over " << m.jointly_labeled() << " outages\n";
    } else if (stats_cmd->parsed()) {
      const auto doc = load_json(events_path);
      std::vector<OutageEvent> events;
      std::uint32_t rate = kDefaultTickRate;
      if (doc.is_object() && doc.contains("fluctuations")) {
        const auto truth = ground_truth_from_json(doc);
        rate = truth.tick_rate_hz;
        for (const auto& t : truth.events) {
          auto e = t.event;
          if (!e.label && e.raw_label) e.label = canonicalize_label(*e.raw_label);
          events.push_back(e);
        }
      } else {
        events = events_from_json(doc);
      }
      const auto h = detect::outage_stats(events, rate, bins);
      save_json(to_json(h), out_path);
      out << "histogram over " << events.size() << " outages\n";
    } else if (replay_cmd->parsed()) {
      const detect::ModelForecaster model(forecast::load_model(model_path));
      ReplayOptions opt;
      opt.geometry = model.model().spec.geometry();
      opt.threshold = threshold;
      opt.speed = speed;
      if (max_ticks >= 0) opt.max_ticks = max_ticks;
      opt.expected_features = model.model().spec.input_dim;
      const auto stats = replay(frames_from_dir(data_dir), model, opt);
      save_json(to_json(stats), out_path);
      out << "processed " << stats.ticks_processed << " ticks, " << stats.alert_episodes() << " alert episodes, p95 "
          << stats.latency_p95_s * 1e3 << " ms\n";
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitOk;
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace ps::cli
