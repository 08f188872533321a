// Randomized round-trip and invariant checks; every trial is seeded so a
// failure reproduces from the printed trial number.
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "doctest.h"
#include "ps/forecast.hpp"
#include "ps/hour_frame_io.hpp"
#include "ps/label.hpp"
#include "ps/preprocess.hpp"
#include "support.hpp"

using namespace ps;

namespace {

constexpr int kTrials = 60;

DeviceCatalog random_catalog(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n(0, 7), kind(0, 2), permits(1, 2), len(1, 20);
  DeviceCatalog c;
  c.tick_rate_hz = std::uniform_int_distribution<std::uint32_t>(1, 50)(rng);
  const int others = n(rng);
  for (int i = 0; i < others; ++i) {
    std::string name(static_cast<std::size_t>(len(rng)), 'a');
    for (auto& ch : name) ch = static_cast<char>(std::uniform_int_distribution<int>(33, 126)(rng));
    c.devices.push_back({name + "#" + std::to_string(i), static_cast<DeviceKind>(kind(rng))});
  }
  const int p = permits(rng);
  for (int i = 0; i < p; ++i) c.devices.push_back({"permit" + std::to_string(i), DeviceKind::Permit});
  std::shuffle(c.devices.begin(), c.devices.end(), rng);
  return c;
}

// Arbitrary bit patterns in readings and settings; valid values elsewhere; NaN holes everywhere.
HourFrame random_frame(std::mt19937_64& rng) {
  auto cat = random_catalog(rng);
  const auto ticks = std::uniform_int_distribution<std::uint32_t>(0, 300)(rng);
  HourFrame f(cat, rng(), ticks);
  std::bernoulli_distribution hole(0.15);
  for (std::size_t d = 0; d < cat.size(); ++d) {
    for (auto& v : f.column(d)) {
      switch (cat.devices[d].kind) {
        case DeviceKind::Reading:
        case DeviceKind::Setting: v = std::bit_cast<float>(static_cast<std::uint32_t>(rng())); break;
        case DeviceKind::StatusBits: v = static_cast<float>(rng() % kMaxStatusValue); break;
        case DeviceKind::Permit: v = static_cast<float>(rng() % 2); break;
      }
      if (hole(rng)) v = std::nanf("");
    }
  }
  return f;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_CASE("hour frame round trip is bit-exact") {
  for (int trial = 0; trial < kTrials; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial));
    const auto f = random_frame(rng);
    const auto bytes = encode_hour_frame(f);
    const auto back = decode_hour_frame(bytes);
    CHECK(bit_equal(back, f));
    CHECK(encode_hour_frame(back) == bytes);
    // Any strict prefix is rejected.
    const auto cut = std::uniform_int_distribution<std::size_t>(0, bytes.size() - 1)(rng);
    const std::vector<std::byte> prefix(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(decode_hour_frame(prefix), Error);
  }
}

TEST_CASE("model round trip is bit-exact") {
  using namespace forecast;
  for (int trial = 0; trial < kTrials; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(trial));
    std::uniform_int_distribution<int> small(1, 6);
    const auto n = static_cast<std::size_t>(small(rng));
    ModelSpec spec;
    switch (trial % 4) {
      case 0: spec = ModelSpec::persistence(n, small(rng), small(rng)); break;
      case 1: spec = ModelSpec::linear(n, small(rng), small(rng)); break;
      case 2: spec = ModelSpec::mlp(n, small(rng), small(rng), small(rng)); break;
      default: spec = ModelSpec::lstm(n, small(rng), small(rng), small(rng), small(rng)); break;
    }
    spec.gap = small(rng);
    spec.head = rng() % 2 ? OutputHead::Raw : OutputHead::Logits;
    TrainedModel m = zero_model(spec);
    for (auto& p : m.params) p = std::bit_cast<double>(rng());
    for (int e = small(rng); e > 0; --e)
      m.history.push_back({std::bit_cast<double>(rng() >> 2), std::ldexp(1.0, -e), 1e-3 / e});
    m.best_epoch = static_cast<int>(m.history.size()) - 1;
    const auto bytes = encode_model(m);
    const auto back = decode_model(bytes);
    CHECK(back.spec == m.spec);
    CHECK(same_bits(back.params, m.params));
    CHECK(encode_model(back) == bytes);
  }
}

TEST_CASE("forest round trip on random data") {
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(2000 + static_cast<std::uint64_t>(trial));
    std::normal_distribution<double> nd;
    const std::size_t nf = 1 + rng() % 5;
    std::vector<std::vector<double>> x(20 + rng() % 20);
    std::vector<LabelClass> y;
    for (auto& row : x) {
      for (std::size_t j = 0; j < nf; ++j) row.push_back(nd(rng) * 1e3);
      y.push_back(kAssignableClasses[rng() % 5]);
    }
    label::ForestConfig cfg;
    cfg.n_estimators = 7;
    cfg.seed = rng();
    const auto f = label::train_forest(x, y, cfg);
    const auto back = label::decode_forest(label::encode_forest(f));
    CHECK(back == f);
    for (const auto& row : x) CHECK(label::classify_forest(back, row).votes == label::classify_forest(f, row).votes);
  }
}

TEST_CASE("preprocessing invariants") {
  for (int trial = 0; trial < kTrials; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(3000 + static_cast<std::uint64_t>(trial));
    const auto cat = test::small_catalog(3);
    HourFrame f(cat, 0, 50 + static_cast<std::uint32_t>(rng() % 500));
    std::normal_distribution<float> nd(5.0f, 3.0f);
    std::bernoulli_distribution hole(0.3);
    for (std::size_t d = 0; d < cat.size(); ++d)
      for (auto& v : f.column(d)) {
        v = cat.devices[d].kind == DeviceKind::Permit ? 1.0f : cat.devices[d].kind == DeviceKind::StatusBits ? 3.0f : nd(rng);
        if (hole(rng)) v = std::nanf("");
      }
    const auto p = preprocess_frame(f);
    for (std::size_t d = 0; d < cat.size(); ++d) {
      const auto col = p.column(d);
      for (float v : col) CHECK_FALSE(std::isnan(v));
      const auto kind = cat.devices[d].kind;
      if (kind == DeviceKind::Reading || kind == DeviceKind::Setting) {
        const auto s = column_stats(col);
        CHECK(std::abs(s.mean) < 1e-4);
        CHECK(std::abs(s.stddev - 1.0) < 1e-4);
      }
    }
    // Filling is idempotent.
    auto col = std::vector<float>(f.column(0).begin(), f.column(0).end());
    forward_fill(col);
    auto again = col;
    forward_fill(again);
    CHECK(again == col);
  }
}

TEST_CASE("window counts and splits on random shapes") {
  for (int trial = 0; trial < 200; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(4000 + static_cast<std::uint64_t>(trial));
    const dataset::Geometry g{1 + static_cast<int>(rng() % 50), static_cast<int>(rng() % 50),
                              1 + static_cast<int>(rng() % 50), 1 + static_cast<int>(rng() % 9)};
    const std::int64_t len = g.span() + static_cast<std::int64_t>(rng() % 200);
    std::int64_t brute = 0;
    for (std::int64_t s = 0; s + g.span() <= len; s += g.stride) ++brute;
    CHECK(g.window_count(len) == brute);
  }
  for (int trial = 0; trial < 30; ++trial) {
    CAPTURE(trial);
    std::mt19937_64 rng(5000 + static_cast<std::uint64_t>(trial));
    std::vector<dataset::Instance> v(1 + rng() % 60);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i].id = "i" + std::to_string(i);
      v[i].kind = rng() % 3 ? dataset::InstanceKind::Outage : dataset::InstanceKind::NonOutage;
    }
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double b = std::uniform_real_distribution<double>(0.0, 1.0 - a)(rng);
    const auto m = dataset::split_instances(v, {a, b, 1.0 - a - b}, rng());
    std::set<std::string> seen;
    for (auto s : {dataset::Split::Train, dataset::Split::Val, dataset::Split::Test})
      for (const auto& i : dataset::select(v, m, s)) CHECK(seen.insert(i.id).second);
    CHECK(seen.size() == v.size());
  }
}
