#include "ps/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace ps {

void forward_fill(std::span<float> column) {
  const auto first_valid =
      std::find_if(column.begin(), column.end(), [](float v) { return !std::isnan(v); });
  if (first_valid == column.end()) {
    std::fill(column.begin(), column.end(), 0.0f);
    return;
  }
  float last = *first_valid;
  for (auto& v : column) {
    if (std::isnan(v))
      v = last;
    else
      last = v;
  }
}

ColumnStats column_stats(std::span<const float> column) {
  ColumnStats s;
  if (column.empty()) return s;
  double sum = 0.0;
  for (float v : column) sum += v;
  s.mean = sum / static_cast<double>(column.size());
  double sq = 0.0;
  for (float v : column) {
    const double d = v - s.mean;
    sq += d * d;
  }
  s.stddev = std::sqrt(sq / static_cast<double>(column.size()));
  return s;
}

HourFrame preprocess_frame(const HourFrame& frame) {
  if (frame.n_ticks == 0) throw Error(ErrorCode::Invariant, "cannot preprocess an empty frame");
  if (frame.values.size() != frame.n_devices() * std::size_t{frame.n_ticks})
    throw Error(ErrorCode::Invariant, "value matrix does not match catalog width x n_ticks");

  HourFrame out = frame;
  for (std::size_t d = 0; d < out.n_devices(); ++d) {
    auto col = out.column(d);
    forward_fill(col);
    const auto kind = out.catalog.devices[d].kind;
    if (kind != DeviceKind::Reading && kind != DeviceKind::Setting) continue;
    const auto stats = column_stats(col);
    const double scale = std::max(stats.stddev, kSigmaFloor);
    for (auto& v : col) v = static_cast<float>((v - stats.mean) / scale);
  }
  return out;
}

}  // namespace ps
