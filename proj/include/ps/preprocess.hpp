#pragma once

#include <span>

#include "ps/core.hpp"

namespace ps {

// Lower bound applied to the per-column standard deviation before scaling.
inline constexpr double kSigmaFloor = 1e-9;

// Forward fill in place: NaNs take the most recent prior value, leading NaNs
// take the first valid value, and an all-NaN column becomes all zeros.
void forward_fill(std::span<float> column);

// Population mean and standard deviation of a column, accumulated in double.
struct ColumnStats {
  double mean = 0.0;
  double stddev = 0.0;
};
ColumnStats column_stats(std::span<const float> column);

// Fill every column, then z-score Reading and Setting columns with the
// frame's own statistics. Permit and StatusBits columns are filled only.
HourFrame preprocess_frame(const HourFrame& frame);

}  // namespace ps
