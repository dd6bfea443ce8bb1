#pragma once

#include <filesystem>
#include <vector>

#include "latcast/xapp.hpp"

// Actual-vs-predicted plot emission: a static, self-contained SVG with the
// two aligned series over ts_ms, plus a tidy CSV mirroring the plotted points
// exactly.

namespace latcast {

// Throws std::invalid_argument when rows is empty.
void write_plot_svg(const std::filesystem::path& path,
                    const std::vector<ForecastRow>& rows);

// Header ts_ms,actual_latency_ms,predicted_latency_ms; one row per plotted
// point.
void write_tidy_csv(const std::filesystem::path& path,
                    const std::vector<ForecastRow>& rows);

}  // namespace latcast
