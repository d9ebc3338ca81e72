#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "manifest/tensor.hpp"

namespace manifest {

using Series = std::vector<std::pair<long, double>>;

// Parses `step<TAB>name<TAB>value` records.
std::map<std::string, Series> read_metrics_log(const std::filesystem::path& path);

// Raw values in light blue, a moving average in dark blue; (3,H,W) in [-1,1].
Tensor render_curve(const Series& series, int width = 320, int height = 180);

// One <name>.png per series plus overview.png; returns the written paths.
std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& log_path,
                                                const std::filesystem::path& out_dir);

}  // namespace manifest
