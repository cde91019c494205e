// Command-line entry point. Kept in the library so the dispatcher can be
// exercised in-process; the installed binary is a thin wrapper around run().
#pragma once

#include <string>
#include <vector>

namespace shadeharm::cli {

/// Centralized numeric defaults, dumped by --print-config.
struct RunConfig {
  int k = 32;
  int samples_per_cell = 8;
  double ridge_lambda = 1e-2;
  double fov_deg = 60.0;
  int image_width = 640, image_height = 480;
  int env_width = 64, env_height = 32;
  int grid_w = 16, grid_h = 12;
  double albedo_eps = 1e-3;
  int window_radius = 2;
  double scale_min = 0.3, scale_max = 0.8;
  int threads = 1;
};

/// Dispatch argv (without the program name). Returns 0 on success, 2 on
/// input errors (bad flags, malformed files, shape mismatches), 1 on
/// internal errors.
int run(const std::vector<std::string>& args);

}  // namespace shadeharm::cli
