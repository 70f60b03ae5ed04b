#pragma once

#include "hashodf/field_model.hpp"
#include "hashodf/observation.hpp"
#include "hashodf/training.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace hashodf {

struct TimingStats {
  std::vector<double> seconds;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Runs `fn` once to warm up, then `runs` timed times (wall clock).
TimingStats time_runs(int runs, const std::function<void()>& fn, bool warmup = true);

/// Peak resident set size of this process in KiB.
long peak_rss_kib();

/// Host, CPU model, compiler and thread count.
nlohmann::json machine_info();

nlohmann::json to_json(const TimingStats& t);

struct ThroughputComparison {
  std::string name_a, name_b;
  TimingStats a, b;
  double voxels = 0.0;
  /// median(b) / median(a): how many times faster A is.
  double ratio = 0.0;
  std::size_t touched_a = 0, touched_b = 0;
  std::size_t params_a = 0, params_b = 0;
};

nlohmann::json to_json(const ThroughputComparison& c);

/// One training epoch (fresh copy of each model) on identical data and batch size.
ThroughputComparison bench_train_epoch(const std::string& name_a, const FieldModel& a, const TrainConfig& train_a,
                                       const std::string& name_b, const FieldModel& b, const TrainConfig& train_b,
                                       const TrainingSet& data, const ObservationModel& obs, int runs = 5);

/// Coefficient inference over every voxel of a dims[0] x dims[1] x dims[2] grid.
ThroughputComparison bench_inference(const std::string& name_a, const FieldModel& a, const std::string& name_b,
                                     const FieldModel& b, std::array<int, 3> dims, int runs = 5);

struct PosteriorTiming {
  int rank = 0;
  TimingStats stats;
};

/**
 * Posterior construction (statistics, eigendecomposition, block factorisation, mean) on random
 * bases with N points and K = 45. Before timing, the block solver is checked against the dense
 * solve on a small instance; NumericError if they disagree beyond 1e-8.
 */
std::vector<PosteriorTiming> bench_posterior(const std::vector<int>& ranks, int points, int runs = 5);

}  // namespace hashodf
