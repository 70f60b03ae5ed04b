#include "hashodf/bench.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/posterior.hpp"
#include "hashodf/sphere.hpp"
#include "hashodf/volume.hpp"

#include <Eigen/Core>

#include <sys/resource.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

namespace hashodf {

TimingStats time_runs(int runs, const std::function<void()>& fn, bool warmup) {
  if (runs < 1) throw ConfigError("benchmark runs must be >= 1");
  if (warmup) fn();
  TimingStats t;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<double> sorted = t.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  t.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  t.min = sorted.front();
  t.max = sorted.back();
  return t;
}

long peak_rss_kib() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return usage.ru_maxrss;
}

nlohmann::json machine_info() {
  char host[256] = {0};
  gethostname(host, sizeof(host) - 1);
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  }
  return {{"host", host},
          {"cpu", cpu},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"eigen_threads", Eigen::nbThreads()},
          {"compiler", __VERSION__}};
}

nlohmann::json to_json(const TimingStats& t) {
  return {{"median_s", t.median}, {"min_s", t.min}, {"max_s", t.max}, {"runs_s", t.seconds}};
}

nlohmann::json to_json(const ThroughputComparison& c) {
  return {{"a", {{"name", c.name_a}, {"timing", to_json(c.a)}, {"voxels_per_s", c.voxels / c.a.median},
                 {"parameters", c.params_a}, {"parameters_touched_per_point", c.touched_a}}},
          {"b", {{"name", c.name_b}, {"timing", to_json(c.b)}, {"voxels_per_s", c.voxels / c.b.median},
                 {"parameters", c.params_b}, {"parameters_touched_per_point", c.touched_b}}},
          {"voxels", c.voxels},
          {"speedup_a_over_b", c.ratio}};
}

namespace {

ThroughputComparison fill(const std::string& name_a, const FieldModel& a, const std::string& name_b, const FieldModel& b,
                          TimingStats ta, TimingStats tb, double voxels) {
  ThroughputComparison c;
  c.name_a = name_a;
  c.name_b = name_b;
  c.a = std::move(ta);
  c.b = std::move(tb);
  c.voxels = voxels;
  c.ratio = c.b.median / c.a.median;
  c.touched_a = a.parameters_touched_per_point();
  c.touched_b = b.parameters_touched_per_point();
  c.params_a = a.parameter_count();
  c.params_b = b.parameter_count();
  return c;
}

}  // namespace

ThroughputComparison bench_train_epoch(const std::string& name_a, const FieldModel& a, const TrainConfig& train_a,
                                       const std::string& name_b, const FieldModel& b, const TrainConfig& train_b,
                                       const TrainingSet& data, const ObservationModel& obs, int runs) {
  if (train_a.batch_size != train_b.batch_size) throw ConfigError("bench_train_epoch: batch sizes must match");
  const auto one_epoch = [&](const FieldModel& model, const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.epochs = 1;
    return [&data, &obs, &model, c] {
      FieldModel copy = model;
      train(data, copy, obs, c);
    };
  };
  TimingStats ta = time_runs(runs, one_epoch(a, train_a));
  TimingStats tb = time_runs(runs, one_epoch(b, train_b));
  return fill(name_a, a, name_b, b, std::move(ta), std::move(tb), static_cast<double>(data.size()));
}

ThroughputComparison bench_inference(const std::string& name_a, const FieldModel& a, const std::string& name_b,
                                     const FieldModel& b, std::array<int, 3> dims, int runs) {
  const std::array<int, 4> d{dims[0], dims[1], dims[2], 1};
  const Mask full(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 1);
  const Eigen::Matrix3Xd coords = masked_coordinates(d, full);
  double sink = 0.0;
  const auto infer = [&](const FieldModel& model) {
    return [&] { sink += model.coefficient_columns(coords)(0, 0); };
  };
  TimingStats ta = time_runs(runs, infer(a));
  TimingStats tb = time_runs(runs, infer(b));
  if (!std::isfinite(sink)) throw NumericError("inference produced non-finite coefficients");
  return fill(name_a, a, name_b, b, std::move(ta), std::move(tb), static_cast<double>(coords.cols()));
}

std::vector<PosteriorTiming> bench_posterior(const std::vector<int>& ranks, int points, int runs) {
  const ShBasisSpec spec(8);
  const auto obs = ObservationModel::create(hemisphere_directions(70), spec, MaternParams{});
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };

  {
    // Correctness gate: block solver against the dense system on a small instance.
    const Eigen::MatrixXd xi = random_matrix(4, 40);
    const Eigen::MatrixXd y = random_matrix(70, 40);
    const auto stats = BasisStatistics::from_basis(xi, y);
    const PosteriorModel post(stats, obs, 0.1, 2.0);
    const Eigen::MatrixXd lambda = assemble_precision_dense(stats.gram, obs, 0.1, 2.0);
    const Eigen::MatrixXd rhs = precision_rhs(stats.cross, obs, 0.1);
    const Eigen::VectorXd dense = lambda.llt().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), rhs.size()));
    const double err = (dense - post.mean_vector()).norm() / dense.norm();
    if (!(err < 1e-8)) throw NumericError("posterior gate failed: block vs dense relative error " + std::to_string(err));
  }

  std::vector<PosteriorTiming> out;
  for (int r : ranks) {
    if (r < 1) throw ConfigError("posterior bench ranks must be >= 1");
    const Eigen::MatrixXd xi = random_matrix(r, points).array().sin().matrix();
    const Eigen::MatrixXd y = random_matrix(70, points);
    PosteriorTiming t;
    t.rank = r;
    t.stats = time_runs(runs, [&] {
      const auto stats = BasisStatistics::from_basis(xi, y);
      const PosteriorModel post(stats, obs, 0.1, 2.0);
      if (!post.mean().allFinite()) throw NumericError("posterior mean not finite");
    });
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace hashodf
