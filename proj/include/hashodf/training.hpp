#pragma once

#include "hashodf/errors.hpp"
#include "hashodf/field_model.hpp"
#include "hashodf/observation.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace hashodf {

struct TrainConfig {
  int epochs = 3000;
  std::size_t batch_size = 65536;
  /// Adam rate for the MLP head and W in hash-encoded mode.
  double lr_head = 1e-3;
  /// Adam rate for the embedding tables.
  double lr_tables = 1e-2;
  /// Adam rate for every parameter in global (no encoder) mode.
  double lr_global_siren = 1e-6;
  double lambda_c = 1e-6;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool shuffle = true;
  /// Drop the final short batch of each epoch instead of training on it.
  bool drop_last = false;

  void validate() const;
};

/// Masked voxels: normalised coordinates (3 x N) and observed signals (M x N).
struct TrainingSet {
  Eigen::Matrix3Xd coords;
  Eigen::MatrixXd signals;

  Eigen::Index size() const { return coords.cols(); }
  /// Columns `index` of both arrays.
  TrainingSet subset(std::span<const Eigen::Index> index) const;
};

struct LossTerms {
  /// (1/B) sum_i ||y_i - Phi G c(v_i)||^2
  double data = 0.0;
  /// lambda_c * sum_j w_j^T R w_j over the columns of W
  double penalty = 0.0;
  double total() const { return data + penalty; }
};

/// Gradients shaped like the model's parameter groups.
struct Gradients {
  std::vector<double> tables;
  std::vector<DenseLayer> head;
  Eigen::MatrixXd w;

  static Gradients zeros_like(const FieldModel& model);
  void set_zero();
};

/// Regularised objective on a batch. NumericError if inputs or result are not finite.
LossTerms loss(const TrainingSet& batch, const FieldModel& model, const ObservationModel& obs, double lambda_c);

/// Loss and its exact reverse-mode gradient (tables gradient is dense-shaped, sparse-filled).
LossTerms backward(const TrainingSet& batch, const FieldModel& model, const ObservationModel& obs, double lambda_c,
                   Gradients& grads);

struct EpochRecord {
  int epoch = 0;
  /// Sample-weighted mean data term over the epoch's batches.
  double data_term = 0.0;
  /// Penalty at the end of the epoch.
  double penalty_term = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

/// Thrown when the loss becomes NaN/Inf; carries the history up to the failure.
class TrainingDiverged : public NumericError {
public:
  TrainingDiverged(const std::string& what, std::vector<EpochRecord> history)
      : NumericError(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

private:
  std::vector<EpochRecord> history_;
};

using EpochCallback = std::function<void(const EpochRecord&, const FieldModel&)>;

/**
 * Mini-batch Adam with two parameter groups (tables at lr_tables, head+W at lr_head;
 * lr_global_siren for everything in global mode). Deterministic given the seed.
 */
TrainResult train(const TrainingSet& data, FieldModel& model, const ObservationModel& obs, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Residual sum of squares over the whole set.
double residual_sum_of_squares(const FieldModel& model, const TrainingSet& data, const ObservationModel& obs);

/**
 * sigma_e^2 = RSS / (N*M - K*r), floored at 1e-12. K*r, the size of the linear layer the
 * posterior is taken over, is used as the effective degrees of freedom.
 */
double estimate_sigma_e(const FieldModel& model, const TrainingSet& data, const ObservationModel& obs);

/// Method-of-moments sigma_w^2 = vec(W)^T (I (x) R) vec(W) / (K r), floored at 1e-12.
double estimate_sigma_w(const FieldModel& model, const Eigen::VectorXd& prior);

struct LambdaCandidateScore {
  double lambda_c = 0.0;
  /// Held-out predictive MSE; empty when training failed.
  std::optional<double> score;
  double penalty_term = 0.0;
};

struct LambdaSelection {
  double best = 0.0;
  std::vector<LambdaCandidateScore> scores;
};

/**
 * Grid search for lambda_c: trains one model per candidate on the non-held-out
 * directions of `slice` and scores predictive MSE on every `holdout_stride`-th direction.
 * Ties go to the smaller lambda_c; a lone candidate is returned without training.
 */
LambdaSelection select_lambda_c(const TrainingSet& slice, const ObservationModel& obs, const FieldModelConfig& model_config,
                                const TrainConfig& budget, std::span<const double> candidates, int holdout_stride = 5);

}  // namespace hashodf
