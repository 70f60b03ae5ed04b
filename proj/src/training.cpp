#include "hashodf/training.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/log.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace hashodf {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_head > 0.0) || !(lr_tables > 0.0) || !(lr_global_siren > 0.0)) {
    throw ConfigError("learning rates must be > 0");
  }
  if (!(lambda_c >= 0.0)) throw ConfigError("lambda_c must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("Adam betas must lie in [0, 1) and eps > 0");
  }
}

TrainingSet TrainingSet::subset(std::span<const Eigen::Index> index) const {
  TrainingSet out{Eigen::Matrix3Xd(3, static_cast<Eigen::Index>(index.size())),
                  Eigen::MatrixXd(signals.rows(), static_cast<Eigen::Index>(index.size()))};
  for (std::size_t i = 0; i < index.size(); ++i) {
    out.coords.col(static_cast<Eigen::Index>(i)) = coords.col(index[i]);
    out.signals.col(static_cast<Eigen::Index>(i)) = signals.col(index[i]);
  }
  return out;
}

Gradients Gradients::zeros_like(const FieldModel& model) {
  Gradients g;
  if (const auto* enc = model.encoder()) g.tables.assign(enc->params().size(), 0.0);
  for (const auto& layer : model.layers()) {
    g.head.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                      Eigen::VectorXd::Zero(layer.bias.size())});
  }
  g.w = Eigen::MatrixXd::Zero(model.w().rows(), model.w().cols());
  return g;
}

void Gradients::set_zero() {
  std::fill(tables.begin(), tables.end(), 0.0);
  for (auto& layer : head) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  w.setZero();
}

namespace {

void check_shapes(const TrainingSet& batch, const FieldModel& model, const ObservationModel& obs) {
  if (batch.signals.cols() != batch.coords.cols()) throw InputError("training set: coords/signals count mismatch");
  if (batch.signals.rows() != obs.directions()) throw InputError("training set: signal length != direction count");
  if (obs.basis_size() != model.basis_size()) throw InputError("observation basis size != model K");
  if (batch.size() == 0) throw InputError("empty batch");
}

void check_finite(const TrainingSet& batch) {
  if (!batch.signals.allFinite() || !batch.coords.allFinite()) {
    throw NumericError("non-finite value in training inputs");
  }
}

// Points per forward/backward chunk; keeps cached activations near 64 MiB.
Eigen::Index chunk_points(const FieldModel& model) {
  const auto per_point = static_cast<Eigen::Index>(model.rank()) * (2 * model.config().head.depth + 1);
  return std::clamp<Eigen::Index>((Eigen::Index{1} << 23) / std::max<Eigen::Index>(per_point, 1), 256, 32768);
}

double penalty_value(const FieldModel& model, const ObservationModel& obs, double lambda_c) {
  return lambda_c * (obs.prior.asDiagonal() * model.w().cwiseAbs2()).sum();
}

}  // namespace

LossTerms loss(const TrainingSet& batch, const FieldModel& model, const ObservationModel& obs, double lambda_c) {
  check_shapes(batch, model, obs);
  check_finite(batch);
  const Eigen::MatrixXd aw = obs.op * model.w();
  const Eigen::Index chunk = chunk_points(model);
  double sum = 0.0;
  for (Eigen::Index start = 0; start < batch.size(); start += chunk) {
    const Eigen::Index n = std::min(chunk, batch.size() - start);
    const Eigen::MatrixXd xi = model.basis_columns(batch.coords.middleCols(start, n));
    sum += (batch.signals.middleCols(start, n) - aw * xi).squaredNorm();
  }
  LossTerms terms{sum / static_cast<double>(batch.size()), penalty_value(model, obs, lambda_c)};
  if (!std::isfinite(terms.total())) throw NumericError("loss is not finite");
  return terms;
}

LossTerms backward(const TrainingSet& batch, const FieldModel& model, const ObservationModel& obs, double lambda_c,
                   Gradients& grads) {
  check_shapes(batch, model, obs);
  check_finite(batch);
  grads.set_zero();
  const Eigen::MatrixXd& w = model.w();
  const Eigen::MatrixXd aw = obs.op * w;
  const auto& layers = model.layers();
  const auto& head = model.config().head;
  const bool sine = head.activation == Activation::Sine;
  const double scale = -2.0 / static_cast<double>(batch.size());
  const Eigen::Index chunk = chunk_points(model);

  double sum = 0.0;
  ForwardCache cache;
  for (Eigen::Index start = 0; start < batch.size(); start += chunk) {
    const Eigen::Index n = std::min(chunk, batch.size() - start);
    const Eigen::MatrixXd xi = model.basis_columns(batch.coords.middleCols(start, n), &cache);
    const Eigen::MatrixXd residual = batch.signals.middleCols(start, n) - aw * xi;
    sum += residual.squaredNorm();

    // dL/dC for C = W xi, then W and basis gradients.
    const Eigen::MatrixXd d_coeff = scale * (obs.op.transpose() * residual);
    grads.w.noalias() += d_coeff * xi.transpose();
    Eigen::MatrixXd d_x = w.transpose() * d_coeff;

    for (std::size_t i = layers.size(); i-- > 0;) {
      const Eigen::MatrixXd& z = cache.preacts[i];
      Eigen::MatrixXd d_z;
      if (sine) {
        const double s = i == 0 ? head.omega0 : 1.0;
        d_z = d_x.cwiseProduct((s * (s * z.array()).cos()).matrix());
      } else {
        d_z = d_x.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
      }
      grads.head[i].weight.noalias() += d_z * cache.inputs[i].transpose();
      grads.head[i].bias += d_z.rowwise().sum();
      if (i > 0 || model.hash_encoded()) d_x = layers[i].weight.transpose() * d_z;
    }
    if (const auto* enc = model.encoder()) enc->accumulate_gradient(cache.gathers, d_x, grads.tables);
  }
  grads.w += (2.0 * lambda_c) * (obs.prior.asDiagonal() * w);

  LossTerms terms{sum / static_cast<double>(batch.size()), penalty_value(model, obs, lambda_c)};
  if (!std::isfinite(terms.total())) throw NumericError("loss is not finite");
  return terms;
}

namespace {

struct ParamBlock {
  std::span<double> value;
  std::span<const double> grad;
  double lr;
};

class Adam {
public:
  Adam(const TrainConfig& config) : config_(config) {}

  void step(const std::vector<ParamBlock>& blocks) {
    if (m_.empty()) {
      for (const auto& b : blocks) {
        m_.emplace_back(b.value.size(), 0.0);
        v_.emplace_back(b.value.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto& b = blocks[k];
      auto& m = m_[k];
      auto& v = v_[k];
      const double step = b.lr / c1;
      const double sqrt_c2 = std::sqrt(c2);
      for (std::size_t i = 0; i < b.value.size(); ++i) {
        const double g = b.grad[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        b.value[i] -= step * m[i] / (std::sqrt(v[i]) / sqrt_c2 + config_.eps);
      }
    }
  }

private:
  const TrainConfig& config_;
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

std::vector<ParamBlock> param_blocks(FieldModel& model, const Gradients& grads, const TrainConfig& config) {
  const bool global = !model.hash_encoded();
  const double lr_net = global ? config.lr_global_siren : config.lr_head;
  std::vector<ParamBlock> blocks;
  if (auto* enc = model.encoder()) blocks.push_back({enc->params(), grads.tables, config.lr_tables});
  auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const auto& g = grads.head[i];
    blocks.push_back({{l.weight.data(), static_cast<std::size_t>(l.weight.size())},
                      {g.weight.data(), static_cast<std::size_t>(g.weight.size())}, lr_net});
    blocks.push_back({{l.bias.data(), static_cast<std::size_t>(l.bias.size())},
                      {g.bias.data(), static_cast<std::size_t>(g.bias.size())}, lr_net});
  }
  blocks.push_back({{model.w().data(), static_cast<std::size_t>(model.w().size())},
                    {grads.w.data(), static_cast<std::size_t>(grads.w.size())}, lr_net});
  return blocks;
}

}  // namespace

TrainResult train(const TrainingSet& data, FieldModel& model, const ObservationModel& obs, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw InputError("train: empty dataset");
  check_shapes(data, model, obs);
  check_finite(data);

  const Eigen::Index n = data.size();
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(n)));
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Gradients grads = Gradients::zeros_like(model);
  Adam adam(config);
  const auto blocks = param_blocks(model, grads, config);
  const bool full_batch_in_place = batch == n && !config.shuffle;

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double data_sum = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index count = std::min(batch, n - start);
      if (count < batch && config.drop_last && start > 0) break;
      LossTerms terms;
      if (full_batch_in_place) {
        terms = backward(data, model, obs, config.lambda_c, grads);
      } else {
        const TrainingSet b = data.subset({order.data() + start, static_cast<std::size_t>(count)});
        terms = backward(b, model, obs, config.lambda_c, grads);
      }
      if (!std::isfinite(terms.total()) || !std::isfinite(grads.w.sum())) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", batch offset " +
                                   std::to_string(start) + " (data term " + std::to_string(terms.data) + ")",
                               result.history);
      }
      adam.step(blocks);
      data_sum += terms.data * static_cast<double>(count);
      seen += count;
    }
    EpochRecord record{epoch, data_sum / static_cast<double>(seen), penalty_value(model, obs, config.lambda_c),
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    if (!std::isfinite(record.data_term) || !std::isfinite(record.penalty_term)) {
      throw TrainingDiverged("training diverged at end of epoch " + std::to_string(epoch), result.history);
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record, model);
  }
  return result;
}

double residual_sum_of_squares(const FieldModel& model, const TrainingSet& data, const ObservationModel& obs) {
  return loss(data, model, obs, 0.0).data * static_cast<double>(data.size());
}

double estimate_sigma_e(const FieldModel& model, const TrainingSet& data, const ObservationModel& obs) {
  const double rss = residual_sum_of_squares(model, data, obs);
  const double nm = static_cast<double>(data.size()) * obs.directions();
  const double dof = static_cast<double>(model.basis_size()) * model.rank();
  const double denom = nm - dof > 0.0 ? nm - dof : nm;
  return std::max(rss / denom, 1e-12);
}

double estimate_sigma_w(const FieldModel& model, const Eigen::VectorXd& prior) {
  if (prior.size() != model.w().rows()) throw InputError("prior length != K");
  const double quad = (prior.asDiagonal() * model.w().cwiseAbs2()).sum();
  return std::max(quad / static_cast<double>(model.w().size()), 1e-12);
}

LambdaSelection select_lambda_c(const TrainingSet& slice, const ObservationModel& obs, const FieldModelConfig& model_config,
                                const TrainConfig& budget, std::span<const double> candidates, int holdout_stride) {
  if (candidates.empty()) throw ConfigError("select_lambda_c: no candidates");
  LambdaSelection selection;
  if (candidates.size() == 1) {
    selection.best = candidates.front();
    selection.scores.push_back({candidates.front(), std::nullopt, 0.0});
    return selection;
  }
  if (holdout_stride < 2 || holdout_stride > obs.directions()) throw ConfigError("select_lambda_c: bad holdout stride");

  std::vector<int> train_rows, held_rows;
  for (int i = 0; i < obs.directions(); ++i) {
    (i % holdout_stride == holdout_stride - 1 ? held_rows : train_rows).push_back(i);
  }
  const ObservationModel obs_train = obs.select_rows(train_rows);
  const ObservationModel obs_held = obs.select_rows(held_rows);
  TrainingSet train_set{slice.coords, Eigen::MatrixXd(static_cast<Eigen::Index>(train_rows.size()), slice.size())};
  TrainingSet held_set{slice.coords, Eigen::MatrixXd(static_cast<Eigen::Index>(held_rows.size()), slice.size())};
  for (std::size_t i = 0; i < train_rows.size(); ++i) train_set.signals.row(static_cast<Eigen::Index>(i)) = slice.signals.row(train_rows[i]);
  for (std::size_t i = 0; i < held_rows.size(); ++i) held_set.signals.row(static_cast<Eigen::Index>(i)) = slice.signals.row(held_rows[i]);

  std::vector<double> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::optional<double> best_score;
  for (double lambda : sorted) {
    LambdaCandidateScore entry{lambda, std::nullopt, 0.0};
    try {
      TrainConfig cfg = budget;
      cfg.lambda_c = lambda;
      FieldModel model = init_model(model_config, budget.seed);
      const auto result = train(train_set, model, obs_train, cfg);
      entry.penalty_term = result.history.back().penalty_term;
      const double mse = loss(held_set, model, obs_held, 0.0).data / static_cast<double>(held_rows.size());
      entry.score = mse;
      if (!best_score || mse < *best_score) {
        best_score = mse;
        selection.best = lambda;
      }
    } catch (const NumericError& e) {
      logger().warn("lambda_c candidate {} skipped: {}", lambda, e.what());
    }
    selection.scores.push_back(entry);
  }
  if (!best_score) throw NumericError("select_lambda_c: training failed for every candidate");
  return selection;
}

}  // namespace hashodf
