#include "hashodf/field_model.hpp"

#include "hashodf/errors.hpp"
#include "hashodf/sh_basis.hpp"

#include <cmath>
#include <random>

namespace hashodf {

std::string to_string(Activation a) { return a == Activation::Sine ? "sine" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "sine") return Activation::Sine;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + name + "' (expected sine or relu)");
}

void MlpHeadConfig::validate() const {
  if (depth < 1) throw ConfigError("MLP head depth must be >= 1");
  if (width < 1) throw ConfigError("MLP head width must be >= 1");
  if (activation == Activation::Sine && !(omega0 > 0.0)) throw ConfigError("omega0 must be > 0 for sine heads");
}

void FieldModelConfig::validate() const {
  if (encoder) encoder->validate();
  head.validate();
  ShBasisSpec check(lmax);
  (void)check;
}

FieldModel::FieldModel(FieldModelConfig config, std::optional<HashGridState> encoder, std::vector<DenseLayer> layers,
                       Eigen::MatrixXd w)
    : config_(std::move(config)), encoder_(std::move(encoder)), layers_(std::move(layers)), w_(std::move(w)) {
  config_.validate();
  if (config_.encoder.has_value() != encoder_.has_value()) {
    throw ConfigError("field model: encoder state does not match the configured mode");
  }
  if (static_cast<int>(layers_.size()) != config_.head.depth) throw ConfigError("field model: layer count != depth");
  Eigen::Index in = config_.input_width();
  for (const auto& layer : layers_) {
    if (layer.weight.cols() != in || layer.weight.rows() != config_.head.width || layer.bias.size() != layer.weight.rows()) {
      throw ConfigError("field model: head layer shapes inconsistent with configuration");
    }
    in = layer.weight.rows();
  }
  if (w_.rows() != sh_basis_size(config_.lmax) || w_.cols() != config_.rank()) {
    throw ConfigError("field model: W must be K x r");
  }
}

Eigen::MatrixXd FieldModel::basis_columns(const Eigen::Matrix3Xd& coords, ForwardCache* cache) const {
  Eigen::MatrixXd x;
  if (encoder_) {
    x = encoder_->encode_batch(coords, cache ? &cache->gathers : nullptr);
  } else {
    x = coords;
  }
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  const bool sine = config_.head.activation == Activation::Sine;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].weight * x;
    z.colwise() += layers_[i].bias;
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->preacts.push_back(z);
    }
    if (sine) {
      const double scale = i == 0 ? config_.head.omega0 : 1.0;
      x = (scale * z.array()).sin().matrix();
    } else {
      x = z.cwiseMax(0.0);
    }
  }
  if (cache) cache->basis = x;
  return x;
}

Eigen::MatrixXd FieldModel::coefficient_columns(const Eigen::Matrix3Xd& coords) const {
  constexpr Eigen::Index kChunk = 2048;
  Eigen::MatrixXd out(w_.rows(), coords.cols());
  for (Eigen::Index start = 0; start < coords.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, coords.cols() - start);
    out.middleCols(start, n).noalias() = w_ * basis_columns(coords.middleCols(start, n));
  }
  return out;
}

std::size_t FieldModel::head_parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

std::size_t FieldModel::parameter_count() const {
  return head_parameter_count() + static_cast<std::size_t>(w_.size()) + (encoder_ ? encoder_->params().size() : 0);
}

std::size_t FieldModel::parameters_touched_per_point() const {
  std::size_t n = head_parameter_count() + static_cast<std::size_t>(w_.size());
  if (encoder_) {
    const auto& c = encoder_->config();
    n += static_cast<std::size_t>(8 * c.n_levels * c.features_per_entry);
  }
  return n;
}

FieldModel init_model(const FieldModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::optional<HashGridState> encoder;
  if (config.encoder) encoder.emplace(*config.encoder, rng);

  const auto& head = config.head;
  const bool sine = head.activation == Activation::Sine;
  std::vector<DenseLayer> layers;
  int in = config.input_width();
  for (int i = 0; i < head.depth; ++i) {
    double bound;
    if (sine) {
      bound = i == 0 ? 1.0 / in : std::sqrt(6.0 / in) / head.omega0;
    } else {
      bound = std::sqrt(6.0 / in);
    }
    std::uniform_real_distribution<double> wdist(-bound, bound);
    std::uniform_real_distribution<double> bdist(-1.0 / std::sqrt(in), 1.0 / std::sqrt(in));
    DenseLayer layer{Eigen::MatrixXd(head.width, in), Eigen::VectorXd(head.width)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = wdist(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = sine ? bdist(rng) : 0.0;
    layers.push_back(std::move(layer));
    in = head.width;
  }

  const int k = sh_basis_size(config.lmax);
  const double wbound = std::sqrt(6.0 / head.width) / head.omega0;
  std::uniform_real_distribution<double> wdist(-wbound, wbound);
  Eigen::MatrixXd w(k, head.width);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = wdist(rng);
  }
  return FieldModel(config, std::move(encoder), std::move(layers), std::move(w));
}

Eigen::MatrixXd spatial_basis(const Eigen::Matrix3Xd& coords, const FieldModel& model) {
  return model.basis_columns(coords).transpose();
}

Eigen::MatrixXd coefficients(const Eigen::Matrix3Xd& coords, const FieldModel& model) {
  return model.coefficient_columns(coords).transpose();
}

Eigen::MatrixXd signal_operator(const Eigen::MatrixXd& phi, const Eigen::VectorXd& frt) {
  if (phi.cols() != frt.size()) throw InputError("signal operator: Phi columns != FRT diagonal length");
  return phi * frt.asDiagonal();
}

Eigen::MatrixXd predict_signal(const Eigen::MatrixXd& coeffs, const Eigen::MatrixXd& phi, const Eigen::VectorXd& frt) {
  if (coeffs.cols() != phi.cols()) throw InputError("predict_signal: coefficient width != basis size K");
  return coeffs * signal_operator(phi, frt).transpose();
}

}  // namespace hashodf
