#pragma once

#include "hashodf/encoding.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hashodf {

enum class Activation { Sine, Relu };

std::string to_string(Activation a);
/// Parses "sine" / "relu"; ConfigError otherwise.
Activation parse_activation(const std::string& name);

/// Hidden layers of the coordinate MLP. The last hidden width is the basis rank r.
struct MlpHeadConfig {
  int depth = 2;
  int width = 64;
  Activation activation = Activation::Sine;
  /// Frequency of the first sine layer only.
  double omega0 = 30.0;

  void validate() const;
};

struct FieldModelConfig {
  /// Grid-hash encoder; empty selects the global mode where the head sees raw coordinates.
  std::optional<HashGridConfig> encoder = HashGridConfig{};
  MlpHeadConfig head;
  int lmax = 8;

  void validate() const;
  int input_width() const { return encoder ? encoder->output_width() : 3; }
  int rank() const { return head.width; }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Intermediate values of a batched forward pass, kept for reverse mode.
struct ForwardCache {
  std::vector<LevelGather> gathers;
  /// inputs[i] is the input to layer i (columns = points).
  std::vector<Eigen::MatrixXd> inputs;
  /// preacts[i] = weight * inputs[i] + bias.
  std::vector<Eigen::MatrixXd> preacts;
  /// Spatial basis xi (r x batch).
  Eigen::MatrixXd basis;
};

/**
 * Coefficient field c(v) = W * xi(v), xi(v) = head(encode(v)) or head(v) in global mode.
 *
 * Sine layers compute sin(omega0 * (A x + b)) for the first layer and sin(A x + b)
 * afterwards; ReLU layers compute max(0, A x + b). W is K x r.
 */
class FieldModel {
public:
  FieldModel(FieldModelConfig config, std::optional<HashGridState> encoder, std::vector<DenseLayer> layers,
             Eigen::MatrixXd w);

  const FieldModelConfig& config() const { return config_; }
  bool hash_encoded() const { return encoder_.has_value(); }
  int rank() const { return static_cast<int>(w_.cols()); }
  int basis_size() const { return static_cast<int>(w_.rows()); }

  const HashGridState* encoder() const { return encoder_ ? &*encoder_ : nullptr; }
  HashGridState* encoder() { return encoder_ ? &*encoder_ : nullptr; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const Eigen::MatrixXd& w() const { return w_; }
  Eigen::MatrixXd& w() { return w_; }

  /// Spatial basis with one column per coordinate column (r x batch).
  Eigen::MatrixXd basis_columns(const Eigen::Matrix3Xd& coords, ForwardCache* cache = nullptr) const;
  /// Coefficients with one column per coordinate (K x batch); evaluated in chunks.
  Eigen::MatrixXd coefficient_columns(const Eigen::Matrix3Xd& coords) const;

  std::size_t head_parameter_count() const;
  std::size_t parameter_count() const;
  /// Parameters read to evaluate one point: 8*n*F table values (HashEnc) plus head and W.
  std::size_t parameters_touched_per_point() const;

private:
  FieldModelConfig config_;
  std::optional<HashGridState> encoder_;
  std::vector<DenseLayer> layers_;
  Eigen::MatrixXd w_;
};

/// Seeded initialisation (SIREN family for sine heads, He scaling for ReLU heads).
FieldModel init_model(const FieldModelConfig& config, std::uint64_t seed);

/// xi(v) for each coordinate column; rows of the result are points (batch x r).
Eigen::MatrixXd spatial_basis(const Eigen::Matrix3Xd& coords, const FieldModel& model);

/// c(v) for each coordinate column; rows are points (batch x K).
Eigen::MatrixXd coefficients(const Eigen::Matrix3Xd& coords, const FieldModel& model);

/// Row i = Phi * diag(frt) * coeffs.row(i)^T  (batch x M).
Eigen::MatrixXd predict_signal(const Eigen::MatrixXd& coeffs, const Eigen::MatrixXd& phi, const Eigen::VectorXd& frt);

/// Phi * diag(frt): the linear map from ODF coefficients to predicted signal.
Eigen::MatrixXd signal_operator(const Eigen::MatrixXd& phi, const Eigen::VectorXd& frt);

}  // namespace hashodf
