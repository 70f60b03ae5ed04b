#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hashodf {

/// Geometry of the multiresolution grid-hash encoder.
struct HashGridConfig {
  int n_levels = 14;
  int base_resolution = 6;
  /// Growth factor b between levels. The default puts the finest of 14 levels at
  /// 224 cells starting from 6: (224/6)^(1/13).
  double level_scale = 1.3208004876012468;
  int features_per_entry = 2;
  int log2_table_size = 20;
  bool include_coords = true;

  /// Throws ConfigError unless n >= 1, N_min >= 2, b > 1, F >= 1, 1 <= m <= 30.
  void validate() const;
  /// n*F (+3 with raw coordinates).
  int output_width() const;
};

/// b such that level n-1 has `finest_resolution` cells: (N_max/N_min)^(1/(n-1)).
double level_scale_for_finest(int n_levels, int base_resolution, int finest_resolution);

/// floor(N_min * b^level); IndexError outside [0, n).
int level_resolution(int level, const HashGridConfig& config);

/**
 * Table slot of a grid vertex. Direct row-major indexing when the (N_l+1)^3 vertices
 * fit in 2^m slots, otherwise (x*1 ^ y*2654435761 ^ z*805459861) mod 2^m.
 */
std::uint32_t hash_index(const std::array<std::uint32_t, 3>& grid_coords, int level, const HashGridConfig& config);

/// Per-level slot count: min(2^m, (N_l+1)^3).
std::size_t level_table_entries(int level, const HashGridConfig& config);

/// Total embedding parameters (sum of slots times F).
std::size_t hash_grid_parameter_count(const HashGridConfig& config);

/// Corner slots and trilinear weights gathered for one point at one level.
struct LevelGather {
  std::array<std::uint32_t, 8> slot{};
  std::array<double, 8> weight{};
};

/// One gradient entry touched by a backward pass: level, slot and the F values.
struct TableGradEntry {
  int level = 0;
  std::uint32_t slot = 0;
  std::vector<double> grad;
};

/**
 * Embedding tables for every level, stored contiguously:
 * params()[(offset(l) + slot) * F + f].
 */
class HashGridState {
public:
  HashGridState() = default;
  /// Tables initialised uniform in [-1e-4, 1e-4].
  HashGridState(const HashGridConfig& config, std::mt19937_64& rng);
  /// Restores tables from a flat parameter vector (checkpoint load); FormatError on size mismatch.
  HashGridState(const HashGridConfig& config, std::vector<double> params);

  const HashGridConfig& config() const { return config_; }
  int resolution(int level) const { return resolutions_[static_cast<std::size_t>(level)]; }
  std::size_t offset(int level) const { return offsets_[static_cast<std::size_t>(level)]; }
  std::size_t entries(int level) const {
    return offsets_[static_cast<std::size_t>(level) + 1] - offsets_[static_cast<std::size_t>(level)];
  }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  /// Feature vector of one slot.
  std::span<double> entry(int level, std::uint32_t slot);
  std::span<const double> entry(int level, std::uint32_t slot) const;

  /**
   * Locates the cell around v at every level. The optional `touched` list receives the
   * flat parameter-entry index (offset + slot) of every corner read.
   */
  void gather(const Eigen::Vector3d& v, std::span<LevelGather> out, std::vector<std::size_t>* touched = nullptr) const;

  /// Encoded feature t_v (width config().output_width()).
  void encode(const Eigen::Vector3d& v, std::span<double> out, std::vector<std::size_t>* touched = nullptr) const;
  Eigen::VectorXd encode(const Eigen::Vector3d& v) const;

  /// Encodes a batch of points (columns of `coords`) into columns of the result.
  /// When `gathers` is non-null it receives n_levels records per point for the backward pass.
  Eigen::MatrixXd encode_batch(const Eigen::Matrix3Xd& coords, std::vector<LevelGather>* gathers = nullptr) const;

  /**
   * Sparse gradient of <upstream, encode(v)> w.r.t. the tables: one entry per distinct
   * touched slot, equal to the upstream level slice times that corner's trilinear weight.
   * Zero upstream yields an empty list.
   */
  std::vector<TableGradEntry> encode_gradient(const Eigen::Vector3d& v, std::span<const double> upstream) const;

  /// Scatter-adds the table gradient for precomputed gathers into a dense buffer
  /// shaped like params(). `upstream` holds one column per point (rows >= n*F).
  void accumulate_gradient(std::span<const LevelGather> gathers, const Eigen::MatrixXd& upstream,
                           std::span<double> grad) const;

private:
  HashGridConfig config_;
  std::vector<int> resolutions_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Free-function forms of the encoder operations.
inline Eigen::VectorXd encode(const Eigen::Vector3d& v, const HashGridState& state) { return state.encode(v); }
inline std::vector<TableGradEntry> encode_gradient(const Eigen::Vector3d& v, const HashGridState& state,
                                                   std::span<const double> upstream) {
  return state.encode_gradient(v, upstream);
}

}  // namespace hashodf
