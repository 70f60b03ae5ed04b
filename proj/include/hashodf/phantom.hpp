#pragma once

#include "hashodf/dwi.hpp"
#include "hashodf/volume.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace hashodf {

/// Axially symmetric tensor lambda_perp I + (lambda_par - lambda_perp) a a^T with a mixture weight.
struct TensorComponent {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  double lambda_par = 1.7e-3;
  double lambda_perp = 0.3e-3;
  double weight = 1.0;
};

/// Half-open voxel box [lo, hi). Later regions override earlier ones.
struct PhantomRegion {
  std::string name;
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
  std::vector<TensorComponent> tensors;
};

struct PhantomSpec {
  std::array<int, 3> dims{32, 32, 32};
  int directions = 70;
  double b_value = 1000.0;
  /// Mean noiseless signal over noise std; infinity = noiseless.
  double snr = 20.0;
  std::uint64_t seed = 0;
  int lmax = 8;
  int truth_directions = 256;
  /// Replace each voxel's signal by the prediction of its truth coefficients, so the data lie in the SH span.
  bool basis_exact = false;
  std::vector<PhantomRegion> regions;

  /// ConfigError on non-SPD tensors, weights not summing to 1, or empty regions.
  void validate() const;
};

/**
 * Isotropic background (d = 0.8e-3), a slab of fibres along x, a slab along y and their
 * 50/50 crossing, laid out in proportion to `dims` (32^3: y in [6,14), x in [18,26), z in [4,28)).
 */
PhantomSpec default_phantom_spec(std::array<int, 3> dims = {32, 32, 32});

struct Phantom {
  DwiVolume dwi;
  Volume truth;
  Volume noiseless;
  /// Index of the region that owns each voxel.
  std::vector<int> labels;
  double mean_signal = 0.0;
  double noise_sigma = 0.0;
};

/// Deterministic in the spec (including seed). The mask covers every voxel.
Phantom generate_phantom(const PhantomSpec& spec);

void to_json(nlohmann::json& j, const PhantomSpec& s);
/// Strict: unknown keys raise ConfigError.
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

}  // namespace hashodf
